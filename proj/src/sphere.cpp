#include "posebench/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>

#include "posebench/parallel.hpp"

namespace posebench {

CameraIntrinsics benchmark_camera() { return {800.0, 800.0, 320.0, 240.0}; }

Vec3 sphere_extents() { return {kSphereDiameter, kSphereDiameter, kSphereDiameter}; }

const std::vector<Vec3>& sphere_model_points() {
  static const std::vector<Vec3> points = fibonacci_sphere_points(kModelPointCount);
  return points;
}

GeoMaps GeoMaps::blank() {
  GeoMaps m;
  const std::size_t px = static_cast<std::size_t>(kMapSize) * kMapSize;
  m.coords3d.assign(3 * px, 0.0f);
  m.coords2d.assign(2 * px, 0.0f);
  m.mask.assign(px, 0);
  m.regions.assign(px, 0);
  return m;
}

int GeoMaps::foreground_count() const {
  int n = 0;
  for (std::uint8_t v : mask) n += v != 0;
  return n;
}

Pose sample_pose(Rng& rng) {
  Pose p;
  p.rot = random_rotation(rng);
  p.t.x() = rng.uniform(-2.0, 2.0);
  p.t.y() = rng.uniform(-2.0, 2.0);
  p.t.z() = rng.uniform(4.0, 8.0);
  return p;
}

BBox projected_tight_bbox(const Pose& pose, const CameraIntrinsics& K) {
  const Vec3& t = pose.t;
  const double r2 = kSphereRadius * kSphereRadius;
  if (t.squaredNorm() <= r2)
    throw DegenerateInput("projected_tight_bbox: camera center inside the sphere");
  if (t.z() <= kSphereRadius)
    throw DegenerateInput("projected_tight_bbox: sphere not fully in front of the camera");

  // Silhouette cone in normalized coordinates: d^T M d = 0 with
  // M = t t^T - (|t|^2 - r^2) I; pixel-space conic via the inverse camera.
  Mat3 Km;
  Km << K.fx, 0.0, K.cx, 0.0, K.fy, K.cy, 0.0, 0.0, 1.0;
  const Mat3 Kinv = Km.inverse();
  const Mat3 M = t * t.transpose() - (t.squaredNorm() - r2) * Mat3::Identity();
  const Mat3 C = Kinv.transpose() * M * Kinv;
  const Mat3 Cdual = C.inverse();  // dual conic up to scale; tangency is scale free

  // Vertical tangent lines (1, 0, -u): a quadratic in u.
  const double du = Cdual(0, 2) * Cdual(0, 2) - Cdual(0, 0) * Cdual(2, 2);
  const double dv = Cdual(1, 2) * Cdual(1, 2) - Cdual(1, 1) * Cdual(2, 2);
  if (du <= 0.0 || dv <= 0.0 || Cdual(2, 2) == 0.0)
    throw DegenerateInput("projected_tight_bbox: silhouette is not a real ellipse");
  const double u0 = (Cdual(0, 2) - std::sqrt(du)) / Cdual(2, 2);
  const double u1 = (Cdual(0, 2) + std::sqrt(du)) / Cdual(2, 2);
  const double v0 = (Cdual(1, 2) - std::sqrt(dv)) / Cdual(2, 2);
  const double v1 = (Cdual(1, 2) + std::sqrt(dv)) / Cdual(2, 2);
  const double xmin = std::min(u0, u1), xmax = std::max(u0, u1);
  const double ymin = std::min(v0, v1), ymax = std::max(v0, v1);
  return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax), xmax - xmin, ymax - ymin};
}

GeoMaps render_sphere_maps(const Pose& pose, const CameraIntrinsics& K, const BBox& crop,
                           int out_size) {
  if (crop.w <= 0.0 || crop.h <= 0.0)
    throw DegenerateInput("render_sphere_maps: crop must have positive size");
  if (out_size != kMapSize)
    throw ShapeMismatch("render_sphere_maps: maps are fixed at 64x64");

  GeoMaps maps = GeoMaps::blank();
  const int S = out_size;
  const std::size_t px = static_cast<std::size_t>(S) * S;
  const Mat3 Rt = pose.rot.transpose();
  const Vec3& t = pose.t;
  const double a_c = t.squaredNorm() - kSphereRadius * kSphereRadius;

  for (int j = 0; j < S; ++j) {
    const double py = crop.cy - 0.5 * crop.h + (j + 0.5) * crop.h / S;
    for (int i = 0; i < S; ++i) {
      const double pxc = crop.cx - 0.5 * crop.w + (i + 0.5) * crop.w / S;
      const std::size_t at = static_cast<std::size_t>(j) * S + i;
      maps.coords2d[at] = static_cast<float>(pxc / kImageWidth);
      maps.coords2d[px + at] = static_cast<float>(py / kImageHeight);

      const Vec3 d((pxc - K.cx) / K.fx, (py - K.cy) / K.fy, 1.0);
      const double a = d.squaredNorm();
      const double b = d.dot(t);
      const double disc = b * b - a * a_c;
      if (disc < 0.0) continue;
      const double lambda = (b - std::sqrt(disc)) / a;  // nearest intersection
      if (lambda <= 0.0) continue;
      const Vec3 hit_obj = Rt * (lambda * d - t);
      maps.mask[at] = 1;
      for (int c = 0; c < 3; ++c) {
        const double v = 0.5 * (hit_obj[c] / kSphereRadius + 1.0);
        maps.coords3d[c * px + at] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  if (maps.foreground_count() == 0)
    throw EmptyMask("render_sphere_maps: crop does not cover the sphere");
  return maps;
}

std::vector<Vec3> fibonacci_sphere_points(int n) {
  if (n < 1) throw DegenerateInput("fibonacci_sphere_points: need at least one point");
  std::vector<Vec3> pts(static_cast<std::size_t>(n));
  const double golden_angle = M_PI * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / n;
    const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double th = golden_angle * k;
    pts[static_cast<std::size_t>(k)] =
        kSphereRadius * Vec3(rad * std::cos(th), rad * std::sin(th), z);
  }
  return pts;
}

std::vector<Vec3> farthest_point_centers(int n_centers, std::uint64_t seed,
                                         const std::vector<Vec3>& candidates) {
  const int m = static_cast<int>(candidates.size());
  if (n_centers < 1) throw DegenerateInput("farthest_point_centers: need at least one center");
  if (n_centers > m)
    throw DegenerateInput("farthest_point_centers: more centers than candidates");

  Rng rng(seed);
  std::vector<Vec3> centers;
  centers.reserve(static_cast<std::size_t>(n_centers));
  std::vector<double> dist2(static_cast<std::size_t>(m),
                            std::numeric_limits<double>::infinity());
  int pick = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(m)));
  for (int round = 0; round < n_centers; ++round) {
    centers.push_back(candidates[static_cast<std::size_t>(pick)]);
    double best = -1.0;
    int arg = 0;
    for (int i = 0; i < m; ++i) {
      const double d2 = (candidates[static_cast<std::size_t>(i)] -
                         centers.back())
                            .squaredNorm();
      double& di = dist2[static_cast<std::size_t>(i)];
      if (d2 < di) di = d2;
      if (di > best) {  // strict: ties keep the lowest index
        best = di;
        arg = i;
      }
    }
    pick = arg;
  }
  return centers;
}

void assign_regions(GeoMaps& maps, const std::vector<Vec3>& centers) {
  if (centers.empty()) throw DegenerateInput("assign_regions: empty center list");
  if (centers.size() > 255)
    throw DegenerateInput("assign_regions: more regions than a byte label can hold");
  const std::size_t px = static_cast<std::size_t>(kMapSize) * kMapSize;
  for (std::size_t at = 0; at < px; ++at) {
    if (!maps.mask[at]) {
      maps.regions[at] = 0;
      continue;
    }
    const Vec3 p(2.0 * maps.coords3d[at] - 1.0, 2.0 * maps.coords3d[px + at] - 1.0,
                 2.0 * maps.coords3d[2 * px + at] - 1.0);
    int arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d2 = (kSphereRadius * p - centers[c]).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = static_cast<int>(c);
      }
    }
    maps.regions[at] = static_cast<std::uint8_t>(1 + arg);
  }
}

GeoMaps corrupt_maps(const GeoMaps& maps, const NoiseSpec& noise) {
  if (noise.sigma < 0.0 || noise.outlier_ratio < 0.0)
    throw DegenerateInput("corrupt_maps: noise parameters must be non-negative");
  if (noise.outlier_ratio > 0.3)
    std::fprintf(stderr,
                 "warning: outlier ratio %.3f exceeds the calibrated range (0.3)\n",
                 noise.outlier_ratio);

  GeoMaps out = maps;
  if (noise.sigma == 0.0 && noise.outlier_ratio == 0.0) return out;

  Rng rng(noise.seed);
  const std::size_t px = static_cast<std::size_t>(kMapSize) * kMapSize;
  std::vector<std::size_t> fg;
  for (std::size_t at = 0; at < px; ++at)
    if (out.mask[at]) fg.push_back(at);

  if (noise.sigma > 0.0) {
    for (const std::size_t at : fg)
      for (int c = 0; c < 3; ++c) {
        const std::size_t idx = c * px + at;
        out.coords3d[idx] =
            static_cast<float>(static_cast<double>(out.coords3d[idx]) +
                               noise.sigma * rng.normal());
      }
  }

  const std::size_t k =
      static_cast<std::size_t>(noise.outlier_ratio * static_cast<double>(fg.size()));
  // Partial Fisher-Yates: the first k entries become the outlier set.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j =
        i + rng.uniform_index(static_cast<std::uint64_t>(fg.size() - i));
    std::swap(fg[i], fg[j]);
    for (int c = 0; c < 3; ++c) out.coords3d[c * px + fg[i]] = static_cast<float>(rng.uniform());
  }

  for (std::size_t at = 0; at < px; ++at) {
    if (!out.mask[at]) continue;
    for (int c = 0; c < 3; ++c) {
      float& v = out.coords3d[c * px + at];
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

std::vector<Vec3> dataset_region_centers(std::uint64_t seed, int n_regions) {
  return farthest_point_centers(n_regions, derive_stream(seed, 0x5245474955ull),
                                sphere_model_points());
}

SphereSample generate_sample(std::uint64_t seed, std::uint64_t index,
                             const DatasetOptions& opts,
                             const std::vector<Vec3>& region_centers) {
  Rng rng(derive_stream(seed, index));
  SphereSample s;
  s.camera = benchmark_camera();
  s.pose = sample_pose(rng);
  const BBox tight = projected_tight_bbox(s.pose, s.camera);
  s.detection = opts.train_mode ? jitter_box(tight, rng) : tight;
  const BBox crop = zoom_square(s.detection);
  s.maps = render_sphere_maps(s.pose, s.camera, crop);
  assign_regions(s.maps, region_centers);
  if (opts.train_mode) {
    NoiseSpec noise;
    noise.sigma = rng.uniform(0.0, opts.sigma_max);
    noise.outlier_ratio = rng.uniform(0.0, opts.outlier_max);
    noise.seed = rng.next_u64();
    s.maps = corrupt_maps(s.maps, noise);
  }
  s.diameter = kSphereDiameter;
  return s;
}

std::vector<SphereSample> generate_dataset(int n, std::uint64_t seed,
                                           const DatasetOptions& opts) {
  const std::vector<Vec3> centers = dataset_region_centers(seed, opts.n_regions);
  std::vector<SphereSample> out(static_cast<std::size_t>(n));
  parallel_for(n, [&](std::int64_t i) {
    out[static_cast<std::size_t>(i)] =
        generate_sample(seed, static_cast<std::uint64_t>(i), opts, centers);
  });
  return out;
}

double reprojection_residual(const SphereSample& sample) {
  const std::size_t px = static_cast<std::size_t>(kMapSize) * kMapSize;
  double worst = 0.0;
  for (std::size_t at = 0; at < px; ++at) {
    if (!sample.maps.mask[at]) continue;
    const Vec3 obj(
        kSphereRadius * (2.0 * sample.maps.coords3d[at] - 1.0),
        kSphereRadius * (2.0 * sample.maps.coords3d[px + at] - 1.0),
        kSphereRadius * (2.0 * sample.maps.coords3d[2 * px + at] - 1.0));
    const Vec2 proj = sample.camera.project(sample.pose.rot * obj + sample.pose.t);
    const Vec2 stored(sample.maps.coords2d[at] * kImageWidth,
                      sample.maps.coords2d[px + at] * kImageHeight);
    worst = std::max(worst, (proj - stored).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace posebench
