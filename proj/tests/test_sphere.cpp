#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "posebench/sphere.hpp"

using namespace posebench;

namespace {

// Reference greedy farthest-point selection, brute force, for tiny inputs.
std::vector<int> fps_oracle(int n_centers, std::uint64_t seed,
                            const std::vector<Vec3>& cand) {
  Rng rng(seed);
  std::vector<int> picks{static_cast<int>(rng.uniform_index(cand.size()))};
  std::vector<double> d2(cand.size(), 1e300);
  while (static_cast<int>(picks.size()) < n_centers) {
    for (std::size_t i = 0; i < cand.size(); ++i)
      d2[i] = std::min(d2[i], (cand[i] - cand[static_cast<std::size_t>(picks.back())]).squaredNorm());
    int arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < cand.size(); ++i)
      if (d2[i] > best) {
        best = d2[i];
        arg = static_cast<int>(i);
      }
    picks.push_back(arg);
  }
  return picks;
}

// Ellipse area from the conic matrix; the oracle for mask pixel counts.
double silhouette_area_px(const Pose& pose, const CameraIntrinsics& K) {
  Mat3 Km;
  Km << K.fx, 0, K.cx, 0, K.fy, K.cy, 0, 0, 1;
  const Mat3 Kinv = Km.inverse();
  const Mat3 M = pose.t * pose.t.transpose() -
                 (pose.t.squaredNorm() - kSphereRadius * kSphereRadius) * Mat3::Identity();
  const Mat3 C = Kinv.transpose() * M * Kinv;
  const double det2 = C(0, 0) * C(1, 1) - C(0, 1) * C(1, 0);
  return M_PI * std::abs(C.determinant()) / std::pow(std::abs(det2), 1.5);
}

// Points on the tangency rim of the sphere seen from the camera center.
std::vector<Vec3> rim_points(const Vec3& t, int n) {
  const double d2 = t.squaredNorm();
  const Vec3 that = t.normalized();
  Vec3 u = that.cross(Vec3(1, 0, 0));
  if (u.norm() < 1e-6) u = that.cross(Vec3(0, 1, 0));
  u.normalize();
  const Vec3 v = that.cross(u);
  const double shrink = kSphereRadius * kSphereRadius / d2;
  const Vec3 center = t * (1.0 - shrink);
  const double rad = kSphereRadius * std::sqrt(1.0 - shrink);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * M_PI * i / n;
    pts.push_back(center + rad * (std::cos(th) * u + std::sin(th) * v));
  }
  return pts;
}

}  // namespace

TEST_SUITE_BEGIN("sphere");

TEST_CASE("benchmark constants") {
  const CameraIntrinsics K = benchmark_camera();
  CHECK(K.fx == 800.0);
  CHECK(K.fy == 800.0);
  CHECK(K.cx == 320.0);
  CHECK(K.cy == 240.0);
  CHECK(sphere_extents() == Vec3(2, 2, 2));
  CHECK(kSphereDiameter == 2.0);
  CHECK(static_cast<int>(sphere_model_points().size()) == kModelPointCount);
}

TEST_CASE("pose sampling covers the advertised ranges deterministically") {
  Rng a(50), b(50);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = sample_pose(a);
    const Pose q = sample_pose(b);
    CHECK(is_rotation(p.rot, 1e-12));
    CHECK(p.t.x() >= -2.0);
    CHECK(p.t.x() <= 2.0);
    CHECK(p.t.y() >= -2.0);
    CHECK(p.t.y() <= 2.0);
    CHECK(p.t.z() >= 4.0);
    CHECK(p.t.z() <= 8.0);
    CHECK((p.rot - q.rot).norm() == 0.0);
    CHECK((p.t - q.t).norm() == 0.0);
  }
}

TEST_CASE("fibonacci lattice: on-sphere, well spread, deterministic") {
  const auto pts = fibonacci_sphere_points(kModelPointCount);
  REQUIRE(static_cast<int>(pts.size()) == kModelPointCount);
  for (const Vec3& p : pts) CHECK(std::abs(p.norm() - kSphereRadius) < 1e-12);

  // Mean spacing for 4096 points is about 0.055; no two points should sit
  // closer than roughly half of that.
  double min_d2 = 1e300;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      min_d2 = std::min(min_d2, (pts[i] - pts[j]).squaredNorm());
  CHECK(std::sqrt(min_d2) > 0.02);

  const auto again = fibonacci_sphere_points(kModelPointCount);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((pts[i] - again[i]).norm() == 0.0);
}

TEST_CASE("farthest point centers match a brute-force oracle") {
  Rng data_rng(51);
  std::vector<Vec3> cand;
  for (int i = 0; i < 40; ++i) {
    Vec3 v(data_rng.normal(), data_rng.normal(), data_rng.normal());
    cand.push_back(v.normalized());
  }
  for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
    const auto centers = farthest_point_centers(10, seed, cand);
    const auto picks = fps_oracle(10, seed, cand);
    REQUIRE(centers.size() == 10);
    for (int i = 0; i < 10; ++i)
      CHECK((centers[static_cast<std::size_t>(i)] -
             cand[static_cast<std::size_t>(picks[static_cast<std::size_t>(i)])])
                .norm() == 0.0);
  }
}

TEST_CASE("farthest point selection: antipodal second pick and tie-breaks") {
  // On a full lattice the farthest candidate from any first pick is close to
  // its antipode.
  const auto& lattice = sphere_model_points();
  const auto two = farthest_point_centers(2, 123, lattice);
  CHECK(two[0].dot(two[1]) < -0.99);

  // Four equatorial candidates: after the first two (a point and its exact
  // antipode) the remaining pair ties; the lower index must win.
  const std::vector<Vec3> square{{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}};
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto c = farthest_point_centers(4, seed, square);
    const auto o = fps_oracle(4, seed, square);
    for (int i = 0; i < 4; ++i)
      CHECK((c[static_cast<std::size_t>(i)] -
             square[static_cast<std::size_t>(o[static_cast<std::size_t>(i)])]).norm() == 0.0);
    // The third pick is always the first unused index (tie resolution).
    std::set<int> used{o[0], o[1]};
    int expected = 0;
    while (used.count(expected)) ++expected;
    CHECK(o[2] == expected);
  }

  CHECK_THROWS_AS(farthest_point_centers(0, 1, square), DegenerateInput);
  CHECK_THROWS_AS(farthest_point_centers(5, 1, square), DegenerateInput);
}

TEST_CASE("tight bbox: exact circle case straight ahead") {
  Pose p;
  p.t = Vec3(0, 0, 4);
  const BBox b = projected_tight_bbox(p, benchmark_camera());
  const double half = 800.0 / std::sqrt(15.0);  // f * r / sqrt(tz^2 - r^2)
  CHECK(std::abs(b.cx - 320.0) < 1e-9);
  CHECK(std::abs(b.cy - 240.0) < 1e-9);
  CHECK(std::abs(b.w - 2.0 * half) < 1e-9);
  CHECK(std::abs(b.h - 2.0 * half) < 1e-9);
}

TEST_CASE("tight bbox hugs the projected rim") {
  Rng rng(52);
  const CameraIntrinsics K = benchmark_camera();
  for (int trial = 0; trial < 200; ++trial) {
    Pose p = sample_pose(rng);
    const BBox b = projected_tight_bbox(p, K);
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const Vec3& rp : rim_points(p.t, 4000)) {
      const Vec2 px = K.project(rp);
      xmin = std::min(xmin, px.x());
      xmax = std::max(xmax, px.x());
      ymin = std::min(ymin, px.y());
      ymax = std::max(ymax, px.y());
    }
    CHECK(std::abs(xmin - b.x_min()) < 1e-3);
    CHECK(std::abs(xmax - b.x_max()) < 1e-3);
    CHECK(std::abs(ymin - b.y_min()) < 1e-3);
    CHECK(std::abs(ymax - b.y_max()) < 1e-3);
  }
  Pose inside;
  inside.t = Vec3(0, 0, 0.5);
  CHECK_THROWS_AS(projected_tight_bbox(inside, K), DegenerateInput);
}

TEST_CASE("rendering: range invariants and reprojection consistency") {
  Rng rng(53);
  const CameraIntrinsics K = benchmark_camera();
  for (int trial = 0; trial < 20; ++trial) {
    SphereSample s;
    s.camera = K;
    s.pose = sample_pose(rng);
    s.detection = projected_tight_bbox(s.pose, K);
    s.maps = render_sphere_maps(s.pose, K, zoom_square(s.detection));
    CHECK(s.maps.foreground_count() > 0);
    const std::size_t px = static_cast<std::size_t>(kMapSize) * kMapSize;
    for (std::size_t at = 0; at < px; ++at) {
      for (int c = 0; c < 3; ++c) {
        const float v = s.maps.coords3d[c * px + at];
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        if (!s.maps.mask[at]) CHECK(v == 0.0f);
      }
    }
    CHECK(reprojection_residual(s) < 0.5);  // in practice about 1e-4 px
  }
}

TEST_CASE("mask depends on the silhouette only, not the rotation") {
  Rng rng(54);
  const CameraIntrinsics K = benchmark_camera();
  Pose a = sample_pose(rng);
  Pose b = a;
  b.rot = random_rotation(rng);
  const BBox crop = zoom_square(projected_tight_bbox(a, K));
  const GeoMaps ma = render_sphere_maps(a, K, crop);
  const GeoMaps mb = render_sphere_maps(b, K, crop);
  CHECK(ma.mask == mb.mask);
  // But the surface coordinates do change with the rotation.
  CHECK(ma.coords3d != mb.coords3d);
}

TEST_CASE("mask pixel count tracks the analytic silhouette area") {
  Rng rng(55);
  const CameraIntrinsics K = benchmark_camera();
  for (int trial = 0; trial < 10; ++trial) {
    const Pose p = sample_pose(rng);
    const BBox crop = zoom_square(projected_tight_bbox(p, K));
    const GeoMaps m = render_sphere_maps(p, K, crop);
    const double area_px = silhouette_area_px(p, K);
    const double pixel_area = (crop.w / kMapSize) * (crop.h / kMapSize);
    const double expected = area_px / pixel_area;
    CHECK(std::abs(m.foreground_count() - expected) / expected < 0.03);
  }
}

TEST_CASE("crop that misses the sphere raises EmptyMask") {
  Pose p;
  p.t = Vec3(0, 0, 5);
  CHECK_THROWS_AS(render_sphere_maps(p, benchmark_camera(), BBox{3000, 3000, 100, 100}),
                  EmptyMask);
  CHECK_THROWS_AS(render_sphere_maps(p, benchmark_camera(), BBox{320, 240, 0, 100}),
                  DegenerateInput);
}

TEST_CASE("corruption: identity, exact outlier count, clamping, determinism") {
  Rng rng(56);
  const CameraIntrinsics K = benchmark_camera();
  const Pose p = sample_pose(rng);
  const GeoMaps clean = render_sphere_maps(p, K, zoom_square(projected_tight_bbox(p, K)));
  const int fg = clean.foreground_count();

  const GeoMaps same = corrupt_maps(clean, {0.0, 0.0, 99});
  CHECK(same.coords3d == clean.coords3d);
  CHECK(same.mask == clean.mask);

  NoiseSpec outliers{0.0, 0.25, 7};
  const GeoMaps dirty = corrupt_maps(clean, outliers);
  const std::size_t px = static_cast<std::size_t>(kMapSize) * kMapSize;
  int changed = 0;
  for (std::size_t at = 0; at < px; ++at) {
    bool moved = false;
    for (int c = 0; c < 3; ++c)
      moved |= dirty.coords3d[c * px + at] != clean.coords3d[c * px + at];
    if (moved) {
      CHECK(clean.mask[at] == 1);  // background pixels stay untouched
      ++changed;
    }
  }
  CHECK(changed == static_cast<int>(0.25 * fg));

  NoiseSpec noisy{0.05, 0.0, 8};
  const GeoMaps fuzzed = corrupt_maps(clean, noisy);
  double mean_abs = 0.0;
  for (std::size_t at = 0; at < px; ++at) {
    if (!clean.mask[at]) continue;
    for (int c = 0; c < 3; ++c) {
      const float v = fuzzed.coords3d[c * px + at];
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      mean_abs += std::abs(static_cast<double>(v) - clean.coords3d[c * px + at]);
    }
  }
  mean_abs /= 3.0 * fg;
  // Half-normal mean is sigma * sqrt(2/pi) = 0.04; clamping bites a little.
  CHECK(mean_abs > 0.02);
  CHECK(mean_abs < 0.06);

  const GeoMaps d2 = corrupt_maps(clean, outliers);
  CHECK(d2.coords3d == dirty.coords3d);

  CHECK_THROWS_AS(corrupt_maps(clean, {-0.1, 0.0, 1}), DegenerateInput);
}

TEST_CASE("region labels: single region and hemisphere split") {
  Rng rng(57);
  const CameraIntrinsics K = benchmark_camera();
  const Pose p = sample_pose(rng);
  SphereSample s;
  s.pose = p;
  s.camera = K;
  s.maps = render_sphere_maps(p, K, zoom_square(projected_tight_bbox(p, K)));

  assign_regions(s.maps, {Vec3(0, 0, 1)});
  const std::size_t px = static_cast<std::size_t>(kMapSize) * kMapSize;
  for (std::size_t at = 0; at < px; ++at)
    CHECK(s.maps.regions[at] == (s.maps.mask[at] ? 1 : 0));

  assign_regions(s.maps, {Vec3(0, 0, 1), Vec3(0, 0, -1)});
  for (std::size_t at = 0; at < px; ++at) {
    if (!s.maps.mask[at]) continue;
    const double z = 2.0 * s.maps.coords3d[2 * px + at] - 1.0;
    if (z > 1e-3) CHECK(s.maps.regions[at] == 1);
    if (z < -1e-3) CHECK(s.maps.regions[at] == 2);
  }
}

TEST_CASE("sample generation is reproducible and mode-dependent") {
  DatasetOptions train_opts;
  const auto centers = dataset_region_centers(42, 64);
  const SphereSample a = generate_sample(42, 5, train_opts, centers);
  const SphereSample b = generate_sample(42, 5, train_opts, centers);
  CHECK(a.maps.coords3d == b.maps.coords3d);
  CHECK(a.maps.regions == b.maps.regions);
  CHECK((a.pose.rot - b.pose.rot).norm() == 0.0);
  CHECK(a.detection.cx == b.detection.cx);

  const SphereSample c = generate_sample(42, 6, train_opts, centers);
  CHECK((a.pose.t - c.pose.t).norm() != 0.0);

  // Test mode: the stored box is exactly the tight silhouette box and the
  // maps are clean.
  DatasetOptions test_opts;
  test_opts.train_mode = false;
  const SphereSample t = generate_sample(43, 0, test_opts, centers);
  const BBox tight = projected_tight_bbox(t.pose, t.camera);
  CHECK(t.detection.cx == tight.cx);
  CHECK(t.detection.w == tight.w);
  CHECK(reprojection_residual(t) < 0.5);

  // Train mode bakes noise in, which the reprojection gauge must notice for
  // most samples; check a batch to avoid relying on one noise draw.
  int noisy_samples = 0;
  for (std::uint64_t i = 0; i < 10; ++i)
    if (reprojection_residual(generate_sample(44, i, train_opts, centers)) > 0.5)
      ++noisy_samples;
  CHECK(noisy_samples >= 8);

  const auto batch = generate_dataset(6, 42, train_opts);
  CHECK(batch.size() == 6);
  CHECK(batch[5].maps.coords3d == generate_sample(42, 5, train_opts, centers).maps.coords3d);
}

TEST_SUITE_END();
