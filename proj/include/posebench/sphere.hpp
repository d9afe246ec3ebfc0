#pragma once

#include <cstdint>
#include <vector>

#include "posebench/geometry.hpp"

namespace posebench {

inline constexpr int kMapSize = 64;
inline constexpr double kSphereRadius = 1.0;
inline constexpr double kSphereDiameter = 2.0 * kSphereRadius;
inline constexpr int kImageWidth = 640;
inline constexpr int kImageHeight = 480;
inline constexpr int kModelPointCount = 4096;

// The fixed camera every benchmark scene uses.
CameraIntrinsics benchmark_camera();

// Axis-aligned extents of the unit sphere's bounding cube.
Vec3 sphere_extents();

// Canonical surface point set (Fibonacci lattice, kModelPointCount points)
// shared by the region partition, the pose losses, and the metrics.
const std::vector<Vec3>& sphere_model_points();

// Dense geometry maps on a square crop, channel-planar layout:
// plane index c, row y, column x -> c * kMapSize^2 + y * kMapSize + x.
struct GeoMaps {
  std::vector<float> coords3d;        // 3 planes; object coords mapped to [0,1]
  std::vector<float> coords2d;        // 2 planes; image position / (width, height)
  std::vector<std::uint8_t> mask;     // 1 = sphere surface under this pixel
  std::vector<std::uint8_t> regions;  // 0 = background, 1..n = surface region

  static GeoMaps blank();
  int foreground_count() const;
};

struct SphereSample {
  Pose pose;                 // object to camera
  CameraIntrinsics camera;
  BBox detection;            // box the translation encoding is relative to
  GeoMaps maps;
  double diameter = kSphereDiameter;
};

// Corruption applied to the 3d-coordinate planes of a map.
struct NoiseSpec {
  double sigma = 0.0;          // per-channel Gaussian noise on foreground pixels
  double outlier_ratio = 0.0;  // fraction of foreground pixels replaced by U[0,1)
  std::uint64_t seed = 0;
};

// Rotation uniform over SO(3) from a normalized 4d Gaussian quaternion, then
// translation with x, y ~ U[-2, 2] and z ~ U[4, 8].
Pose sample_pose(Rng& rng);

// Tight axis-aligned box around the projected silhouette, from the dual of
// the silhouette conic.
BBox projected_tight_bbox(const Pose& pose, const CameraIntrinsics& K);

// Analytic ray-sphere rendering of the crop at out_size x out_size pixels.
// Background pixels keep zero coords3d and mask; coords2d is filled for the
// whole grid since it only encodes pixel positions.
GeoMaps render_sphere_maps(const Pose& pose, const CameraIntrinsics& K, const BBox& crop,
                           int out_size = kMapSize);

std::vector<Vec3> fibonacci_sphere_points(int n);

// Greedy farthest-point sampling over the candidate set, Euclidean metric.
// The first center is drawn uniformly from the candidates; distance ties
// resolve to the lowest candidate index.
std::vector<Vec3> farthest_point_centers(int n_centers, std::uint64_t seed,
                                         const std::vector<Vec3>& candidates);

// Labels every foreground pixel with 1 + index of the nearest center, read
// back from the stored 3d coordinates.
void assign_regions(GeoMaps& maps, const std::vector<Vec3>& centers);

// Additive Gaussian noise on all foreground coords3d values, then an exact
// floor(ratio * foreground) count of pixels replaced by uniform junk, then a
// clamp to [0,1]. sigma = 0 and ratio = 0 return the input bit-for-bit.
GeoMaps corrupt_maps(const GeoMaps& maps, const NoiseSpec& noise);

struct DatasetOptions {
  int n_regions = 64;
  bool train_mode = true;   // box jitter and per-sample baked-in noise
  double sigma_max = 0.03;
  double outlier_max = 0.3;
};

// Region partition shared by every sample of a dataset.
std::vector<Vec3> dataset_region_centers(std::uint64_t seed, int n_regions);

// Fully determined by (seed, index): two calls always agree bit-for-bit.
SphereSample generate_sample(std::uint64_t seed, std::uint64_t index,
                             const DatasetOptions& opts,
                             const std::vector<Vec3>& region_centers);

std::vector<SphereSample> generate_dataset(int n, std::uint64_t seed,
                                           const DatasetOptions& opts);

// Largest absolute reprojection residual (pixels) over foreground pixels:
// each stored 3d point is pushed through the pose and camera and compared
// against the stored 2d location. The consistency gauge for the renderer.
double reprojection_residual(const SphereSample& sample);

}  // namespace posebench
