#pragma once

#include <cstdint>
#include <vector>

#include "posebench/geometry.hpp"
#include "posebench/sphere.hpp"

namespace posebench {

struct CorrespondenceSet {
  std::vector<Vec3> pts3d;   // object-frame points, world units
  std::vector<Vec2> pts2d;   // image points, pixels
  std::vector<double> weights;  // optional per-point weights; empty = uniform

  int size() const { return static_cast<int>(pts3d.size()); }
};

struct RansacConfig {
  int iterations = 100;
  double reproj_threshold = 3.0;  // pixels
  double confidence = 0.99;
  int sample_size = 4;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Pose pose;
  std::vector<std::uint8_t> inliers;  // 1 = member of the winning consensus set
  int inlier_count = 0;
  int iterations_run = 0;
};

// EPnP: 4 control points (3 for planar clouds), barycentric coordinates,
// null space of the 2Nx12 projection system, closed-form beta seeds refined
// by Gauss-Newton, control-point alignment via Procrustes. Returns the
// candidate with the lowest reprojection residual.
Pose epnp_solve(const CorrespondenceSet& c, const CameraIntrinsics& K);

// Hypothesize-and-verify around the minimal EPnP solver. Minimal sample
// index sets are pre-generated from the seed, so the result is independent
// of evaluation order; early exit once the confidence bound is met; the best
// consensus set is refit with the full solver.
RansacResult ransac_pnp(const CorrespondenceSet& c, const CameraIntrinsics& K,
                        const RansacConfig& cfg);

// One correspondence per foreground pixel, row-major: 3d coordinates
// denormalized by the extents (x = c * l - l/2), 2d locations denormalized
// to full-image pixels.
CorrespondenceSet maps_to_correspondences(const GeoMaps& maps, const CameraIntrinsics& K,
                                          const Vec3& extents);

// Uniform-stride reduction to at most max_count correspondences.
CorrespondenceSet subsample_correspondences(const CorrespondenceSet& c, int max_count);

// Root-mean-square pixel residual of the pose over a point subset (all
// points when selection is empty). Points that land behind the camera count
// as an infinite residual.
double reprojection_rms(const CorrespondenceSet& c, const Pose& pose,
                        const CameraIntrinsics& K,
                        const std::vector<std::uint8_t>& selection = {});

}  // namespace posebench
