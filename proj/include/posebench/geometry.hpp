#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "posebench/errors.hpp"
#include "posebench/rng.hpp"

namespace posebench {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

// ---------------------------------------------------------------------------
// Rotation parameterizations.
//
// All of them decode to a proper rotation matrix (orthonormal, det +1). The
// 6d form is the continuous representation used by the trained regressor; the
// others exist for the parameterization ablations.
// ---------------------------------------------------------------------------

// First two columns of a rotation matrix, unconstrained. Decoding runs
// Gram-Schmidt, so any pair of non-parallel, non-zero vectors is valid.
struct Rot6d {
  Vec3 r1{Vec3::Zero()};
  Vec3 r2{Vec3::Zero()};
};

// Hamilton convention, scalar first.
struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
};

// axis * angle; the decode treats the norm as the rotation angle in radians.
struct AxisAngle {
  Vec3 v{Vec3::Zero()};
};

// Quaternion logarithm: axis * (angle / 2), norm at most pi/2 for the
// canonical (non-negative scalar) quaternion.
struct LogQuat {
  Vec3 v{Vec3::Zero()};
};

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;

  // Pinhole projection of a camera-frame point with positive depth.
  Vec2 project(const Vec3& p) const;

  // Point on the ray through a pixel, scaled to depth z.
  Vec3 unproject(const Vec2& pixel, double z) const;
};

// Rigid transform from object frame to camera frame: x_cam = rot * x + t.
struct Pose {
  Mat3 rot{Mat3::Identity()};
  Vec3 t{Vec3::Zero()};
};

// Axis-aligned box in pixels, center + size.
struct BBox {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

  double scale() const { return w > h ? w : h; }
  double x_min() const { return cx - 0.5 * w; }
  double x_max() const { return cx + 0.5 * w; }
  double y_min() const { return cy - 0.5 * h; }
  double y_max() const { return cy + 0.5 * h; }
};

// Scale-invariant translation encoding relative to a detection box: the
// offset of the projected center from the box center in box units, plus
// depth divided by the resize ratio.
struct SiteTranslation {
  double dx = 0.0, dy = 0.0, dz = 0.0;
};

bool is_rotation(const Mat3& m, double tol = 1e-9);

Mat3 rot6d_to_matrix(const Rot6d& r);
Rot6d matrix_to_rot6d(const Mat3& m);

Mat3 quat_to_matrix(const Quaternion& q);
Quaternion matrix_to_quat(const Mat3& m);  // canonical: w >= 0

Mat3 axisangle_to_matrix(const AxisAngle& a);
AxisAngle matrix_to_axisangle(const Mat3& m);  // angle in [0, pi]

Mat3 logquat_to_matrix(const LogQuat& l);
LogQuat matrix_to_logquat(const Mat3& m);

// Minimal rotation taking the optical axis (0,0,1) onto the viewing
// direction t/|t|. For t on the negative optical axis the rotation axis is
// pinned to +x (angle pi) so the result stays well defined.
Mat3 viewing_rotation(const Vec3& t);

// A viewpoint-relative ("allocentric") rotation and the camera-frame
// ("egocentric") rotation differ by the viewing rotation of the translation.
Mat3 allo_to_ego(const Mat3& r_allo, const Vec3& t);
Mat3 ego_to_allo(const Mat3& r_ego, const Vec3& t);

// Translation whose projection lands on center_px at depth tz.
Vec3 backproject_center(const Vec2& center_px, double tz, const CameraIntrinsics& K);

SiteTranslation encode_site(const Vec3& t, const BBox& detection, double zoom_size,
                            const CameraIntrinsics& K);
Vec3 decode_site(const SiteTranslation& s, const BBox& detection, double zoom_size,
                 const CameraIntrinsics& K);

// Detection-box augmentation: shifts the center by up to 25% of the box size
// per axis and rescales width/height by up to 25%, all uniform draws. Draw
// order: center x, center y, width, height.
BBox jitter_box(const BBox& box, Rng& rng, double ratio = 0.25);

// Square crop around the box center with side ratio * max(w, h).
BBox zoom_square(const BBox& box, double ratio = 1.5);

// jitter_box followed by zoom_square: the square network crop around a
// randomized detection box.
BBox dynamic_zoom_in(const BBox& box, Rng& rng, double jitter_ratio = 0.25,
                     double zoom_ratio = 1.5);

// Uniform over SO(3): a normalized 4d Gaussian quaternion. Draw order:
// w, x, y, z.
Quaternion random_unit_quaternion(Rng& rng);
Mat3 random_rotation(Rng& rng);

}  // namespace posebench
