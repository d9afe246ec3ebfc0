#include "posebench/geometry.hpp"

#include <algorithm>

namespace posebench {

namespace {

constexpr double kTiny = 1e-12;

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace

Vec2 CameraIntrinsics::project(const Vec3& p) const {
  if (p.z() <= 0.0) throw DegenerateInput("project: point has non-positive depth");
  return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
}

Vec3 CameraIntrinsics::unproject(const Vec2& pixel, double z) const {
  return {z * (pixel.x() - cx) / fx, z * (pixel.y() - cy) / fy, z};
}

bool is_rotation(const Mat3& m, double tol) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Mat3 rot6d_to_matrix(const Rot6d& r) {
  const double n1 = r.r1.norm();
  if (n1 <= kTiny) throw DegenerateInput("rot6d: first column has zero norm");
  const Vec3 c1 = r.r1 / n1;
  const Vec3 u = c1.cross(r.r2);
  const double nu = u.norm();
  if (nu <= kTiny) throw DegenerateInput("rot6d: columns are parallel or second is zero");
  const Vec3 c3 = u / nu;
  const Vec3 c2 = c3.cross(c1);
  Mat3 m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c3;
  return m;
}

Rot6d matrix_to_rot6d(const Mat3& m) { return {m.col(0), m.col(1)}; }

Mat3 quat_to_matrix(const Quaternion& q) {
  const double n = q.norm();
  if (n <= kTiny) throw DegenerateInput("quat: zero norm");
  const double w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;
  Mat3 m;
  m << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return m;
}

Quaternion matrix_to_quat(const Mat3& m) {
  // Shepperd's method: branch on the largest of the four squared components
  // so the divisor is always well conditioned.
  const double tr = m.trace();
  Quaternion q;
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (m(2, 1) - m(1, 2)) / s;
    q.y = (m(0, 2) - m(2, 0)) / s;
    q.z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
    q.w = (m(2, 1) - m(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (m(0, 1) + m(1, 0)) / s;
    q.z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
    q.w = (m(0, 2) - m(2, 0)) / s;
    q.x = (m(0, 1) + m(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (m(1, 2) + m(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
    q.w = (m(1, 0) - m(0, 1)) / s;
    q.x = (m(0, 2) + m(2, 0)) / s;
    q.y = (m(1, 2) + m(2, 1)) / s;
    q.z = 0.25 * s;
  }
  const double n = q.norm();
  double sign = q.w < 0.0 ? -1.0 : 1.0;
  q.w = sign * q.w / n;
  q.x = sign * q.x / n;
  q.y = sign * q.y / n;
  q.z = sign * q.z / n;
  return q;
}

Mat3 axisangle_to_matrix(const AxisAngle& a) {
  const double theta = a.v.norm();
  const Mat3 vx = skew(a.v);
  if (theta < 1e-8) {
    // Second-order series; the truncation error theta^3/6 is far below the
    // round-trip tolerance at this threshold.
    return Mat3::Identity() + vx + 0.5 * (vx * vx);
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * vx + c * (vx * vx);
}

AxisAngle matrix_to_axisangle(const Mat3& m) {
  // Extract through the quaternion: atan2 keeps the angle accurate near both
  // 0 and pi, where the direct acos((tr-1)/2) formula loses digits.
  const Quaternion q = matrix_to_quat(m);
  const Vec3 xyz{q.x, q.y, q.z};
  const double s = xyz.norm();
  if (s < kTiny) return {2.0 * xyz};
  const double theta = 2.0 * std::atan2(s, q.w);
  return {xyz * (theta / s)};
}

Mat3 logquat_to_matrix(const LogQuat& l) {
  const double a = l.v.norm();
  double sinc;  // sin(a)/a, stable at 0
  if (a < 1e-8) {
    sinc = 1.0 - a * a / 6.0;
  } else {
    sinc = std::sin(a) / a;
  }
  Quaternion q;
  q.w = std::cos(a);
  q.x = sinc * l.v.x();
  q.y = sinc * l.v.y();
  q.z = sinc * l.v.z();
  return quat_to_matrix(q);
}

LogQuat matrix_to_logquat(const Mat3& m) {
  const Quaternion q = matrix_to_quat(m);
  const Vec3 xyz{q.x, q.y, q.z};
  const double s = xyz.norm();
  if (s < kTiny) return {xyz};  // angle/2 over sin(angle/2) tends to 1
  const double half = std::atan2(s, q.w);
  return {xyz * (half / s)};
}

Mat3 viewing_rotation(const Vec3& t) {
  const double n = t.norm();
  if (n <= kTiny) throw DegenerateInput("viewing_rotation: zero translation");
  const Vec3 d = t / n;
  const double c = d.z();  // cos of the rotation angle; axis is z x d
  if (c < -1.0 + 1e-9) {
    // Looking exactly backwards: half-turn around +x by convention.
    Mat3 m;
    m << 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0;
    return m;
  }
  const Vec3 v = Vec3(0.0, 0.0, 1.0).cross(d);
  const Mat3 vx = skew(v);
  // Rodrigues with v = axis*sin: (1-cos)/sin^2 collapses to 1/(1+cos).
  return Mat3::Identity() + vx + (vx * vx) / (1.0 + c);
}

Mat3 allo_to_ego(const Mat3& r_allo, const Vec3& t) { return viewing_rotation(t) * r_allo; }

Mat3 ego_to_allo(const Mat3& r_ego, const Vec3& t) {
  return viewing_rotation(t).transpose() * r_ego;
}

Vec3 backproject_center(const Vec2& center_px, double tz, const CameraIntrinsics& K) {
  if (tz <= 0.0) throw DegenerateInput("backproject_center: depth must be positive");
  return K.unproject(center_px, tz);
}

SiteTranslation encode_site(const Vec3& t, const BBox& detection, double zoom_size,
                            const CameraIntrinsics& K) {
  if (detection.w <= 0.0 || detection.h <= 0.0)
    throw DegenerateInput("encode_site: box must have positive size");
  if (zoom_size <= 0.0) throw DegenerateInput("encode_site: zoom size must be positive");
  if (t.z() <= 0.0) throw DegenerateInput("encode_site: depth must be positive");
  const Vec2 center = K.project(t);
  const double r = zoom_size / detection.scale();
  return {(center.x() - detection.cx) / detection.w, (center.y() - detection.cy) / detection.h,
          t.z() / r};
}

Vec3 decode_site(const SiteTranslation& s, const BBox& detection, double zoom_size,
                 const CameraIntrinsics& K) {
  if (detection.w <= 0.0 || detection.h <= 0.0)
    throw DegenerateInput("decode_site: box must have positive size");
  if (zoom_size <= 0.0) throw DegenerateInput("decode_site: zoom size must be positive");
  const double r = zoom_size / detection.scale();
  const Vec2 center{s.dx * detection.w + detection.cx, s.dy * detection.h + detection.cy};
  return backproject_center(center, s.dz * r, K);
}

BBox jitter_box(const BBox& box, Rng& rng, double ratio) {
  const double u1 = rng.uniform(-1.0, 1.0);
  const double u2 = rng.uniform(-1.0, 1.0);
  const double u3 = rng.uniform(-1.0, 1.0);
  const double u4 = rng.uniform(-1.0, 1.0);
  BBox out;
  out.cx = box.cx + u1 * ratio * box.w;
  out.cy = box.cy + u2 * ratio * box.h;
  out.w = box.w * (1.0 + u3 * ratio);
  out.h = box.h * (1.0 + u4 * ratio);
  return out;
}

BBox zoom_square(const BBox& box, double ratio) {
  const double side = ratio * box.scale();
  return {box.cx, box.cy, side, side};
}

BBox dynamic_zoom_in(const BBox& box, Rng& rng, double jitter_ratio, double zoom_ratio) {
  return zoom_square(jitter_box(box, rng, jitter_ratio), zoom_ratio);
}

Quaternion random_unit_quaternion(Rng& rng) {
  Quaternion q;
  double n = 0.0;
  // Degenerate all-zero draws are astronomically unlikely but cheap to guard.
  while (n <= kTiny) {
    q.w = rng.normal();
    q.x = rng.normal();
    q.y = rng.normal();
    q.z = rng.normal();
    n = q.norm();
  }
  q.w /= n;
  q.x /= n;
  q.y /= n;
  q.z /= n;
  return q;
}

Mat3 random_rotation(Rng& rng) { return quat_to_matrix(random_unit_quaternion(rng)); }

}  // namespace posebench
