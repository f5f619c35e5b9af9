#include "dexbody/mathcore.hpp"

#include <algorithm>
#include <cmath>

#include "dexbody/errors.hpp"

namespace dexbody {

bool all_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

bool all_finite(const Quat& q) {
  return std::isfinite(q.w()) && std::isfinite(q.x()) && std::isfinite(q.y()) &&
         std::isfinite(q.z());
}

Quat canonical(const Quat& q) {
  if (!all_finite(q)) throw InvalidArgument("canonical: non-finite quaternion");
  Quat n = q.normalized();
  if (n.w() < 0.0) n.coeffs() = -n.coeffs();
  return n;
}

Rot6d rot6d_from_mat(const Mat3& m) {
  Rot6d r;
  r << m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1);
  return r;
}

Rot6d rot6d_from_quat(const Quat& q) {
  if (!all_finite(q)) throw InvalidArgument("rot6d_from_quat: non-finite quaternion");
  return rot6d_from_mat(q.normalized().toRotationMatrix());
}

Mat3 mat_from_rot6d(const Rot6d& r) {
  if (!r.allFinite()) throw InvalidArgument("mat_from_rot6d: non-finite input");
  Vec3 a = r.head<3>();
  Vec3 b = r.tail<3>();
  // Gram-Schmidt: first column, then the second orthogonalized against it.
  Vec3 c0 = a.normalized();
  Vec3 c1 = (b - c0.dot(b) * c0).normalized();
  Vec3 c2 = c0.cross(c1);
  Mat3 m;
  m.col(0) = c0;
  m.col(1) = c1;
  m.col(2) = c2;
  return m;
}

Quat quat_from_rot6d(const Rot6d& r) {
  return canonical(Quat(mat_from_rot6d(r)));
}

Rot6d rot6d_identity() {
  Rot6d r;
  r << 1, 0, 0, 0, 1, 0;
  return r;
}

double geodesic_distance(const Quat& a, const Quat& b) {
  const double d = a.normalized().dot(b.normalized());
  // arccos argument clamped: |d| can overshoot 1 by a few ulp near identity.
  const double arg = std::clamp(2.0 * d * d - 1.0, -1.0, 1.0);
  return std::acos(arg);
}

Vec3 quat_log(const Quat& q) {
  Quat c = canonical(q);
  const double sin_half = c.vec().norm();
  if (sin_half < 1e-12) return 2.0 * c.vec();  // small-angle: sin(x) ~ x
  const double angle = 2.0 * std::atan2(sin_half, c.w());
  return c.vec() * (angle / sin_half);
}

Quat quat_exp(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z());
    return q.normalized();
  }
  const double half = 0.5 * angle;
  const Vec3 axis = v / angle;
  Quat q;
  q.w() = std::cos(half);
  q.vec() = axis * std::sin(half);
  return q;
}

double finite_diff(double x_t, double x_prev, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("finite_diff: dt must be > 0");
  return (x_t - x_prev) / dt;
}

Vec3 finite_diff(const Vec3& x_t, const Vec3& x_prev, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("finite_diff: dt must be > 0");
  return (x_t - x_prev) / dt;
}

double yaw_of(const Quat& q) {
  // Direction the local +x axis points, projected to the ground plane.
  const Vec3 fwd = q * Vec3::UnitX();
  if (fwd.head<2>().norm() < 1e-9) {
    // Degenerate (facing straight up/down): fall back to local +z projection.
    const Vec3 up = q * Vec3::UnitZ();
    return std::atan2(up.y(), up.x());
  }
  return std::atan2(fwd.y(), fwd.x());
}

Quat yaw_quat(double yaw) {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

Transform Transform::compose(const Transform& other) const {
  Transform out;
  out.q = (q * other.q).normalized();
  out.t = q * other.t + t;
  return out;
}

Transform Transform::inverse() const {
  Transform out;
  out.q = q.conjugate();
  out.t = -(out.q * t);
  return out;
}

}  // namespace dexbody
