#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace dexbody {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// First two columns of a rotation matrix, stacked column-major.
using Rot6d = Eigen::Matrix<double, 6, 1>;

/// Normalize and flip sign so w >= 0. All comparisons and serialized
/// rotations go through this to keep the double cover out of golden values.
Quat canonical(const Quat& q);

Rot6d rot6d_from_quat(const Quat& q);
Rot6d rot6d_from_mat(const Mat3& m);
Mat3 mat_from_rot6d(const Rot6d& r);
Quat quat_from_rot6d(const Rot6d& r);
Rot6d rot6d_identity();

/// Angle of the relative rotation between two unit quaternions, in [0, pi].
/// Invariant under sign flips of either argument.
double geodesic_distance(const Quat& a, const Quat& b);

/// Rotation vector (axis * angle, |angle| <= pi) and its inverse.
Vec3 quat_log(const Quat& q);
Quat quat_exp(const Vec3& v);

/// Backward difference (x_t - x_prev) / dt. Apply twice for acceleration,
/// three times for jerk. dt must be positive.
double finite_diff(double x_t, double x_prev, double dt);
Vec3 finite_diff(const Vec3& x_t, const Vec3& x_prev, double dt);

/// Heading (rotation about +z) extracted from a full orientation.
double yaw_of(const Quat& q);
Quat yaw_quat(double yaw);

/// Rigid transform: rotation then translation.
struct Transform {
  Vec3 t = Vec3::Zero();
  Quat q = Quat::Identity();

  Vec3 apply(const Vec3& p) const { return q * p + t; }
  Vec3 apply_inverse(const Vec3& p) const { return q.conjugate() * (p - t); }
  Transform compose(const Transform& other) const;
  Transform inverse() const;

  static Transform identity() { return {}; }
};

bool all_finite(const Vec3& v);
bool all_finite(const Quat& q);

}  // namespace dexbody
