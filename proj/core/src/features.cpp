#include "dexbody/features.hpp"

#include <cmath>

#include "dexbody/errors.hpp"

namespace dexbody {
namespace {

// Yaw-only rotation of the root: the horizontal direction the character
// faces (+x in its local frame) projected onto the ground. Identity when the
// character faces straight up or down.
Quat heading_quat(const Quat& root_rot) {
  const Vec3 fwd = root_rot * Vec3::UnitX();
  if (std::hypot(fwd[0], fwd[1]) < 1e-8) return Quat::Identity();
  const double yaw = std::atan2(fwd[1], fwd[0]);
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

// Angular velocity (components in the parent joint frame) of a local joint
// rotation R = exp(theta) whose exponential coordinates change at rate
// theta_dot: Rdot R^-1 = [J(theta) theta_dot]x with J the left Jacobian of
// the exponential map.
Vec3 local_angular_velocity(const JointDef& joint, const Vec3& coords, const Vec3& rate) {
  if (joint.dof == DofType::kHinge) return joint.axis * rate[0];
  const double t2 = coords.squaredNorm();
  Mat3 J = Mat3::Identity();
  Mat3 hat;
  hat << 0, -coords[2], coords[1], coords[2], 0, -coords[0], -coords[1], coords[0], 0;
  if (t2 < 1e-12) {
    J += 0.5 * hat + (1.0 / 6.0) * hat * hat;
  } else {
    const double t = std::sqrt(t2);
    J += ((1.0 - std::cos(t)) / t2) * hat + ((t - std::sin(t)) / (t2 * t)) * hat * hat;
  }
  return J * rate;
}

// Time derivative of the 6D encoding of a rotation R whose angular velocity
// is omega (same frame as R's columns): each encoded column c obeys
// cdot = omega x c.
Rot6d rot6d_rate(const Quat& rot, const Vec3& omega) {
  const Mat3 m = rot.toRotationMatrix();
  Rot6d out;
  out.head<3>() = omega.cross(Vec3(m.col(0)));
  out.tail<3>() = omega.cross(Vec3(m.col(1)));
  return out;
}

void put(VecX& dst, int at, const Rot6d& r) { dst.segment<6>(at) = r; }
void put(VecX& dst, int at, const Vec3& v) { dst.segment<3>(at) = v; }

}  // namespace

WorldVelocities joint_world_velocities(const SimState& state, const SkeletonSpec& skeleton) {
  const int n = skeleton.joint_count();
  WorldVelocities wv;
  wv.lin.assign(static_cast<size_t>(n), Vec3::Zero());
  wv.ang.assign(static_cast<size_t>(n), Vec3::Zero());
  wv.lin[0] = state.root_lin_vel;
  wv.ang[0] = state.root_ang_vel;
  for (int j = 1; j < n; ++j) {
    const JointDef& d = skeleton.joint(j);
    const size_t js = static_cast<size_t>(j);
    const size_t ps = static_cast<size_t>(d.parent);
    const Vec3 coords = skeleton.joint_coords(j, state.pose.joint_rot[js]);
    const Vec3 w_loc = local_angular_velocity(d, coords, state.joint_vel[js]);
    wv.ang[js] = wv.ang[ps] + state.fk.rot[ps] * w_loc;
    wv.lin[js] = wv.lin[ps] + wv.ang[ps].cross(state.fk.pos[js] - state.fk.pos[ps]);
  }
  return wv;
}

std::vector<int> body_feature_joints(const SkeletonSpec& skeleton) {
  std::vector<int> joints = skeleton.body_joints();
  joints.push_back(skeleton.wrist());
  return joints;
}

VecX BodyFeatures::flat() const {
  VecX out(rot.size() + rot_vel.size() + pos.size() + vel.size() + 4);
  out << rot, rot_vel, pos, vel, height, root_vel;
  return out;
}

int BodyFeatures::dim(const SkeletonSpec& skeleton) {
  const int j = static_cast<int>(body_feature_joints(skeleton).size());
  return j * 6 + j * 6 + j * 3 + j * 3 + 1 + 3;
}

BodyFeatures body_features(const SimState& state, const SkeletonSpec& skeleton) {
  const std::vector<int> joints = body_feature_joints(skeleton);
  const WorldVelocities wv = joint_world_velocities(state, skeleton);
  const Quat inv_head = heading_quat(state.pose.root_rot).conjugate();

  BodyFeatures f;
  const int n = static_cast<int>(joints.size());
  f.rot.resize(n * 6);
  f.rot_vel.resize(n * 6);
  f.pos.resize(n * 3);
  f.vel.resize(n * 3);
  for (int i = 0; i < n; ++i) {
    const size_t js = static_cast<size_t>(joints[static_cast<size_t>(i)]);
    const Quat rel = inv_head * state.fk.rot[js];
    const Vec3 omega = inv_head * wv.ang[js];
    put(f.rot, i * 6, rot6d_from_quat(rel));
    put(f.rot_vel, i * 6, rot6d_rate(rel, omega));
    put(f.pos, i * 3, Vec3(inv_head * (state.fk.pos[js] - state.pose.root_pos)));
    put(f.vel, i * 3, Vec3(inv_head * wv.lin[js]));
  }
  f.height = state.pose.root_pos[2];
  f.root_vel = inv_head * state.root_lin_vel;
  return f;
}

VecX BodyDiscFeatures::flat() const {
  VecX out(rot.size() + rot_vel.size() + key_pos.size() + 4);
  out << rot, rot_vel, key_pos, height, root_vel;
  return out;
}

int BodyDiscFeatures::dim(const SkeletonSpec& skeleton) {
  const int j = static_cast<int>(body_feature_joints(skeleton).size());
  const int k = static_cast<int>(skeleton.key_joints().size());
  return j * 6 + j * 6 + k * 3 + 1 + 3;
}

BodyDiscFeatures disc_body_features(const SimState& state, const SkeletonSpec& skeleton) {
  const std::vector<int> joints = body_feature_joints(skeleton);
  const Quat inv_head = heading_quat(state.pose.root_rot).conjugate();

  BodyDiscFeatures f;
  const int n = static_cast<int>(joints.size());
  f.rot.resize(n * 6);
  f.rot_vel.resize(n * 6);
  for (int i = 0; i < n; ++i) {
    const int j = joints[static_cast<size_t>(i)];
    const size_t js = static_cast<size_t>(j);
    const Quat& local = state.pose.joint_rot[js];
    const Vec3 coords = skeleton.joint_coords(j, local);
    const Vec3 omega = local_angular_velocity(skeleton.joint(j), coords, state.joint_vel[js]);
    put(f.rot, i * 6, rot6d_from_quat(local));
    put(f.rot_vel, i * 6, rot6d_rate(local, omega));
  }
  const std::vector<int>& keys = skeleton.key_joints();
  f.key_pos.resize(static_cast<int>(keys.size()) * 3);
  for (size_t i = 0; i < keys.size(); ++i)
    put(f.key_pos, static_cast<int>(i) * 3,
        Vec3(inv_head * (state.fk.pos[static_cast<size_t>(keys[i])] - state.pose.root_pos)));
  f.height = state.pose.root_pos[2];
  f.root_vel = inv_head * state.root_lin_vel;
  return f;
}

VecX HandFeatures::flat() const {
  VecX out(rot.size() + rot_vel.size() + pos.size());
  out << rot, rot_vel, pos;
  return out;
}

int HandFeatures::dim(const SkeletonSpec& skeleton) {
  const int d = static_cast<int>(skeleton.hand_joints().size()) - 1;
  return d * 6 + d * 6 + d * 3;
}

HandFeatures hand_features(const SimState& state, const SkeletonSpec& skeleton) {
  const std::vector<int>& hand = skeleton.hand_joints();
  const size_t ws = static_cast<size_t>(skeleton.wrist());
  const Quat inv_wrist = state.fk.rot[ws].conjugate();

  HandFeatures f;
  const int d = static_cast<int>(hand.size()) - 1;
  f.rot.resize(d * 6);
  f.rot_vel.resize(d * 6);
  f.pos.resize(d * 3);
  for (int i = 0; i < d; ++i) {
    const int j = hand[static_cast<size_t>(i + 1)];
    const size_t js = static_cast<size_t>(j);
    const Quat& local = state.pose.joint_rot[js];
    const Vec3 coords = skeleton.joint_coords(j, local);
    const Vec3 omega = local_angular_velocity(skeleton.joint(j), coords, state.joint_vel[js]);
    put(f.rot, i * 6, rot6d_from_quat(local));
    put(f.rot_vel, i * 6, rot6d_rate(local, omega));
    put(f.pos, i * 3, Vec3(inv_wrist * (state.fk.pos[js] - state.fk.pos[ws])));
  }
  return f;
}

VecX HandDiscFeatures::flat() const {
  VecX out(rot.size() + rot_vel.size() + tip_pos.size());
  out << rot, rot_vel, tip_pos;
  return out;
}

int HandDiscFeatures::dim(const SkeletonSpec& skeleton) {
  const int d = static_cast<int>(skeleton.hand_joints().size()) - 1;
  const int t = static_cast<int>(skeleton.fingertips().size());
  return d * 6 + d * 6 + t * 3;
}

HandDiscFeatures disc_hand_features(const SimState& state, const SkeletonSpec& skeleton) {
  const HandFeatures full = hand_features(state, skeleton);
  const size_t ws = static_cast<size_t>(skeleton.wrist());
  const Quat inv_wrist = state.fk.rot[ws].conjugate();

  HandDiscFeatures f;
  f.rot = full.rot;
  f.rot_vel = full.rot_vel;
  const std::vector<int>& tips = skeleton.fingertips();
  f.tip_pos.resize(static_cast<int>(tips.size()) * 3);
  for (size_t i = 0; i < tips.size(); ++i)
    put(f.tip_pos, static_cast<int>(i) * 3,
        Vec3(inv_wrist * (state.fk.pos[static_cast<size_t>(tips[i])] - state.fk.pos[ws])));
  return f;
}

VecX GoalFeatures::flat() const {
  VecX out(g_x.size() + g_theta.size() + g_c.size());
  out << g_x, g_theta, g_c;
  return out;
}

int GoalFeatures::dim(const SkeletonSpec& skeleton) {
  const int j = static_cast<int>(skeleton.hand_joints().size());
  return j * 3 + j * 6 + j * 2;
}

GoalFeatures goal_features(const SimState& state, const HandPoseReference& ref,
                           const SkeletonSpec& skeleton) {
  const std::vector<int>& hand = skeleton.hand_joints();
  const int j = static_cast<int>(hand.size());
  if (static_cast<int>(ref.joint_local.size()) != j ||
      static_cast<int>(ref.hand_rot.size()) != j || static_cast<int>(ref.contact.size()) != j)
    throw InvalidArgument("goal_features: reference does not match the skeleton's hand");

  const Quat inv_head = heading_quat(state.pose.root_rot).conjugate();
  GoalFeatures f;
  f.g_x.resize(j * 3);
  f.g_theta.resize(j * 6);
  f.g_c.resize(j * 2);
  for (int k = 0; k < j; ++k) {
    const size_t js = static_cast<size_t>(hand[static_cast<size_t>(k)]);
    // Targets live in the object frame, so they track the object as it moves.
    const Vec3 target = state.object.apply(ref.joint_local[static_cast<size_t>(k)]);
    put(f.g_x, k * 3, Vec3(inv_head * (target - state.fk.pos[js])));

    Quat rel;
    if (k == 0) {
      // Wrist targets are meaningful relative to the object: compare the
      // object-relative wrist orientation now against the reference one.
      const Quat target_rel = ref.object.q.conjugate() * ref.hand_rot[0];
      const Quat current_rel = state.object.q.conjugate() * state.fk.rot[js];
      rel = target_rel * current_rel.conjugate();
    } else {
      rel = ref.hand_rot[static_cast<size_t>(k)] * state.pose.joint_rot[js].conjugate();
    }
    put(f.g_theta, k * 6, rot6d_from_quat(rel));

    const bool target_contact = ref.contact[static_cast<size_t>(k)] != 0;
    const bool achieved = target_contact && state.hand_object_force[k] > 0.0;
    f.g_c[k] = target_contact ? 1.0 : 0.0;
    f.g_c[j + k] = achieved ? 1.0 : 0.0;
  }
  return f;
}

VecX trajectory_feature(const SimState& state, const TargetTrajectory& traj,
                        const SkeletonSpec& skeleton) {
  VecX out = VecX::Zero(6);
  if (traj.cursor < 0 || traj.cursor >= traj.count()) return out;
  const Quat inv_head = heading_quat(state.pose.root_rot).conjugate();
  const size_t c = static_cast<size_t>(traj.cursor);
  const Vec3 wrist = state.fk.pos[static_cast<size_t>(skeleton.wrist())];
  out.segment<3>(0) = inv_head * (traj.body_pos[c] - state.pose.root_pos);
  out.segment<3>(3) = inv_head * (traj.hand_pos[c] - wrist);
  return out;
}

CursorEvent advance_cursor(TargetTrajectory& traj, const SimState& state,
                           const SkeletonSpec& skeleton, double dt, double reach_threshold) {
  CursorEvent ev;
  if (traj.cursor >= traj.count()) {
    ev.exhausted = true;
    return ev;
  }
  traj.elapsed += dt;
  const Vec3 wrist = state.fk.pos[static_cast<size_t>(skeleton.wrist())];
  const Vec3& target = traj.hand_pos[static_cast<size_t>(traj.cursor)];
  if ((wrist - target).norm() <= reach_threshold)
    ev.reached = true;
  // Slack absorbs rounding from summing fixed control steps, so a deadline
  // that is an exact multiple of dt expires on the expected tick.
  else if (traj.elapsed >= traj.deadline - 1e-9)
    ev.expired = true;
  if (ev.reached || ev.expired) {
    ++traj.cursor;
    traj.elapsed = 0.0;
  }
  ev.exhausted = traj.cursor >= traj.count();
  return ev;
}

double phase(const SimState& state, const SkeletonSpec& skeleton, double initial_object_z) {
  if (state.object.t[2] - initial_object_z > 0.03) return 1.0;
  if (state.object_table_force == 0.0) return 0.8;
  bool touching = false;
  for (int k = 0; k < state.hand_object_force.size(); ++k)
    if (state.hand_object_force[k] > kPhaseContactThreshold) touching = true;
  if (touching) return 0.6;
  const Vec3 wrist = state.fk.pos[static_cast<size_t>(skeleton.wrist())];
  const double dist = (wrist - state.object.t).norm();
  if (dist <= 0.2) return 0.4;
  if (dist <= 0.5) return 0.2;
  return 0.0;
}

VecX HOFeatures::flat() const {
  const VecX g = goal.flat();
  VecX out(obj_pose.size() + obj_vel.size() + g.size() + g_xi.size() + forces.size() + 2);
  out << obj_pose, obj_vel, g, g_xi, forces, table_dist, eta;
  return out;
}

int HOFeatures::dim(const SkeletonSpec& skeleton) {
  const int j = static_cast<int>(skeleton.hand_joints().size());
  return 9 + 6 + GoalFeatures::dim(skeleton) + 6 + (j + 2) + 1 + 1;
}

HOFeatures ho_features(const SimState& state, const HandPoseReference& ref,
                       const TargetTrajectory& traj, const SkeletonSpec& skeleton,
                       const WorldConfig& config, const Transform& table,
                       double initial_object_z) {
  const Quat inv_head = heading_quat(state.pose.root_rot).conjugate();

  HOFeatures f;
  f.obj_pose.resize(9);
  f.obj_pose.segment<3>(0) = inv_head * (state.object.t - state.pose.root_pos);
  f.obj_pose.segment<6>(3) = rot6d_from_quat(inv_head * state.object.q);
  f.obj_vel.resize(6);
  f.obj_vel.segment<3>(0) = inv_head * state.object_lin_vel;
  f.obj_vel.segment<3>(3) = inv_head * state.object_ang_vel;

  f.goal = goal_features(state, ref, skeleton);
  f.g_xi = trajectory_feature(state, traj, skeleton);

  const std::vector<int>& hand = skeleton.hand_joints();
  f.forces.resize(static_cast<int>(hand.size()) + 2);
  for (size_t k = 0; k < hand.size(); ++k)
    f.forces[static_cast<int>(k)] = state.f[hand[k]];
  f.forces[static_cast<int>(hand.size())] = state.f[state.object_slot()];
  f.forces[static_cast<int>(hand.size()) + 1] = state.f[state.table_slot()];

  const Vec3 wrist = state.fk.pos[static_cast<size_t>(skeleton.wrist())];
  f.table_dist = wrist[2] - (table.t[2] + config.table_half[2]);
  f.eta = phase(state, skeleton, initial_object_z);
  return f;
}

}  // namespace dexbody
