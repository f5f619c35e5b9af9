#include <doctest.h>

#include <cmath>

#include "dexbody/errors.hpp"
#include "dexbody/features.hpp"
#include "dexbody/mathcore.hpp"
#include "dexbody/rng.hpp"
#include "support/test_util.hpp"

using namespace dexbody;
using namespace dexbody::test;

namespace {

// Minimal self-consistent state: pose plus matching forward kinematics, all
// dynamic quantities zeroed and sized for the skeleton.
SimState make_state(const SkeletonSpec& sk, const Pose& pose) {
  SimState s;
  s.pose = pose;
  s.fk = sk.forward_kinematics(pose);
  s.joint_vel.assign(static_cast<size_t>(sk.joint_count()), Vec3::Zero());
  s.f = VecX::Zero(sk.joint_count() + 2);
  s.hand_object_force = VecX::Zero(static_cast<int>(sk.hand_joints().size()));
  s.object.t = Vec3(0.5, -0.2, 0.8);
  s.object_table_force = 1.0;  // resting on the table unless a test says otherwise
  return s;
}

// Random pose inside joint limits plus random rates, deterministic per seed.
SimState random_state(const SkeletonSpec& sk, uint64_t seed) {
  Rng rng(seed);
  Pose pose = sk.rest_pose();
  pose.root_pos = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.95);
  pose.root_rot = canonical(quat_exp(Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                                          rng.uniform(-3, 3))));
  for (int j = 1; j < sk.joint_count(); ++j) {
    const JointDef& d = sk.joint(j);
    Vec3 c = Vec3::Zero();
    const int dofs = d.dof == DofType::kHinge ? 1 : 3;
    for (int k = 0; k < dofs; ++k) c[k] = rng.uniform(0.3 * d.lower[k], 0.3 * d.upper[k]);
    pose.joint_rot[static_cast<size_t>(j)] = sk.joint_rotation(j, c);
  }
  SimState s = make_state(sk, pose);
  s.root_lin_vel = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  s.root_ang_vel = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  for (int j = 1; j < sk.joint_count(); ++j) {
    const int dofs = sk.joint(j).dof == DofType::kHinge ? 1 : 3;
    Vec3 v = Vec3::Zero();
    for (int k = 0; k < dofs; ++k) v[k] = rng.uniform(-2.0, 2.0);
    s.joint_vel[static_cast<size_t>(j)] = v;
  }
  s.object_lin_vel = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  s.object_ang_vel = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  s.object.q = canonical(quat_exp(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                       rng.uniform(-1, 1))));
  return s;
}

// Applies one rigid transform to every world-frame field. The forward
// kinematics transform directly instead of being recomputed, so the check
// does not lean on FK equivariance.
SimState transform_state(const SimState& in, const Quat& rot, const Vec3& shift) {
  SimState s = in;
  s.pose.root_pos = rot * in.pose.root_pos + shift;
  s.pose.root_rot = rot * in.pose.root_rot;
  for (size_t j = 0; j < in.fk.pos.size(); ++j) {
    s.fk.pos[j] = rot * in.fk.pos[j] + shift;
    s.fk.rot[j] = rot * in.fk.rot[j];
  }
  s.root_lin_vel = rot * in.root_lin_vel;
  s.root_ang_vel = rot * in.root_ang_vel;
  s.object.t = rot * in.object.t + shift;
  s.object.q = rot * in.object.q;
  s.object_lin_vel = rot * in.object_lin_vel;
  s.object_ang_vel = rot * in.object_ang_vel;
  return s;
}

// Reference that matches the state's hand exactly, so every goal distance
// is zero by construction.
HandPoseReference reference_from_state(const SimState& s, const SkeletonSpec& sk,
                                       const std::vector<int>& contact) {
  const std::vector<int>& hand = sk.hand_joints();
  HandPoseReference ref;
  ref.hand_rot.resize(hand.size());
  ref.hand_rot[0] = s.fk.rot[static_cast<size_t>(sk.wrist())];
  for (size_t k = 1; k < hand.size(); ++k)
    ref.hand_rot[k] = s.pose.joint_rot[static_cast<size_t>(hand[k])];
  ref.wrist_pos = s.fk.pos[static_cast<size_t>(sk.wrist())];
  ref.object = s.object;
  ref.contact = contact;
  ref.derive_joint_targets(sk);
  return ref;
}

double max_abs_diff(const VecX& a, const VecX& b) {
  REQUIRE(a.size() == b.size());
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("feature dimensions are pinned for the desk skeleton") {
  const SkeletonSpec& sk = *desk_skeleton();
  CHECK(BodyFeatures::dim(sk) == 238);
  CHECK(BodyDiscFeatures::dim(sk) == 181);
  CHECK(HandFeatures::dim(sk) == 90);
  CHECK(HandDiscFeatures::dim(sk) == 81);
  CHECK(GoalFeatures::dim(sk) == 77);
  CHECK(HOFeatures::dim(sk) == 109);

  const SimState s = random_state(sk, 11);
  CHECK(body_features(s, sk).flat().size() == 238);
  CHECK(disc_body_features(s, sk).flat().size() == 181);
  CHECK(hand_features(s, sk).flat().size() == 90);
  CHECK(disc_hand_features(s, sk).flat().size() == 81);
  for (double v : body_features(s, sk).flat()) CHECK(std::isfinite(v));
}

TEST_CASE("body features ignore where the character stands and faces") {
  const SkeletonSpec& sk = *desk_skeleton();
  for (uint64_t seed : {3ull, 4ull, 5ull}) {
    CAPTURE(seed);
    const SimState a = random_state(sk, seed);
    // Horizontal translation only: the root height is a world-frame readout.
    const Quat yaw = canonical(Quat(Eigen::AngleAxisd(1.1, Vec3::UnitZ())));
    const SimState b = transform_state(a, yaw, Vec3(2.0, -3.0, 0.0));

    CHECK(max_abs_diff(body_features(a, sk).flat(), body_features(b, sk).flat()) < 1e-9);
    CHECK(max_abs_diff(disc_body_features(a, sk).flat(), disc_body_features(b, sk).flat()) <
          1e-9);
  }
}

TEST_CASE("hand features ignore any rigid motion of the whole hand") {
  const SkeletonSpec& sk = *desk_skeleton();
  const SimState a = random_state(sk, 9);
  const Quat rot = canonical(quat_exp(Vec3(0.4, -0.7, 1.2)));
  const SimState b = transform_state(a, rot, Vec3(1.5, 0.3, 2.0));

  CHECK(max_abs_diff(hand_features(a, sk).flat(), hand_features(b, sk).flat()) < 1e-9);
  CHECK(max_abs_diff(disc_hand_features(a, sk).flat(), disc_hand_features(b, sk).flat()) <
        1e-9);
}

TEST_CASE("joint world velocities match finite differences of the kinematics") {
  const SkeletonSpec& sk = *desk_skeleton();
  const SimState s = random_state(sk, 21);
  const WorldVelocities wv = joint_world_velocities(s, sk);

  const double h = 1e-7;
  Pose advanced = s.pose;
  advanced.root_pos += h * s.root_lin_vel;
  advanced.root_rot = quat_exp(h * s.root_ang_vel) * s.pose.root_rot;
  for (int j = 1; j < sk.joint_count(); ++j) {
    const size_t js = static_cast<size_t>(j);
    const Vec3 c = sk.joint_coords(j, s.pose.joint_rot[js]) + h * s.joint_vel[js];
    advanced.joint_rot[js] = sk.joint_rotation(j, c);
  }
  const FkResult fk2 = sk.forward_kinematics(advanced);

  for (int j = 0; j < sk.joint_count(); ++j) {
    CAPTURE(j);
    const size_t js = static_cast<size_t>(j);
    const Vec3 lin_fd = (fk2.pos[js] - s.fk.pos[js]) / h;
    CHECK((lin_fd - wv.lin[js]).norm() < 1e-5);
    const Vec3 ang_fd = quat_log(fk2.rot[js] * s.fk.rot[js].conjugate()) / h;
    CHECK((ang_fd - wv.ang[js]).norm() < 1e-5);
  }
}

TEST_CASE("a resting pose reads out directly") {
  const SkeletonSpec& sk = *desk_skeleton();
  Pose pose = sk.rest_pose();
  pose.root_pos = Vec3(0.0, 0.0, 0.95);
  const SimState s = make_state(sk, pose);
  const BodyFeatures f = body_features(s, sk);

  CHECK(f.height == 0.95);
  CHECK(f.root_vel == Vec3::Zero());
  CHECK(f.rot_vel.isZero());
  CHECK(f.vel.isZero());
  // Identity root: heading is identity, so positions are plain offsets.
  const std::vector<int> joints = body_feature_joints(sk);
  for (size_t i = 0; i < joints.size(); ++i) {
    const Vec3 expect = s.fk.pos[static_cast<size_t>(joints[i])] - pose.root_pos;
    CHECK((Vec3(f.pos.segment<3>(static_cast<int>(i) * 3)) - expect).norm() < 1e-12);
  }
  // Identity rotations encode as the identity 6D block.
  for (size_t i = 0; i < joints.size(); ++i)
    CHECK((f.rot.segment<6>(static_cast<int>(i) * 6) - rot6d_identity()).norm() < 1e-12);
}

TEST_CASE("flat vectors concatenate the blocks in declaration order") {
  const SkeletonSpec& sk = *desk_skeleton();
  const SimState s = random_state(sk, 33);

  const BodyFeatures b = body_features(s, sk);
  const VecX fb = b.flat();
  CHECK(fb.segment(0, b.rot.size()) == b.rot);
  CHECK(fb.segment(b.rot.size() + b.rot_vel.size() + b.pos.size(), b.vel.size()) == b.vel);
  CHECK(fb[fb.size() - 4] == b.height);
  CHECK(Vec3(fb.tail<3>()) == b.root_vel);

  const HandFeatures hf = hand_features(s, sk);
  const VecX fh = hf.flat();
  CHECK(fh.segment(0, hf.rot.size()) == hf.rot);
  CHECK(fh.tail(hf.pos.size()) == hf.pos);
}

TEST_CASE("goal features vanish at the reference grasp") {
  const SkeletonSpec& sk = *desk_skeleton();
  const SimState s = random_state(sk, 17);
  const std::vector<int> mask = {0, 1, 1, 0, 0, 1, 1};
  const HandPoseReference ref = reference_from_state(s, sk, mask);

  const GoalFeatures g = goal_features(s, ref, sk);
  CHECK(g.g_x.cwiseAbs().maxCoeff() < 1e-9);
  const int j = static_cast<int>(sk.hand_joints().size());
  for (int k = 0; k < j; ++k) {
    CAPTURE(k);
    CHECK((g.g_theta.segment<6>(k * 6) - rot6d_identity()).norm() < 1e-9);
    CHECK(g.g_c[k] == (mask[static_cast<size_t>(k)] ? 1.0 : 0.0));
    CHECK(g.g_c[j + k] == 0.0);  // no contact force anywhere yet
  }
}

TEST_CASE("achieved contacts are the elementwise AND of target and current") {
  const SkeletonSpec& sk = *desk_skeleton();
  SimState s = random_state(sk, 18);
  const std::vector<int> mask = {1, 1, 0, 0, 0, 0, 0};
  const HandPoseReference ref = reference_from_state(s, sk, mask);

  // Current contacts on joints 0 and 2: only joint 0 is also a target.
  s.hand_object_force[0] = 2.0;
  s.hand_object_force[2] = 3.0;
  const GoalFeatures g = goal_features(s, ref, sk);
  const int j = static_cast<int>(sk.hand_joints().size());
  CHECK(g.g_c[j + 0] == 1.0);
  CHECK(g.g_c[j + 1] == 0.0);
  CHECK(g.g_c[j + 2] == 0.0);

  HandPoseReference bad = ref;
  bad.contact.pop_back();
  CHECK_THROWS_AS(goal_features(s, bad, sk), InvalidArgument);
}

TEST_CASE("goal targets track the object as it moves") {
  const SkeletonSpec& sk = *desk_skeleton();
  const SimState s = random_state(sk, 19);
  const HandPoseReference ref = reference_from_state(s, sk, {1, 1, 1, 1, 1, 1, 1});

  SimState moved = s;
  const Vec3 d(0.2, -0.1, 0.3);
  moved.object.t += d;
  const GoalFeatures g0 = goal_features(s, ref, sk);
  const GoalFeatures g1 = goal_features(moved, ref, sk);
  // Pure object translation shifts every positional goal by the same
  // heading-relative vector; the rotation goals do not change because the
  // targets are anchored to the object frame.
  CHECK(max_abs_diff(g1.g_theta, g0.g_theta) < 1e-12);
  const Vec3 facing = s.pose.root_rot * Vec3::UnitX();
  const Quat heading(Eigen::AngleAxisd(std::atan2(facing[1], facing[0]), Vec3::UnitZ()));
  const Vec3 expect = heading.conjugate() * d;
  for (int k = 0; k < static_cast<int>(sk.hand_joints().size()); ++k) {
    CAPTURE(k);
    const Vec3 shift = Vec3(g1.g_x.segment<3>(k * 3)) - Vec3(g0.g_x.segment<3>(k * 3));
    CHECK((shift - expect).norm() < 1e-9);
  }
}

TEST_CASE("task observation is invariant under a yaw and horizontal shift") {
  const SkeletonSpec& sk = *desk_skeleton();
  const WorldConfig cfg = desk_world_config();
  const SimState a = random_state(sk, 23);
  const HandPoseReference ref = reference_from_state(a, sk, {0, 1, 1, 1, 1, 1, 1});

  TargetTrajectory traj;
  traj.body_pos = {Vec3(0.5, 0.1, 0.95), Vec3(0.6, 0.1, 0.95)};
  traj.hand_pos = {Vec3(0.6, -0.1, 1.0), Vec3(0.7, -0.1, 1.0)};

  const Quat yaw = canonical(Quat(Eigen::AngleAxisd(-0.8, Vec3::UnitZ())));
  const Vec3 shift(4.0, 1.5, 0.0);
  const SimState b = transform_state(a, yaw, shift);
  TargetTrajectory traj_b = traj;
  for (auto* list : {&traj_b.body_pos, &traj_b.hand_pos})
    for (Vec3& p : *list) p = yaw * p + shift;
  Transform table_a = desk_table();
  Transform table_b = table_a;
  table_b.t = yaw * table_a.t + shift;
  table_b.q = yaw * table_a.q;

  const HOFeatures fa = ho_features(a, ref, traj, sk, cfg, table_a, a.object.t[2]);
  const HOFeatures fb = ho_features(b, ref, traj_b, sk, cfg, table_b, b.object.t[2]);
  CHECK(max_abs_diff(fa.flat(), fb.flat()) < 1e-9);
}

TEST_CASE("task observation wires forces and table distance through") {
  const SkeletonSpec& sk = *desk_skeleton();
  const WorldConfig cfg = desk_world_config();
  SimState s = random_state(sk, 29);
  for (int i = 0; i < s.f.size(); ++i) s.f[i] = 100.0 + i;
  const HandPoseReference ref = reference_from_state(s, sk, {1, 0, 0, 0, 0, 0, 1});
  TargetTrajectory traj;
  traj.body_pos = {Vec3::Zero()};
  traj.hand_pos = {Vec3::Zero()};

  const Transform table = desk_table();
  const HOFeatures f = ho_features(s, ref, traj, sk, cfg, table, s.object.t[2]);

  const std::vector<int>& hand = sk.hand_joints();
  REQUIRE(f.forces.size() == static_cast<int>(hand.size()) + 2);
  for (size_t k = 0; k < hand.size(); ++k)
    CHECK(f.forces[static_cast<int>(k)] == s.f[hand[k]]);
  CHECK(f.forces[static_cast<int>(hand.size())] == s.f[s.object_slot()]);
  CHECK(f.forces[static_cast<int>(hand.size()) + 1] == s.f[s.table_slot()]);

  const double wrist_z = s.fk.pos[static_cast<size_t>(sk.wrist())][2];
  CHECK(f.table_dist == doctest::Approx(wrist_z - (table.t[2] + cfg.table_half[2])));
  CHECK(f.flat().size() == HOFeatures::dim(sk));
}

TEST_CASE("the phase variable steps through the six task stages") {
  const SkeletonSpec& sk = *desk_skeleton();
  Pose pose = sk.rest_pose();
  pose.root_pos = Vec3(0, 0, 0.95);
  SimState s = make_state(sk, pose);
  const Vec3 wrist = s.fk.pos[static_cast<size_t>(sk.wrist())];
  const double z0 = 0.79;

  s.object_table_force = 4.0;
  s.object.t = wrist + Vec3(0.8, 0.0, 0.0);
  s.object.t[2] = z0;
  // Keep the reported height equal to the initial height in all cases below
  // except the final one.
  auto at_distance = [&](double d) {
    SimState c = s;
    c.object.t = wrist + Vec3(d, 0.0, 0.0);
    c.object.t[2] = wrist[2];
    return c;
  };
  CHECK(phase(at_distance(0.8), sk, at_distance(0.8).object.t[2]) == 0.0);
  CHECK(phase(at_distance(0.51), sk, at_distance(0.51).object.t[2]) == 0.0);
  CHECK(phase(at_distance(0.3), sk, at_distance(0.3).object.t[2]) == 0.2);
  CHECK(phase(at_distance(0.5), sk, at_distance(0.5).object.t[2]) == 0.2);
  CHECK(phase(at_distance(0.15), sk, at_distance(0.15).object.t[2]) == 0.4);

  // Contact outranks distance, but only above the noise threshold.
  SimState touch = at_distance(0.15);
  touch.hand_object_force[3] = 0.05;
  CHECK(phase(touch, sk, touch.object.t[2]) == 0.4);
  touch.hand_object_force[3] = 0.5;
  CHECK(phase(touch, sk, touch.object.t[2]) == 0.6);

  // Leaving the table outranks contact; rising 3 cm outranks everything.
  SimState lifted = touch;
  lifted.object_table_force = 0.0;
  CHECK(phase(lifted, sk, lifted.object.t[2]) == 0.8);
  SimState risen = lifted;
  risen.object.t[2] += 0.031;
  CHECK(phase(risen, sk, risen.object.t[2] - 0.031) == 1.0);
  SimState barely = lifted;
  barely.object.t[2] += 0.029;
  CHECK(phase(barely, sk, barely.object.t[2] - 0.029) == 0.8);
}

TEST_CASE("the waypoint cursor advances on reach or deadline") {
  const SkeletonSpec& sk = *desk_skeleton();
  Pose pose = sk.rest_pose();
  pose.root_pos = Vec3(0, 0, 0.95);
  SimState s = make_state(sk, pose);
  const Vec3 wrist = s.fk.pos[static_cast<size_t>(sk.wrist())];

  TargetTrajectory traj;
  traj.body_pos = {Vec3(1, 0, 1), Vec3(1.1, 0, 1), Vec3(1.2, 0, 1)};
  traj.hand_pos = {wrist + Vec3(0.11, 0, 0), wrist + Vec3(5, 0, 0), wrist + Vec3(0.05, 0, 0)};

  const double dt = 1.0 / 30.0;
  // Within 0.12 m: reached immediately.
  CursorEvent ev = advance_cursor(traj, s, sk, dt);
  CHECK(ev.reached);
  CHECK(!ev.expired);
  CHECK(!ev.exhausted);
  CHECK(traj.cursor == 1);
  CHECK(traj.elapsed == 0.0);

  // 5 m away: the 0.2 s deadline expires after six 1/30 s ticks.
  for (int i = 0; i < 5; ++i) {
    ev = advance_cursor(traj, s, sk, dt);
    CHECK(!ev.reached);
    CHECK(!ev.expired);
    CHECK(traj.cursor == 1);
  }
  ev = advance_cursor(traj, s, sk, dt);
  CHECK(ev.expired);
  CHECK(traj.cursor == 2);

  // Final target reached: the trajectory is exhausted.
  ev = advance_cursor(traj, s, sk, dt);
  CHECK(ev.reached);
  CHECK(ev.exhausted);
  CHECK(trajectory_feature(s, traj, sk) == VecX::Zero(6));

  // Further updates only report exhaustion.
  ev = advance_cursor(traj, s, sk, dt);
  CHECK(ev.exhausted);
  CHECK(!ev.reached);
  CHECK(traj.cursor == 3);

  // A wrist 0.13 m away does not count as reached.
  TargetTrajectory far;
  far.body_pos = {Vec3(1, 0, 1)};
  far.hand_pos = {wrist + Vec3(0.13, 0, 0)};
  ev = advance_cursor(far, s, sk, dt);
  CHECK(!ev.reached);
  CHECK(far.cursor == 0);
}

TEST_CASE("the trajectory feature points at the current waypoint") {
  const SkeletonSpec& sk = *desk_skeleton();
  Pose pose = sk.rest_pose();
  pose.root_pos = Vec3(0.2, 0.1, 0.95);  // identity root: heading is identity
  SimState s = make_state(sk, pose);
  const Vec3 wrist = s.fk.pos[static_cast<size_t>(sk.wrist())];

  TargetTrajectory traj;
  traj.body_pos = {Vec3(1.0, 0.5, 0.95)};
  traj.hand_pos = {Vec3(0.9, 0.4, 1.1)};
  const VecX g = trajectory_feature(s, traj, sk);
  CHECK((Vec3(g.segment<3>(0)) - (traj.body_pos[0] - pose.root_pos)).norm() < 1e-12);
  CHECK((Vec3(g.segment<3>(3)) - (traj.hand_pos[0] - wrist)).norm() < 1e-12);

  // At both targets the feature vanishes.
  TargetTrajectory at;
  at.body_pos = {pose.root_pos};
  at.hand_pos = {wrist};
  CHECK(trajectory_feature(s, at, sk).cwiseAbs().maxCoeff() < 1e-12);
}
