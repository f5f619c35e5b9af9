#pragma once

#include "dexbody/mathcore.hpp"
#include "dexbody/physim.hpp"
#include "dexbody/refgen.hpp"
#include "dexbody/skeleton.hpp"

namespace dexbody {

/// World-frame linear and angular velocity of every joint body, derived from
/// the root velocity and the local coordinate rates by chaining down the
/// tree. Indexed by joint id.
struct WorldVelocities {
  std::vector<Vec3> lin;
  std::vector<Vec3> ang;
};
WorldVelocities joint_world_velocities(const SimState& state, const SkeletonSpec& skeleton);

/// Joints covered by the body observation: the body subset plus the wrist.
/// The wrist is anatomically part of the arm even though its actuation
/// belongs to the hand subset, and the body policy tracks wrist targets.
std::vector<int> body_feature_joints(const SkeletonSpec& skeleton);

/// Body observation in the heading frame (the yaw-only rotation of the root,
/// anchored at the root position), so the whole vector ignores where the
/// character stands and which way it faces. Rotations use the 6D encoding;
/// rotational velocities are the time derivative of that encoding.
struct BodyFeatures {
  VecX rot;       // 6 per feature joint, heading-relative world rotation
  VecX rot_vel;   // 6 per feature joint
  VecX pos;       // 3 per feature joint, heading-relative
  VecX vel;       // 3 per feature joint, heading-relative
  double height = 0.0;          // root z in world frame
  Vec3 root_vel = Vec3::Zero();  // heading-relative root linear velocity

  VecX flat() const;
  static int dim(const SkeletonSpec& skeleton);
};
BodyFeatures body_features(const SimState& state, const SkeletonSpec& skeleton);

/// Pruned body observation for the imitation discriminator: parent-local
/// joint rotations and rotation rates, heading-relative positions of the key
/// joints only, root height and root velocity.
struct BodyDiscFeatures {
  VecX rot;      // 6 per feature joint, parent-local
  VecX rot_vel;  // 6 per feature joint
  VecX key_pos;  // 3 per key joint, heading-relative
  double height = 0.0;
  Vec3 root_vel = Vec3::Zero();

  VecX flat() const;
  static int dim(const SkeletonSpec& skeleton);
};
BodyDiscFeatures disc_body_features(const SimState& state, const SkeletonSpec& skeleton);

/// Hand observation: local digit rotations and rates plus wrist-relative
/// digit positions. Invariant under any rigid motion of the whole hand.
struct HandFeatures {
  VecX rot;      // 6 per digit joint, parent-local
  VecX rot_vel;  // 6 per digit joint
  VecX pos;      // 3 per digit joint, wrist-relative

  VecX flat() const;
  static int dim(const SkeletonSpec& skeleton);
};
HandFeatures hand_features(const SimState& state, const SkeletonSpec& skeleton);

/// Pruned hand observation for the discriminator: digit rotations and rates
/// as above, but only fingertip positions.
struct HandDiscFeatures {
  VecX rot;
  VecX rot_vel;
  VecX tip_pos;  // 3 per fingertip, wrist-relative

  VecX flat() const;
  static int dim(const SkeletonSpec& skeleton);
};
HandDiscFeatures disc_hand_features(const SimState& state, const SkeletonSpec& skeleton);

/// Grasp-goal observation against a hand pose reference. Targets are stored
/// object-relative in the reference and mapped through the current object
/// pose, so they follow the object wherever it moves.
struct GoalFeatures {
  VecX g_x;      // 3 per hand joint: target minus current position, heading frame
  VecX g_theta;  // 6 per hand joint: target rotation relative to current
  VecX g_c;      // target contact mask then achieved mask, 1 per hand joint each

  VecX flat() const;
  static int dim(const SkeletonSpec& skeleton);
};
GoalFeatures goal_features(const SimState& state, const HandPoseReference& ref,
                           const SkeletonSpec& skeleton);

/// Heading-relative offsets to the current trajectory waypoint: root target
/// minus root, wrist target minus wrist. Zero once the cursor is exhausted.
VecX trajectory_feature(const SimState& state, const TargetTrajectory& traj,
                        const SkeletonSpec& skeleton);

/// Outcome of one cursor update.
struct CursorEvent {
  bool reached = false;    // wrist came within the reach threshold
  bool expired = false;    // the per-target deadline ran out
  bool exhausted = false;  // no waypoint remains after this update
};

/// Advances the waypoint cursor: a reach or an expired deadline both move on
/// to the next target. Call once per control tick with that tick's duration.
CursorEvent advance_cursor(TargetTrajectory& traj, const SimState& state,
                           const SkeletonSpec& skeleton, double dt,
                           double reach_threshold = 0.12);

/// Task progress in six quantized stages, keyed to the grasp-and-lift
/// storyline. The highest satisfied predicate wins:
///   1.0  object risen more than 3 cm above its initial height
///   0.8  object off the table (zero table contact force)
///   0.6  hand in contact with the object (force above the noise threshold)
///   0.4  wrist within 0.2 m of the object
///   0.2  wrist within 0.5 m
///   0.0  wrist farther than 0.5 m
double phase(const SimState& state, const SkeletonSpec& skeleton, double initial_object_z);

/// Contact force below which the hand does not count as touching the object
/// for the phase variable; grazing penalty contacts stay under it.
inline constexpr double kPhaseContactThreshold = 0.1;

/// Full task observation for the hand-object policy.
struct HOFeatures {
  VecX obj_pose;       // 3 position + 6 rotation, heading frame
  VecX obj_vel;        // 3 linear + 3 angular, heading frame
  GoalFeatures goal;
  VecX g_xi;           // 6, trajectory offsets
  VecX forces;         // net force per hand joint, then object, then table
  double table_dist = 0.0;  // wrist height above the tabletop plane, signed
  double eta = 0.0;

  VecX flat() const;
  static int dim(const SkeletonSpec& skeleton);
};
HOFeatures ho_features(const SimState& state, const HandPoseReference& ref,
                       const TargetTrajectory& traj, const SkeletonSpec& skeleton,
                       const WorldConfig& config, const Transform& table,
                       double initial_object_z);

}  // namespace dexbody
