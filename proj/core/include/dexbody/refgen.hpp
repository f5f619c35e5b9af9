#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dexbody/mathcore.hpp"
#include "dexbody/physim.hpp"
#include "dexbody/skeleton.hpp"

namespace dexbody {

enum class Phase { kApproach, kManipulate };

const char* phase_name(Phase p);
Phase phase_from_name(const std::string& name);

struct ClipFrame {
  double time = 0.0;
  Pose pose;
  Transform object;
  Phase phase = Phase::kApproach;
};

/// Kinematic reference motion sampled at 30 Hz: character pose plus object
/// transform per frame, with a per-frame approach/manipulate tag. Frames are
/// immutable once generated; clips cap out at 4 s.
struct MotionClip {
  std::vector<ClipFrame> frames;
  Transform table;
  std::uint64_t skeleton_hash = 0;

  static constexpr double kFrameDt = 1.0 / 30.0;
  static constexpr double kMaxDuration = 4.0;

  int frame_count() const { return static_cast<int>(frames.size()); }
  double duration() const;

  /// Checks frame spacing, joint limits, the duration cap, and the skeleton
  /// hash; throws SchemaError on the first violation.
  void validate(const SkeletonSpec& skeleton) const;

  void save(const std::string& path, const SkeletonSpec& skeleton) const;
  static MotionClip load(const std::string& path, const SkeletonSpec& skeleton);
};

/// Grasp snapshot lifted from a clip: hand joint rotations, wrist position,
/// the object transform at that frame, object-relative hand joint positions
/// derived from them, and a per-hand-joint contact flag.
struct HandPoseReference {
  /// [0] holds the wrist rotation in world frame; the remaining entries are
  /// local rotations of the other hand joints, in skeleton hand order.
  std::vector<Quat> hand_rot;
  Vec3 wrist_pos = Vec3::Zero();
  Transform object;
  std::vector<Vec3> joint_local;
  std::vector<int> contact;
  int source_frame = 0;

  int contact_count() const;

  /// Recomputes joint_local from (hand_rot, wrist_pos, object) so the stored
  /// targets always agree with hand forward kinematics.
  void derive_joint_targets(const SkeletonSpec& skeleton);

  /// World-frame hand joint positions via forward kinematics from the wrist.
  std::vector<Vec3> world_joint_positions(const SkeletonSpec& skeleton) const;
};

/// Root and wrist target positions spaced 1/15 s apart, consumed cursor-first
/// by the tracking task.
struct TargetTrajectory {
  std::vector<Vec3> body_pos;
  std::vector<Vec3> hand_pos;
  int cursor = 0;
  double elapsed = 0.0;   // time spent pursuing the current waypoint
  double deadline = 0.2;  // seconds allowed per waypoint before moving on

  static constexpr double kSpacing = 1.0 / 15.0;
  static constexpr double kMaxStep = 0.3;

  int count() const { return static_cast<int>(body_pos.size()); }
  /// Throws SchemaError when empty or when consecutive targets are farther
  /// apart than a character can follow.
  void validate() const;
};

/// Procedurally synthesizes reference clips on the given skeleton: walk to
/// the table, reach over the object, close the fingers until contact, then
/// lift and carry. Deterministic per seed; every pose is limit-clamped; the
/// approach tag flips to manipulate at the first frame whose replayed contact
/// count reaches two.
std::vector<MotionClip> generate_reference_set(
    const std::shared_ptr<const SkeletonSpec>& skeleton, const WorldConfig& config,
    std::uint64_t seed, int count);

/// Picks the frame with the most hand-object contacts inside a 0.5 s window
/// after first contact (earliest frame wins ties) and returns it plus the
/// +-2-frame neighbors that also satisfy the two-contact minimum, chosen
/// frame first. Throws ExtractionError when the clip never makes contact.
std::vector<HandPoseReference> extract_hand_references(
    const MotionClip& clip, const std::shared_ptr<const SkeletonSpec>& skeleton,
    const WorldConfig& config);

/// Samples every 2nd frame from window_start to the clip end into root and
/// wrist waypoints (floor(duration * 15) of them). Throws InvalidArgument
/// when window_start lies outside the clip or too close to its end to leave
/// a waypoint.
TargetTrajectory extract_trajectory(const MotionClip& clip, const SkeletonSpec& skeleton,
                                    int window_start);

struct RandomizeParams {
  double ref_noise = 0.030;   // reference positions, m, per axis
  double traj_noise = 0.002;  // trajectory targets, m, per axis
  double yaw_range = 30.0 * M_PI / 180.0;
};

struct RandomizedSet {
  HandPoseReference ref;
  TargetTrajectory traj;
  Transform object;
  /// Translation applied to the object spawn; the table must shift by the
  /// same amount so the object still rests on it.
  Vec3 scene_offset = Vec3::Zero();
};

/// Training-time perturbation: reference positions jitter per axis, each
/// trajectory target jitters independently, the object spawn shifts (shared
/// with the table via scene_offset) and yaws. Deterministic per seed.
RandomizedSet randomize(const SkeletonSpec& skeleton, const HandPoseReference& ref,
                        const TargetTrajectory& traj, const Transform& object_pose,
                        std::uint64_t seed, const RandomizeParams& params = {});

}  // namespace dexbody
