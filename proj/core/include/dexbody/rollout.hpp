#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dexbody/mathcore.hpp"
#include "dexbody/physim.hpp"
#include "dexbody/refgen.hpp"
#include "dexbody/skeleton.hpp"

namespace dexbody {

/// One recorded control tick: the kinematic state plus the contact readouts
/// the evaluation metrics depend on. Forces are captured at record time so a
/// saved episode can be scored without re-running the simulation.
struct RolloutFrame {
  double time = 0.0;
  Pose pose;
  Transform object;
  VecX hand_object_force;  // per hand joint in skeleton hand order, N
  double object_table_force = 0.0;   // normal force sum, N
  double object_ground_force = 0.0;  // normal force sum, N
  double eta = 0.0;                  // task progress stage in [0, 1]
};

/// Self-contained record of one executed episode. Holds everything the
/// metrics need: per-tick poses, object transforms, contact forces and the
/// progress stage, the target trajectory the episode pursued together with
/// the tick pursuit began on, and the skeleton hash so a record never
/// silently pairs with the wrong character.
struct RolloutRecord {
  std::vector<RolloutFrame> frames;
  /// Waypoints as handed to the episode; cursor fields at initial values.
  TargetTrajectory trajectory;
  /// Frame index where waypoint pursuit starts. Earlier frames are the
  /// approach and do not count against trajectory-following metrics.
  int trajectory_start = 0;
  Transform table;
  double frame_dt = 1.0 / 30.0;
  std::uint64_t skeleton_hash = 0;

  int frame_count() const { return static_cast<int>(frames.size()); }
  double duration() const;

  /// Checks the skeleton hash, frame spacing, per-frame force vector sizes,
  /// the eta range and the trajectory fields; throws SchemaError on the
  /// first violation.
  void validate(const SkeletonSpec& skeleton) const;

  void save(const std::string& path, const SkeletonSpec& skeleton) const;
  static RolloutRecord load(const std::string& path, const SkeletonSpec& skeleton);
};

/// Deterministic reference replay through the contact model: drives the
/// world kinematically through every clip frame, then holds the final frame
/// for hold_seconds so post-lift stability is observable. The result is a
/// known-good episode for metric self-consistency checks.
RolloutRecord scripted_rollout(const MotionClip& clip,
                               const std::shared_ptr<const SkeletonSpec>& skeleton,
                               const WorldConfig& config, double hold_seconds = 0.6);

}  // namespace dexbody
