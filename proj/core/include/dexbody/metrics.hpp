#pragma once

#include <string>
#include <vector>

#include "dexbody/collision.hpp"
#include "dexbody/mathcore.hpp"
#include "dexbody/rollout.hpp"
#include "dexbody/skeleton.hpp"

namespace dexbody {

/// Evaluation knobs. Defaults match the documented metric definitions; the
/// sampling spacing is exposed because the hand surface metrics are sampled,
/// not mesh-based, and their convergence is resolution-tested.
struct MetricsConfig {
  double surface_spacing = 0.01;   // hand surface sample spacing, m (1 pt/cm^2)
  double contact_tolerance = 0.005;  // contact-ratio distance to surface, m
  double skate_threshold = 0.01;     // skating displacement per frame, m
  double success_hold = 0.5;         // seconds the grasp must survive post-lift
  double reach_threshold = 0.12;     // trajectory target acceptance radius, m

  void validate() const;
};

/// Aggregated evaluation of one or more episodes. Distances are reported in
/// the units the numbers are usually discussed in: millimeters for contact
/// offsets, cm^3 for penetration volume, percentages for rates.
struct EvalReport {
  double success = 0.0;       // this episode: 1 lifted and held, else 0
  double success_rate = 0.0;  // mean over merged episodes
  double gd_mm = 0.0;         // ground distance
  double fs_percent = 0.0;    // foot skating
  double iv_cm3 = 0.0;        // interpenetration volume
  double id_mm = 0.0;         // interpenetration depth
  double ttr = 0.0;           // trajectory targets reached
  double cr = 0.0;            // contact ratio
  int episodes = 1;
};

/// Lowest character surface point of a pose, over all collision geoms.
/// Ground distance and foot skating both derive from this one routine.
struct LowestPoint {
  Vec3 point = Vec3::Zero();
  int joint = -1;
};
LowestPoint lowest_character_point(const Pose& pose, const SkeletonSpec& skeleton);

/// Lift followed by an unbroken hold: the object reaches the risen progress
/// stage and neither table nor ground touches it for hold seconds after.
/// Episodes too short to observe the full hold window count as failures.
bool grasp_success(const RolloutRecord& rollout, const MetricsConfig& cfg = {});

/// Mean lowest-point height over floating frames minus mean over penetrating
/// frames, in millimeters. A side with no frames contributes zero.
double ground_distance(const RolloutRecord& rollout, const SkeletonSpec& skeleton);

/// Percent of frame transitions whose lowest-point horizontal displacement
/// exceeds the skating threshold. Vertical motion is ignored.
double foot_skating(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                    const MetricsConfig& cfg = {});

/// Penetration of a world-space point cloud into a primitive: volume is the
/// depth-weighted area sum (each point carries area_per_point of surface),
/// depth is the deepest sample. Both zero when nothing penetrates.
struct Penetration {
  double volume = 0.0;  // m^3
  double depth = 0.0;   // m
};
Penetration penetration_of_points(const std::vector<Vec3>& points,
                                  const ObjectSpec& object, const Transform& object_pose,
                                  double area_per_point);

/// Hand surface samples in world frame at the given spacing, concatenated
/// over every hand joint that carries collision geometry.
std::vector<Vec3> hand_surface_points(const Pose& pose, const SkeletonSpec& skeleton,
                                      double spacing);

/// Hand-into-object penetration over evaluation windows: the last five
/// approach frames plus five evenly distributed manipulation frames (the
/// split is the first frame whose progress stage shows hand contact).
/// Volume and depth are averages of the per-frame values over the selected
/// frames, converted to cm^3 and mm.
struct Interpenetration {
  double volume_cm3 = 0.0;
  double depth_mm = 0.0;
};
Interpenetration interpenetration(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                                  const ObjectSpec& object, const MetricsConfig& cfg = {});

/// Fraction of trajectory targets the wrist reaches in time, replaying the
/// recorded frames from the tick pursuit began on. Throws InvalidArgument
/// when the record carries no trajectory.
double targets_reached(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                       const MetricsConfig& cfg = {});

/// Mean fraction of hand surface samples within the contact tolerance of the
/// object surface, averaged over every frame.
double contact_ratio(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                     const ObjectSpec& object, const MetricsConfig& cfg = {});

/// Temporal Gaussian filter of one channel with reflection padding at the
/// ends. sigma is in frames; sigma = 0 returns the input unchanged.
VecX gaussian_smooth_channel(const VecX& values, double sigma);

/// Smooths the kinematic channels of a record: positions directly, rotations
/// through their unwrapped log maps. Forces and progress stages stay as
/// recorded since they describe the original execution. sigma = 0 returns
/// the record bit-identical.
RolloutRecord gaussian_smooth(const RolloutRecord& rollout, double sigma);

/// Runs the full metric suite on one episode.
EvalReport evaluate(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                    const ObjectSpec& object, const MetricsConfig& cfg = {});

/// Episode-count-weighted aggregation. Throws InvalidArgument when empty.
EvalReport merge_reports(const std::vector<EvalReport>& reports);

/// CSV form: one header line plus one row, no timestamps.
std::string report_csv(const EvalReport& report);

/// Human-readable multi-line summary.
std::string report_summary(const EvalReport& report);

}  // namespace dexbody
