#include "dexbody/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dexbody/config.hpp"
#include "dexbody/errors.hpp"
#include "dexbody/features.hpp"

namespace dexbody {

namespace {

/// Per-hand-joint surface samples in joint frames, built once per metric
/// call and re-posed per frame.
struct HandCloud {
  std::vector<int> joints;
  std::vector<std::vector<Vec3>> locals;
  size_t total = 0;

  HandCloud(const SkeletonSpec& skeleton, double spacing) {
    for (int j : skeleton.hand_joints()) {
      const GeomDef& geom = skeleton.joint(j).geom;
      if (geom.type == GeomType::kNone) continue;
      joints.push_back(j);
      locals.push_back(geom_surface_points(geom, spacing));
      total += locals.back().size();
    }
  }

  std::vector<Vec3> world(const FkResult& fk) const {
    std::vector<Vec3> out;
    out.reserve(total);
    for (size_t g = 0; g < joints.size(); ++g) {
      const Vec3& base = fk.pos[static_cast<size_t>(joints[g])];
      const Quat& rot = fk.rot[static_cast<size_t>(joints[g])];
      for (const Vec3& p : locals[g]) out.push_back(base + rot * p);
    }
    return out;
  }
};

double lowest_geom_z(const GeomDef& geom, const Vec3& pos, const Quat& rot, Vec3& point) {
  const Vec3 center = pos + rot * geom.offset;
  switch (geom.type) {
    case GeomType::kSphere: {
      point = center - Vec3(0.0, 0.0, geom.params[0]);
      return point[2];
    }
    case GeomType::kCapsule: {
      const Vec3 axis = (rot * geom.axis).normalized();
      const Vec3 a = center + axis * (0.5 * geom.params[1]);
      const Vec3 b = center - axis * (0.5 * geom.params[1]);
      point = (a[2] < b[2] ? a : b) - Vec3(0.0, 0.0, geom.params[0]);
      return point[2];
    }
    case GeomType::kBox: {
      double best = std::numeric_limits<double>::infinity();
      for (int sx = -1; sx <= 1; sx += 2)
        for (int sy = -1; sy <= 1; sy += 2)
          for (int sz = -1; sz <= 1; sz += 2) {
            const Vec3 corner =
                center + rot * Vec3(sx * geom.params[0], sy * geom.params[1],
                                    sz * geom.params[2]);
            if (corner[2] < best) {
              best = corner[2];
              point = corner;
            }
          }
      return best;
    }
    case GeomType::kNone:
      break;
  }
  return std::numeric_limits<double>::infinity();
}

/// Frame indices the penetration metrics average over: the tail of the
/// approach and an even spread of the manipulation segment.
std::vector<size_t> penetration_windows(const RolloutRecord& rollout) {
  const size_t n = rollout.frames.size();
  size_t split = n;
  for (size_t i = 0; i < n; ++i)
    if (rollout.frames[i].eta >= 0.6) {
      split = i;
      break;
    }
  std::vector<size_t> selected;
  const size_t approach_last = std::min<size_t>(split, 5);
  for (size_t k = split - approach_last; k < split; ++k) selected.push_back(k);
  const size_t manip = n - split;
  if (manip > 0) {
    if (manip <= 5) {
      for (size_t k = split; k < n; ++k) selected.push_back(k);
    } else {
      for (int k = 0; k < 5; ++k)
        selected.push_back(
            split + static_cast<size_t>(std::lround(k * (static_cast<double>(manip) - 1.0) / 4.0)));
    }
  }
  return selected;
}

}  // namespace

void MetricsConfig::validate() const {
  if (!(surface_spacing > 0.0)) throw InvalidArgument("surface_spacing must be positive");
  if (contact_tolerance < 0.0) throw InvalidArgument("contact_tolerance must be non-negative");
  if (skate_threshold < 0.0) throw InvalidArgument("skate_threshold must be non-negative");
  if (success_hold < 0.0) throw InvalidArgument("success_hold must be non-negative");
  if (!(reach_threshold > 0.0)) throw InvalidArgument("reach_threshold must be positive");
}

LowestPoint lowest_character_point(const Pose& pose, const SkeletonSpec& skeleton) {
  const FkResult fk = skeleton.forward_kinematics(pose);
  LowestPoint best;
  double best_z = std::numeric_limits<double>::infinity();
  for (int j = 0; j < skeleton.joint_count(); ++j) {
    const GeomDef& geom = skeleton.joint(j).geom;
    if (geom.type == GeomType::kNone) continue;
    Vec3 point;
    const double z = lowest_geom_z(geom, fk.pos[static_cast<size_t>(j)],
                                   fk.rot[static_cast<size_t>(j)], point);
    if (z < best_z) {
      best_z = z;
      best.point = point;
      best.joint = j;
    }
  }
  if (best.joint < 0) throw InvalidArgument("skeleton has no collision geometry");
  return best;
}

bool grasp_success(const RolloutRecord& rollout, const MetricsConfig& cfg) {
  cfg.validate();
  const auto& frames = rollout.frames;
  size_t lift = frames.size();
  for (size_t i = 0; i < frames.size(); ++i)
    if (frames[i].eta == 1.0) {
      lift = i;
      break;
    }
  if (lift == frames.size()) return false;
  const double deadline = frames[lift].time + cfg.success_hold;
  if (frames.back().time < deadline - 1e-9) return false;  // hold not observable
  for (size_t i = lift; i < frames.size() && frames[i].time <= deadline + 1e-9; ++i)
    if (frames[i].object_table_force > 0.0 || frames[i].object_ground_force > 0.0)
      return false;
  return true;
}

double ground_distance(const RolloutRecord& rollout, const SkeletonSpec& skeleton) {
  if (rollout.frames.empty()) throw InvalidArgument("ground distance needs at least one frame");
  double pos_sum = 0.0, neg_sum = 0.0;
  size_t pos_n = 0, neg_n = 0;
  for (const RolloutFrame& f : rollout.frames) {
    const double z = lowest_character_point(f.pose, skeleton).point[2];
    if (z > 0.0) {
      pos_sum += z;
      ++pos_n;
    } else if (z < 0.0) {
      neg_sum += z;
      ++neg_n;
    }
  }
  const double floating = pos_n ? pos_sum / static_cast<double>(pos_n) : 0.0;
  const double penetrating = neg_n ? neg_sum / static_cast<double>(neg_n) : 0.0;
  return (floating - penetrating) * 1000.0;
}

double foot_skating(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                    const MetricsConfig& cfg) {
  cfg.validate();
  const size_t n = rollout.frames.size();
  if (n < 2) throw InvalidArgument("foot skating needs at least two frames");
  Vec3 prev = lowest_character_point(rollout.frames[0].pose, skeleton).point;
  size_t skating = 0;
  for (size_t i = 1; i < n; ++i) {
    const Vec3 cur = lowest_character_point(rollout.frames[i].pose, skeleton).point;
    const double dxy = std::hypot(cur[0] - prev[0], cur[1] - prev[1]);
    if (dxy > cfg.skate_threshold) ++skating;
    prev = cur;
  }
  return 100.0 * static_cast<double>(skating) / static_cast<double>(n - 1);
}

Penetration penetration_of_points(const std::vector<Vec3>& points, const ObjectSpec& object,
                                  const Transform& object_pose, double area_per_point) {
  if (!(area_per_point > 0.0)) throw InvalidArgument("area_per_point must be positive");
  Penetration pen;
  for (const Vec3& p : points) {
    const double sdf = primitive_sdf(object.type, object.dims, object_pose.apply_inverse(p));
    if (sdf < 0.0) {
      pen.volume += -sdf * area_per_point;
      pen.depth = std::max(pen.depth, -sdf);
    }
  }
  return pen;
}

std::vector<Vec3> hand_surface_points(const Pose& pose, const SkeletonSpec& skeleton,
                                      double spacing) {
  if (!(spacing > 0.0)) throw InvalidArgument("spacing must be positive");
  const HandCloud cloud(skeleton, spacing);
  return cloud.world(skeleton.forward_kinematics(pose));
}

Interpenetration interpenetration(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                                  const ObjectSpec& object, const MetricsConfig& cfg) {
  cfg.validate();
  if (rollout.frames.empty()) throw InvalidArgument("interpenetration needs at least one frame");
  const HandCloud cloud(skeleton, cfg.surface_spacing);
  const double area = cfg.surface_spacing * cfg.surface_spacing;
  const std::vector<size_t> selected = penetration_windows(rollout);
  Interpenetration out;
  if (selected.empty()) return out;
  for (size_t i : selected) {
    const RolloutFrame& f = rollout.frames[i];
    const Penetration pen = penetration_of_points(
        cloud.world(skeleton.forward_kinematics(f.pose)), object, f.object, area);
    out.volume_cm3 += pen.volume;
    out.depth_mm += pen.depth;
  }
  const double inv = 1.0 / static_cast<double>(selected.size());
  out.volume_cm3 *= inv * 1.0e6;
  out.depth_mm *= inv * 1.0e3;
  return out;
}

double targets_reached(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                       const MetricsConfig& cfg) {
  cfg.validate();
  if (rollout.trajectory.count() == 0)
    throw InvalidArgument("rollout carries no trajectory to score");
  TargetTrajectory traj = rollout.trajectory;
  traj.cursor = 0;
  traj.elapsed = 0.0;
  size_t reached = 0;
  SimState probe;
  for (size_t i = static_cast<size_t>(rollout.trajectory_start); i < rollout.frames.size();
       ++i) {
    probe.fk = skeleton.forward_kinematics(rollout.frames[i].pose);
    const CursorEvent ev =
        advance_cursor(traj, probe, skeleton, rollout.frame_dt, cfg.reach_threshold);
    if (ev.reached) ++reached;
    if (ev.exhausted) break;
  }
  return static_cast<double>(reached) / static_cast<double>(rollout.trajectory.count());
}

double contact_ratio(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                     const ObjectSpec& object, const MetricsConfig& cfg) {
  cfg.validate();
  if (rollout.frames.empty()) throw InvalidArgument("contact ratio needs at least one frame");
  const HandCloud cloud(skeleton, cfg.surface_spacing);
  if (cloud.total == 0) return 0.0;
  double sum = 0.0;
  for (const RolloutFrame& f : rollout.frames) {
    const std::vector<Vec3> points = cloud.world(skeleton.forward_kinematics(f.pose));
    size_t close = 0;
    for (const Vec3& p : points) {
      const double sdf = primitive_sdf(object.type, object.dims, f.object.apply_inverse(p));
      if (std::abs(sdf) <= cfg.contact_tolerance) ++close;
    }
    sum += static_cast<double>(close) / static_cast<double>(points.size());
  }
  return sum / static_cast<double>(rollout.frames.size());
}

VecX gaussian_smooth_channel(const VecX& values, double sigma) {
  if (sigma < 0.0) throw InvalidArgument("sigma must be non-negative");
  const Eigen::Index n = values.size();
  if (sigma == 0.0 || n < 2) return values;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  VecX weights(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    weights[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));
  weights /= weights.sum();
  // Mirror about the boundary samples; repeated folding handles kernels
  // wider than the signal.
  const auto reflect = [n](Eigen::Index i) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
  };
  VecX out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k)
      acc += weights[k + radius] * values[reflect(i + k)];
    out[i] = acc;
  }
  return out;
}

namespace {

/// Smooths a quaternion track through sign-unwrapped log maps.
void smooth_rotation_track(std::vector<Quat*>& track, double sigma) {
  const Eigen::Index n = static_cast<Eigen::Index>(track.size());
  std::vector<Quat> unwrapped(track.size());
  for (size_t i = 0; i < track.size(); ++i) {
    Quat q = *track[i];
    if (i > 0 && q.dot(unwrapped[i - 1]) < 0.0) q.coeffs() = -q.coeffs();
    unwrapped[i] = q;
  }
  MatX logs(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 r = quat_log(unwrapped[static_cast<size_t>(i)]);
    logs.row(i) = r.transpose();
  }
  for (int c = 0; c < 3; ++c) logs.col(c) = gaussian_smooth_channel(logs.col(c), sigma);
  for (Eigen::Index i = 0; i < n; ++i)
    *track[static_cast<size_t>(i)] = canonical(quat_exp(Vec3(logs.row(i).transpose())));
}

}  // namespace

RolloutRecord gaussian_smooth(const RolloutRecord& rollout, double sigma) {
  if (sigma < 0.0) throw InvalidArgument("sigma must be non-negative");
  RolloutRecord out = rollout;
  if (sigma == 0.0 || out.frames.size() < 2) return out;
  const Eigen::Index n = static_cast<Eigen::Index>(out.frames.size());

  const auto smooth_positions = [&](auto&& get) {
    for (int c = 0; c < 3; ++c) {
      VecX channel(n);
      for (Eigen::Index i = 0; i < n; ++i) channel[i] = get(out.frames[static_cast<size_t>(i)])[c];
      channel = gaussian_smooth_channel(channel, sigma);
      for (Eigen::Index i = 0; i < n; ++i) get(out.frames[static_cast<size_t>(i)])[c] = channel[i];
    }
  };
  smooth_positions([](RolloutFrame& f) -> Vec3& { return f.pose.root_pos; });
  smooth_positions([](RolloutFrame& f) -> Vec3& { return f.object.t; });

  std::vector<Quat*> track(out.frames.size());
  for (size_t i = 0; i < out.frames.size(); ++i) track[i] = &out.frames[i].pose.root_rot;
  smooth_rotation_track(track, sigma);
  for (size_t i = 0; i < out.frames.size(); ++i) track[i] = &out.frames[i].object.q;
  smooth_rotation_track(track, sigma);
  const size_t joints = out.frames.front().pose.joint_rot.size();
  for (size_t j = 1; j < joints; ++j) {
    for (size_t i = 0; i < out.frames.size(); ++i)
      track[i] = &out.frames[i].pose.joint_rot[j];
    smooth_rotation_track(track, sigma);
  }
  return out;
}

EvalReport evaluate(const RolloutRecord& rollout, const SkeletonSpec& skeleton,
                    const ObjectSpec& object, const MetricsConfig& cfg) {
  cfg.validate();
  EvalReport report;
  report.success = grasp_success(rollout, cfg) ? 1.0 : 0.0;
  report.success_rate = report.success;
  report.gd_mm = ground_distance(rollout, skeleton);
  report.fs_percent = foot_skating(rollout, skeleton, cfg);
  const Interpenetration pen = interpenetration(rollout, skeleton, object, cfg);
  report.iv_cm3 = pen.volume_cm3;
  report.id_mm = pen.depth_mm;
  report.ttr = rollout.trajectory.count() > 0 ? targets_reached(rollout, skeleton, cfg) : 0.0;
  report.cr = contact_ratio(rollout, skeleton, object, cfg);
  report.episodes = 1;
  return report;
}

EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw InvalidArgument("no reports to merge");
  EvalReport out;
  out.episodes = 0;
  for (const EvalReport& r : reports) {
    const double w = static_cast<double>(r.episodes);
    out.success_rate += w * r.success_rate;
    out.gd_mm += w * r.gd_mm;
    out.fs_percent += w * r.fs_percent;
    out.iv_cm3 += w * r.iv_cm3;
    out.id_mm += w * r.id_mm;
    out.ttr += w * r.ttr;
    out.cr += w * r.cr;
    out.episodes += r.episodes;
  }
  const double inv = 1.0 / static_cast<double>(out.episodes);
  out.success_rate *= inv;
  out.gd_mm *= inv;
  out.fs_percent *= inv;
  out.iv_cm3 *= inv;
  out.id_mm *= inv;
  out.ttr *= inv;
  out.cr *= inv;
  out.success = out.success_rate;
  return out;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "success_rate,gd_mm,fs_percent,iv_cm3,id_mm,ttr,cr,episodes\n";
  out << format_double(report.success_rate) << ',' << format_double(report.gd_mm) << ','
      << format_double(report.fs_percent) << ',' << format_double(report.iv_cm3) << ','
      << format_double(report.id_mm) << ',' << format_double(report.ttr) << ','
      << format_double(report.cr) << ',' << report.episodes << '\n';
  return out.str();
}

std::string report_summary(const EvalReport& report) {
  std::ostringstream out;
  out << "episodes:               " << report.episodes << '\n';
  out << "success rate:           " << format_double(report.success_rate) << '\n';
  out << "ground distance:        " << format_double(report.gd_mm) << " mm\n";
  out << "foot skating:           " << format_double(report.fs_percent) << " %\n";
  out << "penetration volume:     " << format_double(report.iv_cm3) << " cm^3\n";
  out << "penetration depth:      " << format_double(report.id_mm) << " mm\n";
  out << "targets reached:        " << format_double(report.ttr) << '\n';
  out << "contact ratio:          " << format_double(report.cr) << '\n';
  return out.str();
}

}  // namespace dexbody
