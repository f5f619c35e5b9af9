#include "dexbody/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dexbody/config.hpp"
#include "dexbody/errors.hpp"
#include "dexbody/refgen.hpp"
#include "dexbody/rollout.hpp"
#include "support/test_util.hpp"

namespace dexbody::test {
namespace {

const RolloutRecord& oracle_rollout() {
  static const RolloutRecord rec = [] {
    const std::vector<MotionClip> clips =
        generate_reference_set(desk_skeleton(), desk_world_config(), 7, 1);
    return scripted_rollout(clips[0], desk_skeleton(), desk_world_config());
  }();
  return rec;
}

/// Record of stationary rest-pose frames; per-frame root offsets position
/// the character for the ground metrics.
RolloutRecord static_record(const std::vector<Vec3>& root_offsets) {
  const SkeletonSpec& sk = *desk_skeleton();
  RolloutRecord rec;
  rec.skeleton_hash = sk.source_hash();
  rec.table = desk_table();
  const Pose rest = sk.rest_pose();
  for (size_t i = 0; i < root_offsets.size(); ++i) {
    RolloutFrame f;
    f.time = static_cast<double>(i) * rec.frame_dt;
    f.pose = rest;
    f.pose.root_pos += root_offsets[i];
    f.object = Transform{};
    f.object.t = Vec3(5.0, 5.0, 0.5);  // far away unless a test moves it
    f.hand_object_force = VecX::Zero(static_cast<Eigen::Index>(sk.hand_joints().size()));
    rec.frames.push_back(std::move(f));
  }
  return rec;
}

double rest_lowest_z() {
  static const double z =
      lowest_character_point(desk_skeleton()->rest_pose(), *desk_skeleton()).point[2];
  return z;
}

}  // namespace

TEST_CASE("lowest character point matches a dense surface sampling") {
  const SkeletonSpec& sk = *desk_skeleton();
  Pose pose = sk.rest_pose();
  // Tilt and lift so no geom sits axis-aligned.
  pose.root_pos += Vec3(0.2, -0.1, 0.1);
  pose.root_rot = canonical(Quat(Eigen::AngleAxisd(0.4, Vec3(0.3, 1.0, 0.2).normalized())));
  const LowestPoint lp = lowest_character_point(pose, sk);

  // Independent route: brute-force minimum over densely sampled surfaces.
  const FkResult fk = sk.forward_kinematics(pose);
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < sk.joint_count(); ++j) {
    const GeomDef& geom = sk.joint(j).geom;
    if (geom.type == GeomType::kNone) continue;
    for (const Vec3& s : geom_surface_points(geom, 0.001)) {
      const Vec3 w = fk.pos[static_cast<size_t>(j)] + fk.rot[static_cast<size_t>(j)] * s;
      best = std::min(best, w[2]);
    }
  }
  CHECK(lp.point[2] == doctest::Approx(best).epsilon(0.0).scale(1.0).epsilon(2e-3));
  CHECK(lp.point[2] <= best + 1e-12);  // analytic minimum can only be lower
  CHECK(lp.joint >= 0);
}

TEST_CASE("lowest point follows a rigid root shift exactly") {
  const SkeletonSpec& sk = *desk_skeleton();
  const Pose rest = sk.rest_pose();
  Pose shifted = rest;
  shifted.root_pos += Vec3(0.3, -0.2, 0.15);
  const LowestPoint a = lowest_character_point(rest, sk);
  const LowestPoint b = lowest_character_point(shifted, sk);
  CHECK(b.joint == a.joint);
  CHECK((b.point - a.point - Vec3(0.3, -0.2, 0.15)).norm() < 1e-12);
}

TEST_CASE("ground distance fixtures") {
  const SkeletonSpec& sk = *desk_skeleton();
  const double z0 = rest_lowest_z();
  const auto at_heights = [&](const std::vector<double>& mm) {
    std::vector<Vec3> offsets;
    for (double h : mm) offsets.push_back(Vec3(0.0, 0.0, h * 1e-3 - z0));
    return static_record(offsets);
  };

  SUBCASE("one-sided floating") {
    CHECK(ground_distance(at_heights({5.0, 5.0, 5.0}), sk) == doctest::Approx(5.0).epsilon(1e-9));
  }
  SUBCASE("floating plus one penetrating frame") {
    CHECK(ground_distance(at_heights({4.0, 6.0, -2.0}), sk) == doctest::Approx(7.0).epsilon(1e-9));
  }
  SUBCASE("exact contact throughout") {
    CHECK(std::abs(ground_distance(at_heights({0.0, 0.0, 0.0}), sk)) < 1e-9);
  }
  SUBCASE("empty record rejected") {
    CHECK_THROWS_AS(ground_distance(static_record({}), sk), InvalidArgument);
  }
}

TEST_CASE("foot skating fixtures") {
  const SkeletonSpec& sk = *desk_skeleton();

  SUBCASE("stationary stance") {
    const RolloutRecord rec = static_record(std::vector<Vec3>(8, Vec3::Zero()));
    CHECK(foot_skating(rec, sk) == 0.0);
  }
  SUBCASE("half the transitions slide") {
    // 10 transitions: odd ones move 1.5 cm sideways, even ones hold still.
    std::vector<Vec3> offsets;
    double x = 0.0;
    for (int i = 0; i <= 10; ++i) {
      offsets.push_back(Vec3(x, 0.0, 0.0));
      if (i % 2 == 0) x += 0.015;
    }
    CHECK(foot_skating(static_record(offsets), sk) == 50.0);
  }
  SUBCASE("vertical motion is ignored") {
    std::vector<Vec3> offsets;
    for (int i = 0; i < 8; ++i) offsets.push_back(Vec3(0.0, 0.0, 0.02 * (i % 2)));
    CHECK(foot_skating(static_record(offsets), sk) == 0.0);
  }
  SUBCASE("single frame rejected") {
    CHECK_THROWS_AS(foot_skating(static_record({Vec3::Zero()}), sk), InvalidArgument);
  }
}

TEST_CASE("point cloud penetration against an analytic sphere") {
  const ObjectSpec sphere = ObjectSpec::make(PrimitiveType::kSphere, Vec3(0.05, 0.0, 0.0), 1000.0);
  const Transform pose;  // identity

  SUBCASE("plane dipping a known depth") {
    // Grid centered on the axis at |p| = r - d: the deepest sample sits
    // exactly d inside the surface.
    const double d = 0.007;
    std::vector<Vec3> cloud;
    for (int ix = -4; ix <= 4; ++ix)
      for (int iy = -4; iy <= 4; ++iy)
        cloud.push_back(Vec3(ix * 0.005, iy * 0.005, 0.05 - d));
    const Penetration pen = penetration_of_points(cloud, sphere, pose, 0.005 * 0.005);
    CHECK(pen.depth == doctest::Approx(d).epsilon(1e-12));
    CHECK(pen.volume > 0.0);
  }
  SUBCASE("separated cloud") {
    const std::vector<Vec3> cloud = {Vec3(0.0, 0.0, 0.06), Vec3(0.1, 0.0, 0.0)};
    const Penetration pen = penetration_of_points(cloud, sphere, pose, 1e-4);
    CHECK(pen.volume == 0.0);
    CHECK(pen.depth == 0.0);
  }
  SUBCASE("volume estimate converges under density doubling") {
    const auto patch = [&](double s) {
      std::vector<Vec3> cloud;
      const int n = static_cast<int>(std::floor(0.02 / s));
      for (int ix = -n; ix <= n; ++ix)
        for (int iy = -n; iy <= n; ++iy)
          cloud.push_back(Vec3(ix * s, iy * s, 0.044));
      return penetration_of_points(cloud, sphere, pose, s * s).volume;
    };
    const double coarse = patch(0.002);
    const double fine = patch(0.002 / std::sqrt(2.0));
    CHECK(std::abs(fine - coarse) < 0.10 * std::max(coarse, fine));
  }
  SUBCASE("degenerate area rejected") {
    CHECK_THROWS_AS(penetration_of_points({Vec3::Zero()}, sphere, pose, 0.0), InvalidArgument);
  }
}

TEST_CASE("hand surface sampling covers every hand geom") {
  const SkeletonSpec& sk = *desk_skeleton();
  const Pose rest = sk.rest_pose();
  const std::vector<Vec3> pts = hand_surface_points(rest, sk, 0.01);
  CHECK(pts.size() > 50);
  // All samples live near the wrist, not at the feet.
  const FkResult fk = sk.forward_kinematics(rest);
  const Vec3 wrist = fk.pos[static_cast<size_t>(sk.wrist())];
  for (const Vec3& p : pts) CHECK((p - wrist).norm() < 0.40);
  // Doubling density roughly quadruples... the count grows, never shrinks.
  CHECK(hand_surface_points(rest, sk, 0.005).size() > pts.size());
}

TEST_CASE("oracle rollout passes the contact quality gates") {
  const RolloutRecord& rec = oracle_rollout();
  const SkeletonSpec& sk = *desk_skeleton();
  const ObjectSpec& obj = desk_world_config().object;

  CHECK(grasp_success(rec));
  CHECK(foot_skating(rec, sk) < 5.0);
  const Interpenetration pen = interpenetration(rec, sk, obj);
  CHECK(pen.depth_mm >= 0.0);
  CHECK(pen.depth_mm < 5.0);
  CHECK(pen.volume_cm3 >= 0.0);
  CHECK(targets_reached(rec, sk) == 1.0);
  CHECK(contact_ratio(rec, sk, obj) > 0.0);

  SUBCASE("penetration volume is resolution-stable") {
    MetricsConfig coarse, fine;
    fine.surface_spacing = coarse.surface_spacing / std::sqrt(2.0);
    const double a = interpenetration(rec, sk, obj, coarse).volume_cm3;
    const double b = interpenetration(rec, sk, obj, fine).volume_cm3;
    // Converged when both tiny, else within 10%.
    if (std::max(a, b) > 0.01) CHECK(std::abs(a - b) < 0.10 * std::max(a, b));
  }
}

TEST_CASE("grasp success fails on drops, short holds and missing lifts") {
  const RolloutRecord& oracle = oracle_rollout();
  size_t lift = oracle.frames.size();
  for (size_t i = 0; i < oracle.frames.size(); ++i)
    if (oracle.frames[i].eta == 1.0) {
      lift = i;
      break;
    }
  REQUIRE(lift < oracle.frames.size());

  SUBCASE("re-contact inside the hold window") {
    RolloutRecord rec = oracle;
    rec.frames[lift + 5].object_table_force = 2.0;
    CHECK_FALSE(grasp_success(rec));
  }
  SUBCASE("episode ends before the hold can be observed") {
    RolloutRecord rec = oracle;
    rec.frames.resize(lift + 3);
    CHECK_FALSE(grasp_success(rec));
  }
  SUBCASE("never lifted") {
    RolloutRecord rec = oracle;
    for (RolloutFrame& f : rec.frames) f.eta = std::min(f.eta, 0.8);
    CHECK_FALSE(grasp_success(rec));
  }
  SUBCASE("re-contact after the hold window does not matter") {
    RolloutRecord rec = oracle;
    rec.frames.back().object_table_force = 2.0;  // 0.6 s after lift at the earliest
    const double gap = rec.frames.back().time - rec.frames[lift].time;
    REQUIRE(gap > 0.5 + 1e-9);
    CHECK(grasp_success(rec));
  }
}

TEST_CASE("targets reached counts timely arrivals only") {
  const SkeletonSpec& sk = *desk_skeleton();
  RolloutRecord rec = static_record(std::vector<Vec3>(40, Vec3::Zero()));
  const FkResult fk = sk.forward_kinematics(rec.frames[0].pose);
  const Vec3 wrist = fk.pos[static_cast<size_t>(sk.wrist())];
  const Vec3 root = fk.pos[0];

  // Three targets at the wrist, one out of reach but within the step cap.
  for (int i = 0; i < 3; ++i) {
    rec.trajectory.hand_pos.push_back(wrist);
    rec.trajectory.body_pos.push_back(root);
  }
  rec.trajectory.hand_pos.push_back(wrist + Vec3(0.29, 0.0, 0.0));
  rec.trajectory.body_pos.push_back(root);
  rec.trajectory_start = 0;
  rec.validate(sk);

  CHECK(targets_reached(rec, sk) == 0.75);

  SUBCASE("missing trajectory rejected") {
    rec.trajectory = TargetTrajectory{};
    CHECK_THROWS_AS(targets_reached(rec, sk), InvalidArgument);
  }
}

TEST_CASE("contact ratio is zero without any proximity") {
  const SkeletonSpec& sk = *desk_skeleton();
  const ObjectSpec& obj = desk_world_config().object;
  const RolloutRecord rec = static_record(std::vector<Vec3>(4, Vec3::Zero()));
  CHECK(contact_ratio(rec, sk, obj) == 0.0);
}

TEST_CASE("gaussian channel filter obeys its analytic properties") {
  SUBCASE("sigma zero is the identity") {
    VecX v(5);
    v << 0.1, -0.4, 2.0, 0.0, 1.5;
    const VecX out = gaussian_smooth_channel(v, 0.0);
    CHECK((out - v).norm() == 0.0);
  }
  SUBCASE("constant signals are fixed points") {
    const VecX v = VecX::Constant(20, 3.25);
    const VecX out = gaussian_smooth_channel(v, 2.0);
    CHECK((out - v).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("step through one half lands at one half") {
    VecX v(41);
    for (int i = 0; i < 41; ++i) v[i] = i < 20 ? 0.0 : (i == 20 ? 0.5 : 1.0);
    const VecX out = gaussian_smooth_channel(v, 2.0);
    CHECK(out[20] == doctest::Approx(0.5).epsilon(1e-3));
    // Monotone transition, asymptotes preserved well away from the step.
    for (int i = 1; i < 41; ++i) CHECK(out[i] >= out[i - 1] - 1e-12);
    CHECK(out[0] < 1e-3);
    CHECK(out[40] > 1.0 - 1e-3);
  }
  SUBCASE("linear ramps pass through unchanged away from the ends") {
    VecX v(60);
    for (int i = 0; i < 60; ++i) v[i] = 0.01 * i;
    const VecX out = gaussian_smooth_channel(v, 2.0);
    for (int i = 6; i < 54; ++i) CHECK(out[i] == doctest::Approx(v[i]).epsilon(1e-12));
  }
  SUBCASE("negative sigma rejected") {
    CHECK_THROWS_AS(gaussian_smooth_channel(VecX::Zero(3), -1.0), InvalidArgument);
  }
}

TEST_CASE("record smoothing touches kinematics only") {
  const RolloutRecord& oracle = oracle_rollout();
  const SkeletonSpec& sk = *desk_skeleton();

  SUBCASE("sigma zero reproduces the file byte for byte") {
    const std::string dir = scratch_dir("metrics_smooth");
    oracle.save(dir + "/raw.rollout", sk);
    gaussian_smooth(oracle, 0.0).save(dir + "/smoothed.rollout", sk);
    CHECK(read_text_file(dir + "/raw.rollout") == read_text_file(dir + "/smoothed.rollout"));
  }
  SUBCASE("jitter shrinks, readouts stay put") {
    RolloutRecord noisy = oracle;
    for (size_t i = 0; i < noisy.frames.size(); ++i)
      noisy.frames[i].pose.root_pos[0] += (i % 2 ? 1.0 : -1.0) * 0.001;
    const RolloutRecord smoothed = gaussian_smooth(noisy, 1.0);
    REQUIRE(smoothed.frames.size() == noisy.frames.size());

    double rough_raw = 0.0, rough_smooth = 0.0;
    for (size_t i = 1; i < noisy.frames.size(); ++i) {
      rough_raw += std::abs(noisy.frames[i].pose.root_pos[0] -
                            noisy.frames[i - 1].pose.root_pos[0]);
      rough_smooth += std::abs(smoothed.frames[i].pose.root_pos[0] -
                               smoothed.frames[i - 1].pose.root_pos[0]);
    }
    CHECK(rough_smooth < 0.5 * rough_raw);

    for (size_t i = 0; i < smoothed.frames.size(); ++i) {
      const RolloutFrame& a = noisy.frames[i];
      const RolloutFrame& b = smoothed.frames[i];
      CHECK(b.eta == a.eta);
      CHECK(b.object_table_force == a.object_table_force);
      CHECK((b.hand_object_force - a.hand_object_force).norm() == 0.0);
      CHECK(std::abs(b.pose.root_rot.norm() - 1.0) < 1e-12);
      for (const Quat& q : b.pose.joint_rot) CHECK(std::abs(q.norm() - 1.0) < 1e-12);
    }
    smoothed.validate(sk);
  }
  SUBCASE("negative sigma rejected") {
    CHECK_THROWS_AS(gaussian_smooth(oracle, -0.5), InvalidArgument);
  }
}

TEST_CASE("full evaluation is deterministic and aggregates correctly") {
  const RolloutRecord& rec = oracle_rollout();
  const SkeletonSpec& sk = *desk_skeleton();
  const ObjectSpec& obj = desk_world_config().object;

  const EvalReport a = evaluate(rec, sk, obj);
  const EvalReport b = evaluate(rec, sk, obj);
  CHECK(report_csv(a) == report_csv(b));
  CHECK(a.success == 1.0);
  CHECK(a.ttr == 1.0);
  CHECK(a.cr > 0.0);
  CHECK(a.fs_percent < 5.0);
  CHECK(a.id_mm < 5.0);
  CHECK(a.episodes == 1);

  SUBCASE("merge weights by episode count") {
    EvalReport zero;  // all-zero failed episode
    const EvalReport merged = merge_reports({a, zero});
    CHECK(merged.episodes == 2);
    CHECK(merged.success_rate == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(merged.ttr == doctest::Approx(0.5 * a.ttr).epsilon(1e-12));
    CHECK_THROWS_AS(merge_reports({}), InvalidArgument);
  }
  SUBCASE("csv and summary match the report") {
    const std::string csv = report_csv(a);
    CHECK(csv.find("success_rate,gd_mm,fs_percent,iv_cm3,id_mm,ttr,cr,episodes\n") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    const std::string summary = report_summary(a);
    CHECK(summary.find("success rate") != std::string::npos);
    CHECK(summary.find("targets reached") != std::string::npos);
  }
}

}  // namespace dexbody::test
