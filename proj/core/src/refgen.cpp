#include "dexbody/refgen.hpp"

#include <algorithm>
#include <sstream>

#include "dexbody/config.hpp"
#include "dexbody/errors.hpp"
#include "dexbody/rng.hpp"

namespace dexbody {

namespace {

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Quat yaw_rotation(double yaw) { return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())); }

// Clamps a local rotation to the joint's per-axis coordinate box.
Quat clamped_rotation(const SkeletonSpec& sk, int j, const Vec3& coords) {
  const JointDef& d = sk.joint(j);
  Vec3 c = coords;
  const int na = (d.dof == DofType::kHinge) ? 1 : 3;
  for (int k = 0; k < na; ++k) c[k] = std::clamp(c[k], d.lower[k], d.upper[k]);
  if (d.dof == DofType::kHinge) {
    c[1] = 0.0;
    c[2] = 0.0;
  }
  return sk.joint_rotation(j, c);
}

// Cyclic-coordinate-descent arm solve: drives the end joint's origin to a
// world target, then snaps the end joint's rotation to the target frame.
// Chain entries are ordered base to tip and exclude the end joint itself.
void solve_arm(const SkeletonSpec& sk, Pose& pose, const std::vector<int>& chain, int end_joint,
               const Vec3& target_pos, const Quat& target_rot, double base_gain) {
  constexpr int kIters = 30;
  constexpr double kMaxStep = 0.35;
  for (int it = 0; it < kIters; ++it) {
    for (auto jt = chain.rbegin(); jt != chain.rend(); ++jt) {
      const int j = *jt;
      const FkResult fk = sk.forward_kinematics(pose);
      const Vec3 pivot = fk.pos[static_cast<size_t>(j)];
      const Vec3 to_end = fk.pos[static_cast<size_t>(end_joint)] - pivot;
      const Vec3 to_target = target_pos - pivot;
      if (to_end.norm() < 1e-6 || to_target.norm() < 1e-6) continue;
      const double gain = (j == chain.front()) ? base_gain : 0.9;
      const JointDef& d = sk.joint(j);
      const Quat parent = fk.rot[static_cast<size_t>(d.parent)];
      Vec3 cur = sk.joint_coords(j, pose.joint_rot[static_cast<size_t>(j)]);
      if (d.dof == DofType::kHinge) {
        const Vec3 axis = parent * d.axis;
        const Vec3 a = to_end - axis.dot(to_end) * axis;
        const Vec3 b = to_target - axis.dot(to_target) * axis;
        if (a.norm() < 1e-6 || b.norm() < 1e-6) continue;
        double delta = std::atan2(axis.dot(a.cross(b)), a.dot(b));
        delta = std::clamp(gain * delta, -kMaxStep, kMaxStep);
        cur[0] += delta;
      } else {
        const Quat world_delta = Quat::FromTwoVectors(to_end, to_target);
        Vec3 delta = quat_log(Quat(parent.conjugate() * world_delta * parent));
        const double norm = delta.norm();
        if (norm > kMaxStep) delta *= kMaxStep / norm;
        cur += gain * delta;
      }
      pose.joint_rot[static_cast<size_t>(j)] = clamped_rotation(sk, j, cur);
    }
  }
  // Orient the end joint directly: local = parent^-1 * target.
  const FkResult fk = sk.forward_kinematics(pose);
  const int parent = sk.joint(end_joint).parent;
  const Quat local = fk.rot[static_cast<size_t>(parent)].conjugate() * target_rot;
  pose.joint_rot[static_cast<size_t>(end_joint)] =
      clamped_rotation(sk, end_joint, quat_log(canonical(local)));
}

// Per-frame contact flags for the hand joints, via kinematic replay.
std::vector<int> contact_mask(const SimState& s) {
  std::vector<int> mask(static_cast<size_t>(s.hand_object_force.size()), 0);
  for (int i = 0; i < s.hand_object_force.size(); ++i)
    mask[static_cast<size_t>(i)] = s.hand_object_force[i] > 0.0 ? 1 : 0;
  return mask;
}

int mask_count(const std::vector<int>& mask) {
  int n = 0;
  for (int m : mask) n += m;
  return n;
}

HandPoseReference make_reference(const SkeletonSpec& sk, const ClipFrame& frame, int frame_index,
                                 const std::vector<int>& mask) {
  const FkResult fk = sk.forward_kinematics(frame.pose);
  const std::vector<int>& hand = sk.hand_joints();
  HandPoseReference ref;
  ref.hand_rot.resize(hand.size());
  ref.hand_rot[0] = fk.rot[static_cast<size_t>(sk.wrist())];
  for (size_t i = 1; i < hand.size(); ++i)
    ref.hand_rot[i] = frame.pose.joint_rot[static_cast<size_t>(hand[i])];
  ref.wrist_pos = fk.pos[static_cast<size_t>(sk.wrist())];
  ref.object = frame.object;
  ref.contact = mask;
  ref.source_frame = frame_index;
  ref.derive_joint_targets(sk);
  return ref;
}

}  // namespace

const char* phase_name(Phase p) { return p == Phase::kApproach ? "approach" : "manipulate"; }

Phase phase_from_name(const std::string& name) {
  if (name == "approach") return Phase::kApproach;
  if (name == "manipulate") return Phase::kManipulate;
  throw SchemaError("unknown phase tag '" + name + "'");
}

double MotionClip::duration() const {
  return frames.empty() ? 0.0 : static_cast<double>(frames.size() - 1) * kFrameDt;
}

void MotionClip::validate(const SkeletonSpec& skeleton) const {
  if (frames.empty()) throw SchemaError("clip has no frames");
  if (skeleton_hash != skeleton.source_hash())
    throw SchemaError("clip skeleton hash does not match the loaded skeleton");
  if (duration() > kMaxDuration + 1e-9)
    throw SchemaError("clip exceeds the 4 s duration cap");
  for (size_t i = 0; i < frames.size(); ++i) {
    if (std::abs(frames[i].time - static_cast<double>(i) * kFrameDt) > 1e-9)
      throw SchemaError("clip frame " + std::to_string(i) + " breaks the 30 Hz spacing");
    if (!skeleton.within_limits(frames[i].pose, 1e-6))
      throw SchemaError("clip frame " + std::to_string(i) + " violates joint limits");
  }
}

void MotionClip::save(const std::string& path, const SkeletonSpec& skeleton) const {
  std::ostringstream out;
  out << "# dexbody-clip 1 skeleton " << std::hex << skeleton.source_hash() << std::dec
      << " table";
  const auto num = [&out](double v) { out << ' ' << format_double(v); };
  num(table.t[0]);
  num(table.t[1]);
  num(table.t[2]);
  num(table.q.w());
  num(table.q.x());
  num(table.q.y());
  num(table.q.z());
  out << '\n';
  for (const ClipFrame& f : frames) {
    out << format_double(f.time);
    for (int k = 0; k < 3; ++k) num(f.pose.root_pos[k]);
    num(f.pose.root_rot.w());
    num(f.pose.root_rot.x());
    num(f.pose.root_rot.y());
    num(f.pose.root_rot.z());
    for (int j : skeleton.body_joints()) {
      const Rot6d r = rot6d_from_quat(f.pose.joint_rot[static_cast<size_t>(j)]);
      for (int k = 0; k < 6; ++k) num(r[k]);
    }
    for (int j : skeleton.hand_joints()) {
      const Rot6d r = rot6d_from_quat(f.pose.joint_rot[static_cast<size_t>(j)]);
      for (int k = 0; k < 6; ++k) num(r[k]);
    }
    for (int k = 0; k < 3; ++k) num(f.object.t[k]);
    num(f.object.q.w());
    num(f.object.q.x());
    num(f.object.q.y());
    num(f.object.q.z());
    out << ' ' << phase_name(f.phase) << '\n';
  }
  write_file_atomic(path, out.str());
}

MotionClip MotionClip::load(const std::string& path, const SkeletonSpec& skeleton) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw SchemaError(path + ": empty clip file");
  std::istringstream hs(header);
  std::string magic, format, version, skeleton_kw, table_word;
  hs >> magic >> format >> version >> skeleton_kw;
  if (magic != "#" || format != "dexbody-clip" || version != "1" || skeleton_kw != "skeleton")
    throw SchemaError(path + ": not a clip file");
  std::uint64_t hash = 0;
  hs >> std::hex >> hash >> std::dec;
  if (hs.fail()) throw SchemaError(path + ": bad skeleton hash in header");
  MotionClip clip;
  clip.skeleton_hash = hash;
  hs >> table_word;
  if (table_word != "table") throw SchemaError(path + ": missing table pose in header");
  double tw[7];
  for (double& v : tw) hs >> v;
  if (hs.fail()) throw SchemaError(path + ": bad table pose in header");
  clip.table.t = Vec3(tw[0], tw[1], tw[2]);
  clip.table.q = canonical(Quat(tw[3], tw[4], tw[5], tw[6]));

  const int nb = static_cast<int>(skeleton.body_joints().size());
  const int nh = static_cast<int>(skeleton.hand_joints().size());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ClipFrame f;
    f.pose = Pose::neutral(skeleton.joint_count());
    ls >> f.time;
    for (int k = 0; k < 3; ++k) ls >> f.pose.root_pos[k];
    double q[4];
    for (double& v : q) ls >> v;
    f.pose.root_rot = canonical(Quat(q[0], q[1], q[2], q[3]));
    auto read_rot = [&ls](Quat& dst) {
      Rot6d r;
      for (int k = 0; k < 6; ++k) ls >> r[k];
      dst = quat_from_rot6d(r);
    };
    for (int b = 0; b < nb; ++b)
      read_rot(f.pose.joint_rot[static_cast<size_t>(skeleton.body_joints()[static_cast<size_t>(b)])]);
    for (int h = 0; h < nh; ++h)
      read_rot(f.pose.joint_rot[static_cast<size_t>(skeleton.hand_joints()[static_cast<size_t>(h)])]);
    for (int k = 0; k < 3; ++k) ls >> f.object.t[k];
    for (double& v : q) ls >> v;
    f.object.q = canonical(Quat(q[0], q[1], q[2], q[3]));
    std::string tag;
    ls >> tag;
    if (ls.fail()) throw SchemaError(path + ": truncated clip frame");
    f.phase = phase_from_name(tag);
    clip.frames.push_back(std::move(f));
  }
  clip.validate(skeleton);
  return clip;
}

int HandPoseReference::contact_count() const { return mask_count(contact); }

std::vector<Vec3> HandPoseReference::world_joint_positions(const SkeletonSpec& skeleton) const {
  const std::vector<int>& hand = skeleton.hand_joints();
  std::vector<Vec3> pos(hand.size());
  std::vector<Quat> rot(hand.size());
  pos[0] = wrist_pos;
  rot[0] = hand_rot[0];
  // Hand order lists parents before children, so one forward sweep works.
  for (size_t i = 1; i < hand.size(); ++i) {
    const JointDef& d = skeleton.joint(hand[i]);
    size_t pi = 0;
    for (size_t k = 0; k < i; ++k)
      if (hand[k] == d.parent) pi = k;
    pos[i] = pos[pi] + rot[pi] * d.offset;
    rot[i] = canonical(rot[pi] * hand_rot[i]);
  }
  return pos;
}

void HandPoseReference::derive_joint_targets(const SkeletonSpec& skeleton) {
  const std::vector<Vec3> world = world_joint_positions(skeleton);
  joint_local.resize(world.size());
  for (size_t i = 0; i < world.size(); ++i) joint_local[i] = object.apply_inverse(world[i]);
}

void TargetTrajectory::validate() const {
  if (body_pos.empty() || hand_pos.empty()) throw SchemaError("trajectory has no waypoints");
  if (body_pos.size() != hand_pos.size())
    throw SchemaError("trajectory body/hand waypoint counts differ");
  for (size_t i = 1; i < body_pos.size(); ++i) {
    if ((body_pos[i] - body_pos[i - 1]).norm() > kMaxStep ||
        (hand_pos[i] - hand_pos[i - 1]).norm() > kMaxStep)
      throw SchemaError("trajectory step " + std::to_string(i) + " exceeds the followable bound");
  }
}

namespace {

// Everything one clip draw needs, resolved up front so generation is a pure
// function of these numbers.
struct Scenario {
  Transform table;
  Transform object_start;
  double start_x, start_y;
  double stand_x;
  double carry_dx, carry_dy, carry_dz;
};

Scenario draw_scenario(const WorldConfig& config, Rng& rng) {
  Scenario sc;
  sc.table.t = Vec3(0.45, 0.0, 0.74);
  const double top = sc.table.t[2] + config.table_half[2];
  sc.object_start.t = Vec3(0.38 + rng.uniform(-0.03, 0.03), -0.20 + rng.uniform(-0.05, 0.05),
                           top + config.object.rest_clearance() + 5e-4);
  sc.object_start.q = yaw_rotation(rng.uniform(-0.2, 0.2));
  sc.start_x = -0.65 + rng.uniform(-0.10, 0.10);
  sc.start_y = rng.uniform(-0.04, 0.04);
  sc.stand_x = 0.06 + rng.uniform(-0.02, 0.02);
  sc.carry_dx = rng.uniform(-0.04, 0.06);
  sc.carry_dy = rng.uniform(-0.12, 0.12);
  sc.carry_dz = 0.10 + rng.uniform(0.0, 0.04);
  return sc;
}

struct GaitCoords {
  Vec3 spine, head, hipL, hipR, ankleL, ankleR, shoulderL, shoulderR;
  double kneeL, kneeR, elbowL, elbowR;
};

// Sinusoidal gait sampled at parameter s in [0, 1] over the walk, with an
// envelope that fades the oscillation in and out at the ends.
GaitCoords gait_at(double t, double s) {
  const double freq = 1.5;
  const double phi = 2.0 * M_PI * freq * t;
  const double env = 4.0 * s * (1.0 - s);
  GaitCoords g;
  const double swing = 0.32 * env;
  g.hipL = Vec3(0.0, -swing * std::sin(phi), 0.0);
  g.hipR = Vec3(0.0, swing * std::sin(phi), 0.0);
  g.kneeL = 0.55 * env * std::max(0.0, std::sin(phi + 0.9));
  g.kneeR = 0.55 * env * std::max(0.0, std::sin(phi + M_PI + 0.9));
  g.ankleL = Vec3(0.0, 0.5 * swing * std::sin(phi) - 0.5 * g.kneeL, 0.0);
  g.ankleR = Vec3(0.0, -0.5 * swing * std::sin(phi) - 0.5 * g.kneeR, 0.0);
  g.spine = Vec3(0.03 * env * std::sin(phi), 0.05 * env, 0.04 * env * std::sin(phi));
  g.head = Vec3(0.0, -0.04 * env, 0.0);
  g.shoulderL = Vec3(0.0, 0.22 * env * std::sin(phi), 0.0);
  g.shoulderR = Vec3(0.0, -0.22 * env * std::sin(phi), 0.0);
  g.elbowL = 0.25 * env;
  g.elbowR = 0.25 * env;
  return g;
}

struct StancePose {
  Vec3 hip = Vec3(0.0, -0.05, 0.0);
  double knee = 0.12;
  Vec3 ankle = Vec3(0.0, -0.01, 0.0);
};

struct LegChain {
  int hip = -1, knee = -1, ankle = -1;
};

// Places the ankle joint at a world target with a hip-knee two-bone solve
// and levels the foot. The knee bends toward +x (the walking direction);
// joint limits clamp the result, so an unreachable target degrades to the
// closest pose instead of failing.
void solve_leg(const SkeletonSpec& sk, Pose& pose, const LegChain& leg, const Vec3& target) {
  const Vec3 hip_w = pose.root_pos + pose.root_rot * sk.joint(leg.hip).offset;
  const Vec3 p = pose.root_rot.conjugate() * (target - hip_w);
  const Vec3 knee_off = sk.joint(leg.knee).offset;
  const Vec3 ankle_off = sk.joint(leg.ankle).offset;
  const Vec3 axis = sk.joint(leg.knee).axis.normalized();
  const auto shin = [&](double theta) {
    return Vec3(knee_off + Eigen::AngleAxisd(theta, axis) * ankle_off);
  };
  const double lo = std::max(0.0, sk.joint(leg.knee).lower[0]);
  const double hi = sk.joint(leg.knee).upper[0];
  // Hip-to-ankle distance shrinks monotonically as the knee flexes.
  const double d = std::clamp(p.norm(), shin(hi).norm(), shin(lo).norm());
  double a = lo, b = hi;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (a + b);
    (shin(mid).norm() > d ? a : b) = mid;
  }
  const double theta = 0.5 * (a + b);
  const Vec3 v = shin(theta);
  Quat q_hip = Quat::FromTwoVectors(v, p);
  const Vec3 phat = p.normalized();
  Vec3 knee_perp = q_hip * knee_off;
  knee_perp -= knee_perp.dot(phat) * phat;
  Vec3 pole = Vec3::UnitX() - phat[0] * phat;
  if (knee_perp.norm() > 1e-6 && pole.norm() > 1e-6) {
    knee_perp.normalize();
    pole.normalize();
    const double ang = std::atan2(phat.dot(knee_perp.cross(pole)),
                                  std::clamp(knee_perp.dot(pole), -1.0, 1.0));
    q_hip = Quat(Eigen::AngleAxisd(ang, phat)) * q_hip;
  }
  pose.joint_rot[static_cast<size_t>(leg.hip)] =
      clamped_rotation(sk, leg.hip, quat_log(canonical(q_hip)));
  pose.joint_rot[static_cast<size_t>(leg.knee)] =
      clamped_rotation(sk, leg.knee, Vec3(theta, 0.0, 0.0));
  const Quat parent_w = pose.root_rot * pose.joint_rot[static_cast<size_t>(leg.hip)] *
                        pose.joint_rot[static_cast<size_t>(leg.knee)];
  pose.joint_rot[static_cast<size_t>(leg.ankle)] =
      clamped_rotation(sk, leg.ankle, quat_log(canonical(parent_w.conjugate())));
}

double inverse_smoothstep(double y) {
  double a = 0.0, b = 1.0;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (a + b);
    (smoothstep(mid) < y ? a : b) = mid;
  }
  return 0.5 * (a + b);
}

// Foot placement schedule for the approach: feet alternate discrete steps
// timed against the root's progress along the path, stay pinned to their
// plants between swings, and finish exactly where the settled stance puts
// them. Keeping stance feet world-fixed is what keeps the replay free of
// foot skating.
struct GaitPlan {
  struct Swing {
    int foot = 0;  // 0 left, 1 right
    double s_start = 0.0, s_end = 0.0;
    Vec3 from = Vec3::Zero(), to = Vec3::Zero();
  };
  std::vector<Swing> swings;
  Vec3 start_foot[2], final_foot[2];
  double lift = 0.04;  // swing apex height, m

  GaitPlan(const Vec3& start_L, const Vec3& start_R, const Vec3& final_L,
           const Vec3& final_R) {
    start_foot[0] = start_L;
    start_foot[1] = start_R;
    final_foot[0] = final_L;
    final_foot[1] = final_R;
    const double dist = 0.5 * ((final_L - start_L).norm() + (final_R - start_R).norm());
    const int n = 2 * std::max<int>(1, static_cast<int>(std::lround(dist / 0.35)));
    Vec3 plant[2] = {start_L, start_R};
    int taken[2] = {0, 0};
    const int per_foot = n / 2;
    for (int j = 0; j < n; ++j) {
      Swing sw;
      sw.foot = j % 2;
      // Swing while the root covers this slice of the path, with a stance
      // margin on both sides of the slot.
      sw.s_start = inverse_smoothstep((j + 0.15) / n);
      sw.s_end = inverse_smoothstep((j + 0.85) / n);
      sw.from = plant[sw.foot];
      ++taken[sw.foot];
      const double frac = static_cast<double>(taken[sw.foot]) / per_foot;
      sw.to = start_foot[sw.foot] + frac * (final_foot[sw.foot] - start_foot[sw.foot]);
      plant[sw.foot] = sw.to;
      swings.push_back(sw);
    }
  }

  Vec3 foot_at(int foot, double s) const {
    Vec3 pos = start_foot[foot];
    for (const Swing& sw : swings) {
      if (sw.foot != foot) continue;
      if (s >= sw.s_end) {
        pos = sw.to;
      } else if (s > sw.s_start) {
        const double u = smoothstep((s - sw.s_start) / (sw.s_end - sw.s_start));
        pos = sw.from + u * (sw.to - sw.from);
        pos[2] += lift * 4.0 * u * (1.0 - u);
        break;
      }
    }
    return pos;
  }
};

}  // namespace

std::vector<MotionClip> generate_reference_set(
    const std::shared_ptr<const SkeletonSpec>& skeleton, const WorldConfig& config,
    std::uint64_t seed, int count) {
  if (count < 1) throw InvalidArgument("reference set count must be >= 1");
  const SkeletonSpec& sk = *skeleton;
  std::vector<MotionClip> clips;
  clips.reserve(static_cast<size_t>(count));

  const int j_spine = sk.index_of("spine");
  const int j_head = sk.index_of("head");
  const int j_hipL = sk.index_of("hipL");
  const int j_hipR = sk.index_of("hipR");
  const int j_kneeL = sk.index_of("kneeL");
  const int j_kneeR = sk.index_of("kneeR");
  const int j_ankleL = sk.index_of("ankleL");
  const int j_ankleR = sk.index_of("ankleR");
  const int j_shL = sk.index_of("shoulderL");
  const int j_shR = sk.index_of("shoulderR");
  const int j_elL = sk.index_of("elbowL");
  const int j_elR = sk.index_of("elbowR");
  const int j_wrist = sk.wrist();
  for (int j : {j_spine, j_head, j_hipL, j_hipR, j_kneeL, j_kneeR, j_ankleL, j_ankleR, j_shL,
                j_shR, j_elL, j_elR})
    if (j < 0) throw InvalidArgument("reference generation needs the desk humanoid joint set");

  // Finger chains: pairs of (proximal, distal) per digit, plus curl signs.
  struct Digit {
    int proximal, distal;
    double sign;
  };
  std::vector<Digit> digits;
  for (const char* base : {"index1", "middle1", "thumb1"}) {
    const int p = sk.index_of(base);
    if (p < 0) continue;
    const std::vector<int>& kids = sk.children(p);
    const int d = kids.empty() ? p : kids[0];
    const double sign = sk.joint(p).upper[0] > -sk.joint(p).lower[0] ? 1.0 : -1.0;
    digits.push_back({p, d, sign});
  }

  for (int ci = 0; ci < count; ++ci) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(ci));
    const Scenario sc = draw_scenario(config, rng);

    const double walk_dist = sc.stand_x - sc.start_x;
    const int walk_frames = std::clamp(static_cast<int>(std::lround(walk_dist / 0.55 * 30.0)),
                                       30, 50);
    const int reach_frames = 24;
    const int close_frames = 12;
    const int lift_frames = 12;
    const int carry_frames = 20;
    const int total =
        walk_frames + reach_frames + close_frames + lift_frames + carry_frames + 1;

    World replay(skeleton, config);
    MotionClip clip;
    clip.table = sc.table;
    clip.skeleton_hash = sk.source_hash();
    clip.frames.reserve(static_cast<size_t>(total));

    Pose pose = sk.rest_pose();
    pose.root_pos = Vec3(sc.start_x, sc.start_y, 0.95);
    Transform object = sc.object_start;

    // Wrist height above the object center: high enough that straight
    // fingertips clear the tabletop, low enough that the proximal links
    // straddle the object's upper half for the pinch.
    const Vec3 grasp_target(sc.object_start.t[0], sc.object_start.t[1],
                            sc.object_start.t[2] + config.object.rest_clearance() + 0.148);
    const Quat grasp_rot = sc.object_start.q;
    const Vec3 hover = grasp_target + Vec3(-0.05, 0.0, 0.08);
    const std::vector<int> arm_chain = {j_spine, j_shR, j_elR};

    std::vector<double> curl(digits.size(), 0.0);
    std::vector<char> frozen(digits.size(), 0);
    bool attached = false;
    Transform grip;  // object pose in the wrist frame once attached

    std::vector<int> masks_count;
    masks_count.reserve(static_cast<size_t>(total));
    GaitCoords walk_end = gait_at(0.0, 0.0);
    Vec3 reach_from = Vec3::Zero();
    Quat reach_from_rot = Quat::Identity();
    Vec3 root_at_lift = Vec3::Zero();

    for (int i = 0; i < total; ++i) {
      const double t = static_cast<double>(i) * MotionClip::kFrameDt;
      if (i < walk_frames) {
        const double s = static_cast<double>(i) / walk_frames;
        const GaitCoords g = gait_at(t, s);
        pose.root_pos[0] = sc.start_x + walk_dist * smoothstep(s);
        pose.root_pos[1] = sc.start_y * (1.0 - smoothstep(s));
        pose.root_pos[2] = 0.95 + 0.012 * std::sin(4.0 * M_PI * 1.5 * t) * (4.0 * s * (1.0 - s));
        pose.joint_rot[static_cast<size_t>(j_spine)] = clamped_rotation(sk, j_spine, g.spine);
        pose.joint_rot[static_cast<size_t>(j_head)] = clamped_rotation(sk, j_head, g.head);
        pose.joint_rot[static_cast<size_t>(j_hipL)] = clamped_rotation(sk, j_hipL, g.hipL);
        pose.joint_rot[static_cast<size_t>(j_hipR)] = clamped_rotation(sk, j_hipR, g.hipR);
        pose.joint_rot[static_cast<size_t>(j_kneeL)] =
            clamped_rotation(sk, j_kneeL, Vec3(g.kneeL, 0, 0));
        pose.joint_rot[static_cast<size_t>(j_kneeR)] =
            clamped_rotation(sk, j_kneeR, Vec3(g.kneeR, 0, 0));
        pose.joint_rot[static_cast<size_t>(j_ankleL)] = clamped_rotation(sk, j_ankleL, g.ankleL);
        pose.joint_rot[static_cast<size_t>(j_ankleR)] = clamped_rotation(sk, j_ankleR, g.ankleR);
        pose.joint_rot[static_cast<size_t>(j_shL)] = clamped_rotation(sk, j_shL, g.shoulderL);
        pose.joint_rot[static_cast<size_t>(j_shR)] = clamped_rotation(sk, j_shR, g.shoulderR);
        pose.joint_rot[static_cast<size_t>(j_elL)] =
            clamped_rotation(sk, j_elL, Vec3(g.elbowL, 0, 0));
        pose.joint_rot[static_cast<size_t>(j_elR)] =
            clamped_rotation(sk, j_elR, Vec3(g.elbowR, 0, 0));
        walk_end = g;
      } else if (i < walk_frames + reach_frames) {
        const int k = i - walk_frames;
        const double s = static_cast<double>(k + 1) / reach_frames;
        // Legs settle into stance; spine leans toward the table.
        const double blend = smoothstep(s / 0.5);
        const StancePose st;
        auto mix = [&](const Vec3& a, const Vec3& b) { return (1.0 - blend) * a + blend * b; };
        pose.joint_rot[static_cast<size_t>(j_hipL)] =
            clamped_rotation(sk, j_hipL, mix(walk_end.hipL, st.hip));
        pose.joint_rot[static_cast<size_t>(j_hipR)] =
            clamped_rotation(sk, j_hipR, mix(walk_end.hipR, st.hip));
        pose.joint_rot[static_cast<size_t>(j_kneeL)] = clamped_rotation(
            sk, j_kneeL, Vec3((1.0 - blend) * walk_end.kneeL + blend * st.knee, 0, 0));
        pose.joint_rot[static_cast<size_t>(j_kneeR)] = clamped_rotation(
            sk, j_kneeR, Vec3((1.0 - blend) * walk_end.kneeR + blend * st.knee, 0, 0));
        pose.joint_rot[static_cast<size_t>(j_ankleL)] =
            clamped_rotation(sk, j_ankleL, mix(walk_end.ankleL, st.ankle));
        pose.joint_rot[static_cast<size_t>(j_ankleR)] =
            clamped_rotation(sk, j_ankleR, mix(walk_end.ankleR, st.ankle));
        pose.joint_rot[static_cast<size_t>(j_shL)] =
            clamped_rotation(sk, j_shL, mix(walk_end.shoulderL, Vec3::Zero()));
        pose.joint_rot[static_cast<size_t>(j_elL)] = clamped_rotation(
            sk, j_elL, Vec3((1.0 - blend) * walk_end.elbowL + blend * 0.25, 0, 0));
        pose.joint_rot[static_cast<size_t>(j_spine)] = clamped_rotation(
            sk, j_spine, mix(walk_end.spine, Vec3(0.0, 0.35, 0.0)));
        pose.root_pos[2] = 0.95;
        if (k == 0) {
          const FkResult fk = sk.forward_kinematics(pose);
          reach_from = fk.pos[static_cast<size_t>(j_wrist)];
          reach_from_rot = fk.rot[static_cast<size_t>(j_wrist)];
        }
        // Wrist path: out to the hover point, then straight down onto the
        // grasp transform.
        Vec3 wrist_target;
        Quat wrist_rot;
        if (s < 0.7) {
          const double u = smoothstep(s / 0.7);
          wrist_target = (1.0 - u) * reach_from + u * hover;
          wrist_rot = reach_from_rot.slerp(u, grasp_rot);
        } else {
          const double u = smoothstep((s - 0.7) / 0.3);
          wrist_target = (1.0 - u) * hover + u * grasp_target;
          wrist_rot = grasp_rot;
        }
        solve_arm(sk, pose, arm_chain, j_wrist, wrist_target, wrist_rot, 0.25);
      } else if (i < walk_frames + reach_frames + close_frames) {
        // Freeze digits whose links reported contact on the previous frame,
        // then curl the rest until they touch or run out of range.
        const std::vector<int>& hand = sk.hand_joints();
        const SimState& prev = replay.state();
        for (size_t d = 0; d < digits.size(); ++d) {
          for (size_t h = 1; h < hand.size(); ++h) {
            if ((hand[h] == digits[d].proximal || hand[h] == digits[d].distal) &&
                prev.hand_object_force[static_cast<int>(h)] > 0.0)
              frozen[d] = 1;
          }
        }
        for (size_t d = 0; d < digits.size(); ++d) {
          if (frozen[d]) continue;
          curl[d] = std::min(curl[d] + 4.0 * MotionClip::kFrameDt, 1.8);
          pose.joint_rot[static_cast<size_t>(digits[d].proximal)] = clamped_rotation(
              sk, digits[d].proximal, Vec3(digits[d].sign * 0.6 * curl[d], 0, 0));
          pose.joint_rot[static_cast<size_t>(digits[d].distal)] = clamped_rotation(
              sk, digits[d].distal, Vec3(digits[d].sign * 0.5 * curl[d], 0, 0));
        }
      } else {
        const int k = i - walk_frames - reach_frames - close_frames;
        if (k == 0) {
          const FkResult fk = sk.forward_kinematics(pose);
          Transform wristT;
          wristT.t = fk.pos[static_cast<size_t>(j_wrist)];
          wristT.q = fk.rot[static_cast<size_t>(j_wrist)];
          grip.t = wristT.apply_inverse(object.t);
          grip.q = canonical(wristT.q.conjugate() * object.q);
          attached = true;
          root_at_lift = pose.root_pos;
        }
        Vec3 wrist_target = grasp_target;
        if (k < lift_frames) {
          const double u = smoothstep(static_cast<double>(k + 1) / lift_frames);
          wrist_target += Vec3(0.0, 0.0, sc.carry_dz * u);
        } else {
          const double u =
              smoothstep(static_cast<double>(k - lift_frames + 1) / carry_frames);
          wrist_target += Vec3(sc.carry_dx * u, sc.carry_dy * u, sc.carry_dz);
          pose.root_pos = root_at_lift + 0.25 * Vec3(sc.carry_dx * u, sc.carry_dy * u, 0.0);
        }
        solve_arm(sk, pose, arm_chain, j_wrist, wrist_target, grasp_rot, 0.15);
      }

      pose = sk.clamp_to_limits(pose);
      if (attached) {
        const FkResult fk = sk.forward_kinematics(pose);
        object.t = fk.pos[static_cast<size_t>(j_wrist)] +
                   fk.rot[static_cast<size_t>(j_wrist)] * grip.t;
        object.q = canonical(fk.rot[static_cast<size_t>(j_wrist)] * grip.q);
      }

      ClipFrame frame;
      frame.time = t;
      frame.pose = pose;
      frame.object = object;
      frame.phase = Phase::kApproach;
      clip.frames.push_back(frame);

      const SimState s = (i == 0) ? replay.reset(pose, object, sc.table, seed)
                                  : replay.kinematic_frame(pose, object);
      masks_count.push_back(mask_count(contact_mask(s)));
    }

    // The approach tag flips at the first frame with two or more contacts.
    int first_contact = -1;
    for (size_t i = 0; i < masks_count.size(); ++i) {
      if (masks_count[i] >= 2) {
        first_contact = static_cast<int>(i);
        break;
      }
    }
    if (first_contact >= 0)
      for (size_t i = static_cast<size_t>(first_contact); i < clip.frames.size(); ++i)
        clip.frames[i].phase = Phase::kManipulate;

    clip.validate(sk);
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::vector<HandPoseReference> extract_hand_references(
    const MotionClip& clip, const std::shared_ptr<const SkeletonSpec>& skeleton,
    const WorldConfig& config) {
  const SkeletonSpec& sk = *skeleton;
  clip.validate(sk);
  World replay(skeleton, config);
  std::vector<std::vector<int>> masks;
  masks.reserve(clip.frames.size());
  for (size_t i = 0; i < clip.frames.size(); ++i) {
    const SimState s = (i == 0)
                           ? replay.reset(clip.frames[0].pose, clip.frames[0].object, clip.table, 0)
                           : replay.kinematic_frame(clip.frames[i].pose, clip.frames[i].object);
    masks.push_back(contact_mask(s));
  }

  int first_contact = -1;
  for (size_t i = 0; i < masks.size(); ++i) {
    if (mask_count(masks[i]) >= 2) {
      first_contact = static_cast<int>(i);
      break;
    }
  }
  if (first_contact < 0) throw ExtractionError("clip has no hand-object contact frame");

  const int last = std::min(first_contact + 15, clip.frame_count() - 1);
  int best = first_contact;
  for (int i = first_contact; i <= last; ++i)
    if (mask_count(masks[static_cast<size_t>(i)]) > mask_count(masks[static_cast<size_t>(best)]))
      best = i;

  std::vector<HandPoseReference> out;
  out.push_back(make_reference(sk, clip.frames[static_cast<size_t>(best)], best,
                               masks[static_cast<size_t>(best)]));
  for (int delta : {-2, 2}) {
    const int i = best + delta;
    if (i < 0 || i >= clip.frame_count()) continue;
    if (mask_count(masks[static_cast<size_t>(i)]) < 2) continue;
    out.push_back(
        make_reference(sk, clip.frames[static_cast<size_t>(i)], i, masks[static_cast<size_t>(i)]));
  }
  return out;
}

TargetTrajectory extract_trajectory(const MotionClip& clip, const SkeletonSpec& skeleton,
                                    int window_start) {
  const int intervals = clip.frame_count() - 1 - window_start;
  if (window_start < 0 || intervals < 2)
    throw InvalidArgument("trajectory window start " + std::to_string(window_start) +
                          " leaves no waypoints in a " + std::to_string(clip.frame_count()) +
                          "-frame clip");
  const int count = intervals / 2;
  TargetTrajectory traj;
  traj.body_pos.reserve(static_cast<size_t>(count));
  traj.hand_pos.reserve(static_cast<size_t>(count));
  for (int k = 1; k <= count; ++k) {
    const ClipFrame& f = clip.frames[static_cast<size_t>(window_start + 2 * k)];
    const FkResult fk = skeleton.forward_kinematics(f.pose);
    traj.body_pos.push_back(f.pose.root_pos);
    traj.hand_pos.push_back(fk.pos[static_cast<size_t>(skeleton.wrist())]);
  }
  traj.validate();
  return traj;
}

RandomizedSet randomize(const SkeletonSpec& skeleton, const HandPoseReference& ref,
                        const TargetTrajectory& traj, const Transform& object_pose,
                        std::uint64_t seed, const RandomizeParams& params) {
  Rng rng = Rng::derive(seed, 0x72616e64ull);
  RandomizedSet out;
  out.ref = ref;
  for (int k = 0; k < 3; ++k)
    out.ref.wrist_pos[k] += rng.uniform(-params.ref_noise, params.ref_noise);
  for (int k = 0; k < 3; ++k)
    out.ref.object.t[k] += rng.uniform(-params.ref_noise, params.ref_noise);
  out.ref.derive_joint_targets(skeleton);

  out.traj = traj;
  for (size_t i = 0; i < out.traj.body_pos.size(); ++i) {
    for (int k = 0; k < 3; ++k)
      out.traj.body_pos[i][k] += rng.uniform(-params.traj_noise, params.traj_noise);
    for (int k = 0; k < 3; ++k)
      out.traj.hand_pos[i][k] += rng.uniform(-params.traj_noise, params.traj_noise);
  }

  for (int k = 0; k < 3; ++k)
    out.scene_offset[k] = rng.uniform(-params.ref_noise, params.ref_noise);
  out.object = object_pose;
  out.object.t += out.scene_offset;
  out.object.q = canonical(yaw_rotation(rng.uniform(-params.yaw_range, params.yaw_range)) *
                           object_pose.q);
  return out;
}

}  // namespace dexbody
