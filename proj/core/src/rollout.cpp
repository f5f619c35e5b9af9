#include "dexbody/rollout.hpp"

#include <cmath>
#include <sstream>

#include "dexbody/config.hpp"
#include "dexbody/errors.hpp"
#include "dexbody/features.hpp"

namespace dexbody {

namespace {

void write_transform(std::ostringstream& out, const Transform& T) {
  const auto num = [&out](double v) { out << ' ' << format_double(v); };
  num(T.t[0]);
  num(T.t[1]);
  num(T.t[2]);
  num(T.q.w());
  num(T.q.x());
  num(T.q.y());
  num(T.q.z());
}

Transform read_transform(std::istringstream& in) {
  double v[7];
  for (double& x : v) in >> x;
  Transform T;
  T.t = Vec3(v[0], v[1], v[2]);
  T.q = canonical(Quat(v[3], v[4], v[5], v[6]));
  return T;
}

}  // namespace

double RolloutRecord::duration() const {
  return frames.empty() ? 0.0 : static_cast<double>(frames.size() - 1) * frame_dt;
}

void RolloutRecord::validate(const SkeletonSpec& skeleton) const {
  if (frames.empty()) throw SchemaError("rollout has no frames");
  if (skeleton_hash != skeleton.source_hash())
    throw SchemaError("rollout skeleton hash does not match the loaded skeleton");
  if (!(frame_dt > 0.0)) throw SchemaError("rollout frame_dt must be positive");
  const size_t nh = skeleton.hand_joints().size();
  for (size_t i = 0; i < frames.size(); ++i) {
    const RolloutFrame& f = frames[i];
    const std::string where = "rollout frame " + std::to_string(i);
    if (std::abs(f.time - static_cast<double>(i) * frame_dt) > 1e-9)
      throw SchemaError(where + " breaks the frame spacing");
    if (f.pose.joint_rot.size() != static_cast<size_t>(skeleton.joint_count()))
      throw SchemaError(where + " has the wrong joint count");
    if (f.hand_object_force.size() != static_cast<Eigen::Index>(nh))
      throw SchemaError(where + " has the wrong hand force count");
    if (f.eta < 0.0 || f.eta > 1.0) throw SchemaError(where + " eta outside [0, 1]");
    if (f.object_table_force < 0.0 || f.object_ground_force < 0.0)
      throw SchemaError(where + " has a negative support force");
  }
  if (trajectory.count() > 0) {
    trajectory.validate();
    if (trajectory_start < 0 || trajectory_start >= frame_count())
      throw SchemaError("trajectory_start outside the recorded frames");
  }
}

void RolloutRecord::save(const std::string& path, const SkeletonSpec& skeleton) const {
  std::ostringstream out;
  out << "# dexbody-rollout 1 skeleton " << std::hex << skeleton.source_hash() << std::dec
      << " dt " << format_double(frame_dt) << " table";
  write_transform(out, table);
  out << '\n';
  out << "trajectory " << trajectory.count() << " start " << trajectory_start << '\n';
  for (int i = 0; i < trajectory.count(); ++i) {
    std::ostringstream line;
    const auto num = [&line](double v) { line << ' ' << format_double(v); };
    line << "waypoint";
    for (int k = 0; k < 3; ++k) num(trajectory.body_pos[static_cast<size_t>(i)][k]);
    for (int k = 0; k < 3; ++k) num(trajectory.hand_pos[static_cast<size_t>(i)][k]);
    out << line.str() << '\n';
  }
  for (const RolloutFrame& f : frames) {
    out << format_double(f.time);
    const auto num = [&out](double v) { out << ' ' << format_double(v); };
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
    write_transform(out, f.object);
    for (Eigen::Index k = 0; k < f.hand_object_force.size(); ++k) num(f.hand_object_force[k]);
    num(f.object_table_force);
    num(f.object_ground_force);
    num(f.eta);
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

RolloutRecord RolloutRecord::load(const std::string& path, const SkeletonSpec& skeleton) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw SchemaError(path + ": empty rollout file");
  std::istringstream hs(header);
  std::string magic, format, version, skeleton_kw, dt_kw, table_kw;
  hs >> magic >> format >> version >> skeleton_kw;
  if (magic != "#" || format != "dexbody-rollout" || version != "1" ||
      skeleton_kw != "skeleton")
    throw SchemaError(path + ": not a rollout file");
  RolloutRecord rec;
  hs >> std::hex >> rec.skeleton_hash >> std::dec;
  if (hs.fail()) throw SchemaError(path + ": bad skeleton hash in header");
  hs >> dt_kw >> rec.frame_dt;
  if (hs.fail() || dt_kw != "dt") throw SchemaError(path + ": bad frame spacing in header");
  hs >> table_kw;
  if (table_kw != "table") throw SchemaError(path + ": missing table pose in header");
  rec.table = read_transform(hs);
  if (hs.fail()) throw SchemaError(path + ": bad table pose in header");

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": missing trajectory line");
  std::istringstream ts(line);
  std::string traj_kw, start_kw;
  int count = 0;
  ts >> traj_kw >> count >> start_kw >> rec.trajectory_start;
  if (ts.fail() || traj_kw != "trajectory" || start_kw != "start" || count < 0)
    throw SchemaError(path + ": bad trajectory line");
  for (int i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw SchemaError(path + ": truncated waypoint list");
    std::istringstream ws(line);
    std::string wp_kw;
    Vec3 body, hand;
    ws >> wp_kw;
    for (int k = 0; k < 3; ++k) ws >> body[k];
    for (int k = 0; k < 3; ++k) ws >> hand[k];
    if (ws.fail() || wp_kw != "waypoint")
      throw SchemaError(path + ": bad waypoint on line " + std::to_string(i + 2));
    rec.trajectory.body_pos.push_back(body);
    rec.trajectory.hand_pos.push_back(hand);
  }

  const int nb = static_cast<int>(skeleton.body_joints().size());
  const int nh = static_cast<int>(skeleton.hand_joints().size());
  size_t line_no = 2 + static_cast<size_t>(count);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    RolloutFrame f;
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
    f.object = read_transform(ls);
    f.hand_object_force = VecX::Zero(nh);
    for (int k = 0; k < nh; ++k) ls >> f.hand_object_force[k];
    ls >> f.object_table_force >> f.object_ground_force >> f.eta;
    if (ls.fail())
      throw SchemaError(path + ": truncated rollout frame on line " + std::to_string(line_no));
    rec.frames.push_back(std::move(f));
  }
  rec.validate(skeleton);
  return rec;
}

RolloutRecord scripted_rollout(const MotionClip& clip,
                               const std::shared_ptr<const SkeletonSpec>& skeleton,
                               const WorldConfig& config, double hold_seconds) {
  clip.validate(*skeleton);
  if (hold_seconds < 0.0) throw InvalidArgument("hold_seconds must be non-negative");
  World world(skeleton, config);
  world.reset(clip.frames.front().pose, clip.frames.front().object, clip.table, 0);

  RolloutRecord rec;
  rec.table = clip.table;
  rec.frame_dt = MotionClip::kFrameDt;
  rec.skeleton_hash = clip.skeleton_hash;
  // Waypoints start after the 1 s approach window, matching the window the
  // manipulation trajectory is extracted over during training.
  const int window_start = 30;
  rec.trajectory = extract_trajectory(clip, *skeleton, window_start);
  rec.trajectory_start = window_start;

  const double z0 = clip.frames.front().object.t[2];
  const int hold_frames = static_cast<int>(std::lround(hold_seconds / MotionClip::kFrameDt));
  const int total = clip.frame_count() + hold_frames;
  rec.frames.reserve(static_cast<size_t>(total));
  for (int i = 0; i < total; ++i) {
    const ClipFrame& src =
        clip.frames[static_cast<size_t>(std::min(i, clip.frame_count() - 1))];
    const SimState& s = world.kinematic_frame(src.pose, src.object);
    RolloutFrame f;
    f.time = static_cast<double>(i) * MotionClip::kFrameDt;
    f.pose = src.pose;
    f.object = src.object;
    f.hand_object_force = s.hand_object_force;
    f.object_table_force = s.object_table_force;
    f.object_ground_force = s.object_ground_force;
    f.eta = phase(s, *skeleton, z0);
    rec.frames.push_back(std::move(f));
  }
  return rec;
}

}  // namespace dexbody
