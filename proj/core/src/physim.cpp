#include "dexbody/physim.hpp"

#include <algorithm>
#include <cmath>

#include "dexbody/config.hpp"
#include "dexbody/errors.hpp"

namespace dexbody {

namespace {

// Mean squared gyration radius of a geom about its own center; feeds the
// diagonal inertia approximation.
double geom_gyration_sq(const GeomDef& g) {
  switch (g.type) {
    case GeomType::kNone:
      return 0.0;
    case GeomType::kSphere:
      return 0.4 * g.params[0] * g.params[0];
    case GeomType::kBox:
      return (2.0 / 9.0) * g.params.squaredNorm();
    case GeomType::kCapsule: {
      const double r = g.params[0];
      const double h = g.params[1] + 2.0 * r;
      return (6.0 * r * r + h * h) / 18.0;
    }
  }
  return 0.0;
}

Vec3 clamp_ball_coords(const Vec3& c) {
  const double kMax = M_PI - 0.05;  // keep rotation-vector coords away from the wrap
  const double n = c.norm();
  if (n > kMax) return c * (kMax / n);
  return c;
}

}  // namespace

WorldConfig WorldConfig::load(const std::string& path) {
  ConfigFile cfg = ConfigFile::parse_file(path);
  return from_config(cfg);
}

WorldConfig WorldConfig::from_config(ConfigFile& cfg) {
  WorldConfig w;
  ConfigSection& top = cfg.top();
  const long schema = top.get_int("schema");
  if (schema != 1) throw SchemaError("unsupported schema " + std::to_string(schema));
  const std::string type = top.get_str("type");
  if (type != "world") throw SchemaError("expected type = world, got '" + type + "'");
  if (top.has("gravity")) {
    const std::vector<double> g = top.get_nums("gravity");
    if (g.size() != 3) throw SchemaError("gravity: expected 3 numbers");
    w.gravity = Vec3(g[0], g[1], g[2]);
  }
  w.substeps = top.get_int("substeps", 4);
  if (w.substeps < 1) throw SchemaError("substeps must be >= 1");
  w.control_hz = top.get_num("control_hz", 30.0);
  if (w.control_hz <= 0.0) throw SchemaError("control_hz must be > 0");
  w.max_velocity = top.get_num("max_velocity", 1.0e3);
  w.armature_body = top.get_num("armature_body", 0.02);
  w.armature_hand = top.get_num("armature_hand", 0.003);
  w.character_table_collision = top.get_bool("character_table_collision", false);
  w.finger_self_collision = top.get_bool("finger_self_collision", false);
  top.require_all_consumed();

  if (ConfigSection* s = cfg.unique("gains")) {
    w.gains.kp_body = s->get_num("kp_body", w.gains.kp_body);
    w.gains.kp_hand = s->get_num("kp_hand", w.gains.kp_hand);
    w.gains.ks_body = s->get_num("ks_body", w.gains.ks_body);
    w.gains.ks_hand = s->get_num("ks_hand", w.gains.ks_hand);
    w.gains.torque_max_body = s->get_num("torque_max_body", w.gains.torque_max_body);
    w.gains.torque_max_hand = s->get_num("torque_max_hand", w.gains.torque_max_hand);
    if (w.gains.kp_body <= 0.0 || w.gains.kp_hand <= 0.0 || w.gains.ks_body <= 0.0 ||
        w.gains.ks_hand <= 0.0)
      throw SchemaError("gains: kp and ks must be > 0");
    s->require_all_consumed();
  }
  if (ConfigSection* s = cfg.unique("contact")) {
    w.contact_margin = s->get_num("margin", w.contact_margin);
    w.contact_stiffness = s->get_num("stiffness", w.contact_stiffness);
    w.contact_damping_ratio = s->get_num("damping_ratio", w.contact_damping_ratio);
    w.friction_hand_object = s->get_num("friction_hand_object", w.friction_hand_object);
    w.friction_default = s->get_num("friction_default", w.friction_default);
    if (w.contact_margin <= 0.0 || w.contact_stiffness <= 0.0)
      throw SchemaError("contact: margin and stiffness must be > 0");
    s->require_all_consumed();
  }
  if (ConfigSection* s = cfg.unique("table")) {
    const std::vector<double> h = s->get_nums("half");
    if (h.size() != 3) throw SchemaError("table: half expects 3 numbers");
    w.table_half = Vec3(h[0], h[1], h[2]);
    s->require_all_consumed();
  }
  if (ConfigSection* s = cfg.unique("object")) {
    w.object = ObjectSpec::from_config(*s);
    s->require_all_consumed();
  }
  cfg.require_all_consumed();
  return w;
}

World::World(std::shared_ptr<const SkeletonSpec> skeleton, WorldConfig config)
    : skeleton_(std::move(skeleton)), config_(std::move(config)) {
  if (!skeleton_) throw InvalidArgument("world needs a skeleton");
  build_dof_tables();
}

void World::build_dof_tables() {
  const SkeletonSpec& sk = *skeleton_;
  const int n = sk.joint_count();
  const Pose rest = sk.rest_pose();
  const FkResult fk = sk.forward_kinematics(rest);

  chain_.assign(static_cast<size_t>(n), {});
  for (int b = 1; b < n; ++b) {
    std::vector<int> up;
    for (int j = b; j != 0; j = sk.joint(j).parent) up.push_back(j);
    chain_[static_cast<size_t>(b)].assign(up.rbegin(), up.rend());
  }

  // World COM and gyration of every body at rest, for inertia estimates.
  std::vector<Vec3> com(static_cast<size_t>(n));
  std::vector<double> gyr(static_cast<size_t>(n));
  total_mass_ = 0.0;
  for (int b = 0; b < n; ++b) {
    const JointDef& j = sk.joint(b);
    com[static_cast<size_t>(b)] =
        fk.pos[static_cast<size_t>(b)] + fk.rot[static_cast<size_t>(b)] * j.geom.offset;
    gyr[static_cast<size_t>(b)] = geom_gyration_sq(j.geom);
    total_mass_ += j.mass;
  }
  if (total_mass_ <= 0.0) throw InvalidArgument("skeleton has no mass");

  joint_dof_offset_.assign(static_cast<size_t>(n), -1);
  dofs_.clear();
  for (int jidx = 1; jidx < n; ++jidx) {
    const JointDef& j = sk.joint(jidx);
    joint_dof_offset_[static_cast<size_t>(jidx)] = static_cast<int>(dofs_.size());
    const int na = (j.dof == DofType::kHinge) ? 1 : 3;
    const Vec3 pivot = fk.pos[static_cast<size_t>(jidx)];
    const Quat parent_rot = fk.rot[static_cast<size_t>(j.parent)];
    for (int k = 0; k < na; ++k) {
      DofInfo d;
      d.joint = jidx;
      d.axis = k;
      d.hand = sk.is_hand_joint(jidx);
      const Vec3 axis_local = (j.dof == DofType::kHinge) ? j.axis : Vec3::Unit(k);
      const Vec3 a = parent_rot * axis_local;
      double inertia = d.hand ? config_.armature_hand : config_.armature_body;
      for (int b : sk.subtree(jidx)) {
        const double m = sk.joint(b).mass;
        if (m <= 0.0) continue;
        const Vec3 r = com[static_cast<size_t>(b)] - pivot;
        inertia += m * (r.cross(a).squaredNorm() + gyr[static_cast<size_t>(b)]);
      }
      d.inertia = inertia;
      const double kp = d.hand ? config_.gains.kp_hand : config_.gains.kp_body;
      d.kd = 2.0 * std::sqrt(kp * inertia);
      dofs_.push_back(d);
    }
  }

  root_inertia_ = Vec3::Zero();
  const Vec3 root = fk.pos[0];
  for (int b = 0; b < n; ++b) {
    const double m = sk.joint(b).mass;
    if (m <= 0.0) continue;
    const Vec3 r = com[static_cast<size_t>(b)] - root;
    for (int k = 0; k < 3; ++k)
      root_inertia_[k] += m * (r.cross(Vec3::Unit(k)).squaredNorm() + gyr[static_cast<size_t>(b)]);
  }
  root_inertia_ = root_inertia_.cwiseMax(1e-6);

  probes_.resize(static_cast<size_t>(n));
  for (int b = 0; b < n; ++b) probes_[static_cast<size_t>(b)] = geom_contact_probes(sk.joint(b).geom);

  const int used_dims = config_.object.type == PrimitiveType::kSphere
                            ? 1
                            : (config_.object.type == PrimitiveType::kCylinder ? 2 : 3);
  const double min_dim = config_.object.dims.head(used_dims).minCoeff();
  object_probes_ = primitive_surface_points(config_.object.type, config_.object.dims,
                                            std::max(0.008, min_dim / 2.0));

  body_ref_.assign(static_cast<size_t>(n), Vec3::Zero());
  for (int jidx = 1; jidx < n; ++jidx)
    body_ref_[static_cast<size_t>(jidx)] = 0.5 * (sk.joint(jidx).lower + sk.joint(jidx).upper);

  body_action_dim_ = 0;
  for (int j : sk.body_joints())
    body_action_dim_ += (sk.joint(j).dof == DofType::kHinge) ? 1 : 3;
  hand_action_dim_ = 0;
  for (int j : sk.hand_joints())
    hand_action_dim_ += (sk.joint(j).dof == DofType::kHinge) ? 1 : 3;

  // Finger-finger candidate pairs: hand capsules on different chains below
  // the wrist (self-collision never includes the palm or the same finger).
  finger_pairs_.clear();
  const int wrist = sk.wrist();
  std::vector<int> finger_of(static_cast<size_t>(n), -1);
  if (wrist >= 0) {
    for (int j : sk.hand_joints()) {
      if (j == wrist) continue;
      int cur = j;
      while (cur >= 0 && sk.joint(cur).parent != wrist) cur = sk.joint(cur).parent;
      finger_of[static_cast<size_t>(j)] = cur;
    }
    for (size_t a = 0; a < sk.hand_joints().size(); ++a) {
      for (size_t b = a + 1; b < sk.hand_joints().size(); ++b) {
        const int ja = sk.hand_joints()[a], jb = sk.hand_joints()[b];
        if (ja == wrist || jb == wrist) continue;
        if (finger_of[static_cast<size_t>(ja)] == finger_of[static_cast<size_t>(jb)]) continue;
        if (sk.joint(ja).geom.type != GeomType::kCapsule ||
            sk.joint(jb).geom.type != GeomType::kCapsule)
          continue;
        finger_pairs_.emplace_back(ja, jb);
      }
    }
  }

  coords_.assign(static_cast<size_t>(n), Vec3::Zero());
  coord_vel_.assign(static_cast<size_t>(n), Vec3::Zero());
  gen_force_ = VecX::Zero(6 + static_cast<int>(dofs_.size()));
  body_contact_force_.assign(static_cast<size_t>(n), Vec3::Zero());
  hand_object_force_ = VecX::Zero(static_cast<int>(sk.hand_joints().size()));
}

void World::set_from_pose(const Pose& pose) {
  const SkeletonSpec& sk = *skeleton_;
  if (static_cast<int>(pose.joint_rot.size()) != sk.joint_count())
    throw InvalidArgument("pose joint count mismatch");
  root_pos_ = pose.root_pos;
  root_rot_ = canonical(pose.root_rot);
  for (int j = 1; j < sk.joint_count(); ++j)
    coords_[static_cast<size_t>(j)] = sk.joint_coords(j, pose.joint_rot[static_cast<size_t>(j)]);
}

Pose World::current_pose() const {
  const SkeletonSpec& sk = *skeleton_;
  Pose p = Pose::neutral(static_cast<size_t>(sk.joint_count()));
  p.root_pos = root_pos_;
  p.root_rot = root_rot_;
  for (int j = 1; j < sk.joint_count(); ++j)
    p.joint_rot[static_cast<size_t>(j)] = sk.joint_rotation(j, coords_[static_cast<size_t>(j)]);
  return p;
}

void World::refresh_fk() { fk_ = skeleton_->forward_kinematics(current_pose()); }

SimState World::reset(const Pose& pose, const Transform& object_pose,
                      const Transform& table_pose, uint64_t seed) {
  (void)seed;  // the world itself is deterministic; the seed is part of the
               // reset contract so callers thread reproducibility through
  if (!skeleton_->within_limits(pose, 1e-6))
    throw InvalidArgument("reset pose violates joint limits");
  set_from_pose(pose);
  root_lin_vel_.setZero();
  root_ang_vel_.setZero();
  for (Vec3& v : coord_vel_) v.setZero();
  object_T_ = object_pose;
  object_T_.q = canonical(object_T_.q);
  object_lin_vel_.setZero();
  object_ang_vel_.setZero();
  table_ = table_pose;
  table_.q = canonical(table_.q);
  time_ = 0.0;
  initialized_ = true;

  refresh_fk();

  // Initial interpenetration gate: anything deeper than 5 mm is a setup bug.
  const double kDeep = 0.005;
  struct Deep {
    double pen = 0.0;
    std::string pair;
  } worst;
  auto note = [&](double sep, const std::string& a, const std::string& b) {
    const double pen = -sep;
    if (pen > worst.pen) {
      worst.pen = pen;
      worst.pair = a + " vs " + b;
    }
  };
  const SkeletonSpec& sk = *skeleton_;
  for (int b = 0; b < sk.joint_count(); ++b) {
    for (const ContactProbe& pr : probes_[static_cast<size_t>(b)]) {
      const Vec3 p = fk_.pos[static_cast<size_t>(b)] + fk_.rot[static_cast<size_t>(b)] * pr.local;
      note(p[2] - pr.radius, sk.joint(b).name, "ground");
      if (config_.character_table_collision) {
        const Vec3 local = table_.apply_inverse(p);
        note(primitive_sdf(PrimitiveType::kBox, config_.table_half, local) - pr.radius,
             sk.joint(b).name, "table");
      }
      const Vec3 lo = object_T_.apply_inverse(p);
      note(primitive_sdf(config_.object.type, config_.object.dims, lo) - pr.radius,
           sk.joint(b).name, config_.object.name);
    }
  }
  for (const Vec3& lp : object_probes_) {
    const Vec3 p = object_T_.apply(lp);
    note(p[2], config_.object.name, "ground");
    const Vec3 local = table_.apply_inverse(p);
    note(primitive_sdf(PrimitiveType::kBox, config_.table_half, local), config_.object.name,
         "table");
  }
  if (worst.pen > kDeep)
    throw InitError("initial penetration " + format_double(worst.pen) + " m between " +
                    worst.pair);

  compute_contacts(config_.sub_dt(), /*apply=*/false);
  object_contact_impulse_.setZero();
  state_ = snapshot();
  return state_;
}

SimState World::step(const VecX& action_body, const VecX& action_hand) {
  if (!initialized_) throw InvalidArgument("step before reset");
  if (action_body.size() != body_action_dim_ || action_hand.size() != hand_action_dim_)
    throw InvalidArgument("action dimension mismatch: body " + std::to_string(action_body.size()) +
                          "/" + std::to_string(body_action_dim_) + ", hand " +
                          std::to_string(action_hand.size()) + "/" +
                          std::to_string(hand_action_dim_));
  if (!action_body.allFinite() || !action_hand.allFinite())
    throw InvalidArgument("non-finite action");

  const SkeletonSpec& sk = *skeleton_;
  // Reference targets, frozen for the whole control tick. Body joints pull
  // toward their limit center; hand joints hold the pose captured now.
  VecX dof_ref = VecX::Zero(static_cast<int>(dofs_.size()));
  VecX dof_action = VecX::Zero(static_cast<int>(dofs_.size()));
  std::vector<char> actuated(dofs_.size(), 0);
  int ai = 0;
  for (int j : sk.body_joints()) {
    const int base = joint_dof_offset_[static_cast<size_t>(j)];
    const int na = (sk.joint(j).dof == DofType::kHinge) ? 1 : 3;
    for (int k = 0; k < na; ++k, ++ai) {
      dof_ref[base + k] = body_ref_[static_cast<size_t>(j)][k];
      dof_action[base + k] = action_body[ai];
      actuated[static_cast<size_t>(base + k)] = 1;
    }
  }
  ai = 0;
  for (int j : sk.hand_joints()) {
    const int base = joint_dof_offset_[static_cast<size_t>(j)];
    const int na = (sk.joint(j).dof == DofType::kHinge) ? 1 : 3;
    for (int k = 0; k < na; ++k, ++ai) {
      dof_ref[base + k] = coords_[static_cast<size_t>(j)][k];
      dof_action[base + k] = action_hand[ai];
      actuated[static_cast<size_t>(base + k)] = 1;
    }
  }

  object_contact_impulse_.setZero();
  for (int s = 0; s < config_.substeps; ++s) substep(dof_ref, dof_action, actuated);
  state_ = snapshot();
  return state_;
}

double pd_torque(double kp, double kd, double ks, double theta_ref, double theta,
                 double theta_dot, double action, double tau_max) {
  const double a = std::clamp(action, -1.0, 1.0);
  const double target = theta_ref + ks * a;
  return std::clamp(kp * (target - theta) - kd * theta_dot, -tau_max, tau_max);
}

void World::substep(const VecX& dof_ref, const VecX& dof_action,
                    const std::vector<char>& actuated) {
  const SkeletonSpec& sk = *skeleton_;
  const double dt = config_.sub_dt();
  refresh_fk();

  gen_force_.setZero();
  object_force_.setZero();
  object_torque_.setZero();

  // Gravity on every character body, mapped through the same Jacobian used
  // for contacts so joints feel gravitational torques.
  for (int b = 0; b < sk.joint_count(); ++b) {
    const double m = sk.joint(b).mass;
    if (m <= 0.0) continue;
    const Vec3 com = fk_.pos[static_cast<size_t>(b)] + fk_.rot[static_cast<size_t>(b)] * sk.joint(b).geom.offset;
    apply_wrench_to_character(b, com, m * config_.gravity);
  }

  compute_contacts(dt, /*apply=*/true);

  for (size_t i = 0; i < dofs_.size(); ++i) {
    if (!actuated[i]) continue;
    const DofInfo& d = dofs_[i];
    const double kp = d.hand ? config_.gains.kp_hand : config_.gains.kp_body;
    const double ks = d.hand ? config_.gains.ks_hand : config_.gains.ks_body;
    const double tmax = d.hand ? config_.gains.torque_max_hand : config_.gains.torque_max_body;
    const double theta = coords_[static_cast<size_t>(d.joint)][d.axis];
    const double theta_dot = coord_vel_[static_cast<size_t>(d.joint)][d.axis];
    gen_force_[6 + static_cast<int>(i)] +=
        pd_torque(kp, d.kd, ks, dof_ref[static_cast<int>(i)], theta, theta_dot,
                  dof_action[static_cast<int>(i)], tmax);
  }

  // Semi-implicit velocity and position updates keep stiff contacts stable.
  // During contact-free flight the position update subtracts dt^2/2 * g so a
  // constant-gravity arc matches the analytic trajectory exactly; the term is
  // state independent, so it cannot perturb stability once contact starts.
  if (!root_fixed_) {
    root_lin_vel_ += dt * gen_force_.segment<3>(0) / total_mass_;
    const Mat3 r = root_rot_.toRotationMatrix();
    root_ang_vel_ += dt * (r * root_inertia_.cwiseInverse().asDiagonal() * r.transpose() *
                           gen_force_.segment<3>(3));
  }
  for (size_t i = 0; i < dofs_.size(); ++i) {
    const DofInfo& d = dofs_[i];
    coord_vel_[static_cast<size_t>(d.joint)][d.axis] +=
        dt * gen_force_[6 + static_cast<int>(i)] / d.inertia;
  }
  if (!object_fixed_) {
    object_lin_vel_ += dt * (config_.gravity + object_force_ / config_.object.mass);
    const Mat3 ro = object_T_.q.toRotationMatrix();
    object_ang_vel_ += dt * (ro * config_.object.inertia.cwiseInverse().asDiagonal() *
                             ro.transpose() * object_torque_);
  } else {
    object_lin_vel_.setZero();
    object_ang_vel_.setZero();
  }
  object_contact_impulse_ += dt * object_contact_force_;

  check_divergence();

  bool char_contact_free = true;
  for (const Vec3& f : body_contact_force_)
    if (!f.isZero()) char_contact_free = false;
  if (!root_fixed_) {
    root_pos_ += dt * root_lin_vel_;
    if (char_contact_free) root_pos_ -= 0.5 * dt * dt * config_.gravity;
    root_rot_ = canonical(quat_exp(root_ang_vel_ * dt) * root_rot_);
  }
  for (int j = 1; j < sk.joint_count(); ++j) {
    const size_t ji = static_cast<size_t>(j);
    coords_[ji] += dt * coord_vel_[ji];
    // Joint limits: clamp and cancel outward velocity.
    const JointDef& def = sk.joint(j);
    const int na = (def.dof == DofType::kHinge) ? 1 : 3;
    for (int k = 0; k < na; ++k) {
      if (coords_[ji][k] <= def.lower[k]) {
        coords_[ji][k] = def.lower[k];
        coord_vel_[ji][k] = std::max(coord_vel_[ji][k], 0.0);
      } else if (coords_[ji][k] >= def.upper[k]) {
        coords_[ji][k] = def.upper[k];
        coord_vel_[ji][k] = std::min(coord_vel_[ji][k], 0.0);
      }
    }
    if (def.dof != DofType::kHinge) coords_[ji] = clamp_ball_coords(coords_[ji]);
  }
  if (!object_fixed_) {
    object_T_.t += dt * object_lin_vel_;
    if (object_contact_force_.isZero()) object_T_.t -= 0.5 * dt * dt * config_.gravity;
    object_T_.q = canonical(quat_exp(object_ang_vel_ * dt) * object_T_.q);
  }
  time_ += dt;
}

void World::apply_wrench_to_character(int body, const Vec3& point, const Vec3& force) {
  if (!root_fixed_) {
    gen_force_.segment<3>(0) += force;
    gen_force_.segment<3>(3) += (point - root_pos_).cross(force);
  }
  const SkeletonSpec& sk = *skeleton_;
  for (int j : chain_[static_cast<size_t>(body)]) {
    const JointDef& def = sk.joint(j);
    const int base = joint_dof_offset_[static_cast<size_t>(j)];
    const Vec3 arm = point - fk_.pos[static_cast<size_t>(j)];
    const Quat parent_rot = fk_.rot[static_cast<size_t>(def.parent)];
    const int na = (def.dof == DofType::kHinge) ? 1 : 3;
    for (int k = 0; k < na; ++k) {
      const Vec3 axis_local = (def.dof == DofType::kHinge) ? def.axis : Vec3::Unit(k);
      const Vec3 a = parent_rot * axis_local;
      gen_force_[6 + base + k] += a.dot(arm.cross(force));
    }
  }
}

double World::character_inv_mass(int body, const Vec3& point, const Vec3& dir) const {
  double w = 0.0;
  if (!root_fixed_) {
    w += 1.0 / total_mass_;
    const Vec3 jw = (point - root_pos_).cross(dir);
    const Vec3 t = root_rot_.conjugate() * jw;
    w += t.cwiseAbs2().dot(root_inertia_.cwiseInverse());
  }
  const SkeletonSpec& sk = *skeleton_;
  for (int j : chain_[static_cast<size_t>(body)]) {
    const JointDef& def = sk.joint(j);
    const int base = joint_dof_offset_[static_cast<size_t>(j)];
    const Vec3 arm = point - fk_.pos[static_cast<size_t>(j)];
    const Quat parent_rot = fk_.rot[static_cast<size_t>(def.parent)];
    const int na = (def.dof == DofType::kHinge) ? 1 : 3;
    for (int k = 0; k < na; ++k) {
      const Vec3 axis_local = (def.dof == DofType::kHinge) ? def.axis : Vec3::Unit(k);
      const Vec3 a = parent_rot * axis_local;
      const double jrow = a.dot(arm.cross(dir));
      w += jrow * jrow / dofs_[static_cast<size_t>(base + k)].inertia;
    }
  }
  return w;
}

Vec3 World::character_point_velocity(int body, const Vec3& point) const {
  Vec3 v = Vec3::Zero();
  if (!root_fixed_) v = root_lin_vel_ + root_ang_vel_.cross(point - root_pos_);
  const SkeletonSpec& sk = *skeleton_;
  for (int j : chain_[static_cast<size_t>(body)]) {
    const JointDef& def = sk.joint(j);
    const Vec3 arm = point - fk_.pos[static_cast<size_t>(j)];
    const Quat parent_rot = fk_.rot[static_cast<size_t>(def.parent)];
    const int na = (def.dof == DofType::kHinge) ? 1 : 3;
    for (int k = 0; k < na; ++k) {
      const Vec3 axis_local = (def.dof == DofType::kHinge) ? def.axis : Vec3::Unit(k);
      const Vec3 a = parent_rot * axis_local;
      v += coord_vel_[static_cast<size_t>(j)][k] * a.cross(arm);
    }
  }
  return v;
}

double World::object_inv_mass(const Vec3& point, const Vec3& dir) const {
  if (object_fixed_) return 0.0;
  double w = 1.0 / config_.object.mass;
  const Vec3 jw = (point - object_T_.t).cross(dir);
  const Vec3 t = object_T_.q.conjugate() * jw;
  w += t.cwiseAbs2().dot(config_.object.inertia.cwiseInverse());
  return w;
}

Vec3 World::object_point_velocity(const Vec3& point) const {
  if (object_fixed_) return Vec3::Zero();
  return object_lin_vel_ + object_ang_vel_.cross(point - object_T_.t);
}

void World::compute_contacts(double dt, bool apply) {
  const SkeletonSpec& sk = *skeleton_;
  const double margin = config_.contact_margin;

  struct Candidate {
    int char_body = -1;   // probe owner when >= 0
    int other_char = -1;  // finger-finger partner
    enum Other { kGround, kTable, kObject, kChar, kObjGround, kObjTable } other;
    Vec3 point = Vec3::Zero();
    Vec3 other_point = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    double sep = 0.0;
  };
  std::vector<Candidate> cands;
  cands.reserve(64);

  std::vector<int> active(static_cast<size_t>(sk.joint_count()), 0);
  int active_obj = 0;

  for (int b = 0; b < sk.joint_count(); ++b) {
    for (const ContactProbe& pr : probes_[static_cast<size_t>(b)]) {
      const Vec3 p = fk_.pos[static_cast<size_t>(b)] + fk_.rot[static_cast<size_t>(b)] * pr.local;
      {
        const double sep = p[2] - pr.radius;
        if (sep < margin) {
          Candidate c;
          c.char_body = b;
          c.other = Candidate::kGround;
          c.point = p;
          c.normal = Vec3::UnitZ();
          c.sep = sep;
          cands.push_back(c);
          ++active[static_cast<size_t>(b)];
        }
      }
      if (config_.character_table_collision) {
        const Vec3 local = table_.apply_inverse(p);
        const double sep = primitive_sdf(PrimitiveType::kBox, config_.table_half, local) - pr.radius;
        if (sep < margin) {
          Candidate c;
          c.char_body = b;
          c.other = Candidate::kTable;
          c.point = p;
          c.normal = table_.q * primitive_sdf_grad(PrimitiveType::kBox, config_.table_half, local);
          c.sep = sep;
          cands.push_back(c);
          ++active[static_cast<size_t>(b)];
        }
      }
      {
        const Vec3 local = object_T_.apply_inverse(p);
        const double sep = primitive_sdf(config_.object.type, config_.object.dims, local) - pr.radius;
        if (sep < margin) {
          Candidate c;
          c.char_body = b;
          c.other = Candidate::kObject;
          c.point = p;
          c.normal = object_T_.q * primitive_sdf_grad(config_.object.type, config_.object.dims, local);
          c.sep = sep;
          cands.push_back(c);
          ++active[static_cast<size_t>(b)];
          ++active_obj;
        }
      }
    }
  }

  if (config_.finger_self_collision) {
    for (const auto& [ja, jb] : finger_pairs_) {
      const GeomDef& ga = sk.joint(ja).geom;
      const GeomDef& gb = sk.joint(jb).geom;
      auto endpoints = [&](int j, const GeomDef& g, Vec3& e0, Vec3& e1) {
        const Vec3 c = fk_.pos[static_cast<size_t>(j)] + fk_.rot[static_cast<size_t>(j)] * g.offset;
        const Vec3 ax = fk_.rot[static_cast<size_t>(j)] * g.axis;
        e0 = c - 0.5 * g.params[1] * ax;
        e1 = c + 0.5 * g.params[1] * ax;
      };
      Vec3 a0, a1, b0, b1, wa, wb;
      endpoints(ja, ga, a0, a1);
      endpoints(jb, gb, b0, b1);
      const double d2 = segment_segment_sq(a0, a1, b0, b1, wa, wb);
      const double dist = std::sqrt(d2);
      const double sep = dist - ga.params[0] - gb.params[0];
      if (sep < margin) {
        Candidate c;
        c.char_body = ja;
        c.other_char = jb;
        c.other = Candidate::kChar;
        c.point = wa;
        c.other_point = wb;
        c.normal = dist > 1e-9 ? Vec3((wa - wb) / dist) : Vec3::UnitZ();
        c.sep = sep;
        cands.push_back(c);
        ++active[static_cast<size_t>(ja)];
        ++active[static_cast<size_t>(jb)];
      }
    }
  }

  for (const Vec3& lp : object_probes_) {
    const Vec3 p = object_T_.apply(lp);
    {
      const double sep = p[2];
      if (sep < margin) {
        Candidate c;
        c.other = Candidate::kObjGround;
        c.point = p;
        c.normal = Vec3::UnitZ();
        c.sep = sep;
        cands.push_back(c);
        ++active_obj;
      }
    }
    {
      const Vec3 local = table_.apply_inverse(p);
      const double sep = primitive_sdf(PrimitiveType::kBox, config_.table_half, local);
      if (sep < margin) {
        Candidate c;
        c.other = Candidate::kObjTable;
        c.point = p;
        c.normal = table_.q * primitive_sdf_grad(PrimitiveType::kBox, config_.table_half, local);
        c.sep = sep;
        cands.push_back(c);
        ++active_obj;
      }
    }
  }

  for (Vec3& f : body_contact_force_) f.setZero();
  hand_object_force_.setZero();
  object_contact_force_.setZero();
  table_force_.setZero();
  object_table_force_ = 0.0;
  object_ground_force_ = 0.0;

  // Per-hand-joint slot lookup.
  auto hand_slot = [&](int joint) {
    const auto& hj = sk.hand_joints();
    for (size_t i = 0; i < hj.size(); ++i)
      if (hj[i] == joint) return static_cast<int>(i);
    return -1;
  };

  for (const Candidate& c : cands) {
    double w = 0.0;
    int n_active = 1;
    if (c.char_body >= 0) {
      w += character_inv_mass(c.char_body, c.point, c.normal);
      n_active = std::max(n_active, active[static_cast<size_t>(c.char_body)]);
    }
    Vec3 v_other = Vec3::Zero();
    bool object_side = false;
    switch (c.other) {
      case Candidate::kGround:
      case Candidate::kTable:
        break;
      case Candidate::kObject:
        object_side = true;
        w += object_inv_mass(c.point, c.normal);
        v_other = object_point_velocity(c.point);
        n_active = std::max(n_active, active_obj);
        break;
      case Candidate::kChar:
        w += character_inv_mass(c.other_char, c.other_point, c.normal);
        v_other = character_point_velocity(c.other_char, c.other_point);
        n_active = std::max(n_active, active[static_cast<size_t>(c.other_char)]);
        break;
      case Candidate::kObjGround:
      case Candidate::kObjTable:
        w += object_inv_mass(c.point, c.normal);
        n_active = std::max(n_active, active_obj);
        break;
    }

    // Stiffness and damping are capped by the effective mass divided by the
    // number of simultaneously active contacts on the same bodies, so the
    // summed spring and damper coefficients stay inside the explicit
    // integrator's stable region at the configured timestep.
    const double m_eff = (w > 1e-12) ? 1.0 / w : 1.0e3;
    const double share = m_eff / static_cast<double>(n_active);
    const double k = std::min(config_.contact_stiffness, share / (dt * dt));
    const double d_n = 2.0 * config_.contact_damping_ratio * std::sqrt(k * share);

    Vec3 v_probe = Vec3::Zero();
    if (c.char_body >= 0)
      v_probe = character_point_velocity(c.char_body, c.point);
    else
      v_probe = object_point_velocity(c.point);
    const Vec3 v_rel = v_probe - v_other;
    const double v_n = c.normal.dot(v_rel);

    const double depth = margin - c.sep;
    const double fn = std::max(0.0, k * depth - d_n * v_n);

    const bool hand_object = object_side && c.char_body >= 0 && sk.is_hand_joint(c.char_body);
    const double mu = hand_object ? config_.friction_hand_object : config_.friction_default;
    Vec3 ft = Vec3::Zero();
    const Vec3 v_t = v_rel - v_n * c.normal;
    const double vt_norm = v_t.norm();
    if (vt_norm > 1e-9 && fn > 0.0) {
      const double d_t = 0.5 * share / dt;
      const double mag = std::min(d_t * vt_norm, mu * fn);
      ft = -(mag / vt_norm) * v_t;
    }
    const Vec3 force = fn * c.normal + ft;

    if (c.char_body >= 0) {
      body_contact_force_[static_cast<size_t>(c.char_body)] += force;
      if (apply) apply_wrench_to_character(c.char_body, c.point, force);
    }
    switch (c.other) {
      case Candidate::kGround:
        break;
      case Candidate::kTable:
        table_force_ += -force;
        break;
      case Candidate::kObject:
        object_contact_force_ += -force;
        if (apply) {
          object_force_ += -force;
          object_torque_ += (c.point - object_T_.t).cross(-force);
        }
        if (hand_object) {
          const int slot = hand_slot(c.char_body);
          if (slot >= 0) hand_object_force_[slot] += force.norm();
        }
        break;
      case Candidate::kChar:
        body_contact_force_[static_cast<size_t>(c.other_char)] += -force;
        if (apply) apply_wrench_to_character(c.other_char, c.other_point, -force);
        break;
      case Candidate::kObjGround:
        object_contact_force_ += force;
        object_ground_force_ += fn;
        if (apply) {
          object_force_ += force;
          object_torque_ += (c.point - object_T_.t).cross(force);
        }
        break;
      case Candidate::kObjTable:
        object_contact_force_ += force;
        object_table_force_ += fn;
        table_force_ += -force;
        if (apply) {
          object_force_ += force;
          object_torque_ += (c.point - object_T_.t).cross(force);
        }
        break;
    }
  }
}

void World::check_divergence() const {
  const SkeletonSpec& sk = *skeleton_;
  const double vmax = config_.max_velocity;
  auto bad = [&](const Vec3& v) { return !all_finite(v) || v.cwiseAbs().maxCoeff() > vmax; };
  if (bad(root_lin_vel_) || bad(root_ang_vel_))
    throw SimDiverged("velocity diverged on " + sk.joint(0).name, sk.joint(0).name);
  for (int j = 1; j < sk.joint_count(); ++j) {
    if (bad(coord_vel_[static_cast<size_t>(j)]))
      throw SimDiverged("velocity diverged on " + sk.joint(j).name, sk.joint(j).name);
  }
  if (bad(object_lin_vel_) || bad(object_ang_vel_))
    throw SimDiverged("velocity diverged on object", config_.object.name);
}

SimState World::snapshot() const {
  const SkeletonSpec& sk = *skeleton_;
  SimState s;
  s.time = time_;
  s.pose = current_pose();
  s.root_lin_vel = root_lin_vel_;
  s.root_ang_vel = root_ang_vel_;
  s.joint_vel = coord_vel_;
  s.fk = fk_;
  s.object = object_T_;
  s.object_lin_vel = object_lin_vel_;
  s.object_ang_vel = object_ang_vel_;
  s.f = VecX::Zero(sk.joint_count() + 2);
  for (int j = 0; j < sk.joint_count(); ++j)
    s.f[j] = body_contact_force_[static_cast<size_t>(j)].norm();
  s.f[sk.joint_count()] = object_contact_force_.norm();
  s.f[sk.joint_count() + 1] = table_force_.norm();
  s.hand_object_force = hand_object_force_;
  s.object_contact_force = object_contact_force_;
  s.object_contact_impulse = object_contact_impulse_;
  s.object_table_force = object_table_force_;
  s.object_ground_force = object_ground_force_;
  return s;
}

SimState World::kinematic_frame(const Pose& pose, const Transform& object_pose) {
  if (!initialized_) throw InvalidArgument("kinematic_frame before reset");
  const double dt = config_.control_dt();
  const Pose prev = current_pose();
  const Transform obj_prev = object_T_;

  set_from_pose(pose);
  object_T_ = object_pose;
  object_T_.q = canonical(object_T_.q);

  root_lin_vel_ = finite_diff(root_pos_, prev.root_pos, dt);
  root_ang_vel_ = quat_log(root_rot_ * prev.root_rot.conjugate()) / dt;
  const SkeletonSpec& sk = *skeleton_;
  for (int j = 1; j < sk.joint_count(); ++j) {
    const Vec3 prev_c = sk.joint_coords(j, prev.joint_rot[static_cast<size_t>(j)]);
    coord_vel_[static_cast<size_t>(j)] =
        finite_diff(coords_[static_cast<size_t>(j)], prev_c, dt);
  }
  object_lin_vel_ = finite_diff(object_T_.t, obj_prev.t, dt);
  object_ang_vel_ = quat_log(object_T_.q * obj_prev.q.conjugate()) / dt;

  refresh_fk();
  compute_contacts(config_.sub_dt(), /*apply=*/false);
  object_contact_impulse_ = object_contact_force_ * dt;
  time_ += dt;
  state_ = snapshot();
  return state_;
}

}  // namespace dexbody
