#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dexbody/collision.hpp"
#include "dexbody/mathcore.hpp"
#include "dexbody/skeleton.hpp"

namespace dexbody {

struct PdGains {
  double kp_body = 100.0;
  double kp_hand = 20.0;
  // Action-to-reference scale (radians per unit action). The body scale must
  // cover half the widest joint range so limit-center references can reach
  // the whole feasible set; the hand reference tracks the current pose, so a
  // smaller scale still spans the range over time.
  double ks_body = 1.5;
  double ks_hand = 0.5;
  double torque_max_body = 200.0;
  double torque_max_hand = 5.0;
};

/// World construction parameters, loadable from a structured-text file.
struct WorldConfig {
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  int substeps = 4;          // physics substeps per control tick
  double control_hz = 30.0;  // policy rate; physics runs at substeps * control_hz
  double contact_margin = 0.002;
  double contact_stiffness = 3.0e4;  // per-probe cap, N/m
  double contact_damping_ratio = 0.7;
  double friction_hand_object = 0.9;
  double friction_default = 0.5;
  double armature_body = 0.02;  // added rotor inertia per DoF, kg m^2
  double armature_hand = 0.003;
  double max_velocity = 1.0e3;  // divergence threshold, m/s or rad/s
  bool character_table_collision = false;
  bool finger_self_collision = false;
  Vec3 table_half = Vec3(0.30, 0.40, 0.02);
  PdGains gains;
  ObjectSpec object;

  double control_dt() const { return 1.0 / control_hz; }
  double sub_dt() const { return control_dt() / substeps; }

  static WorldConfig load(const std::string& path);
  static WorldConfig from_config(class ConfigFile& cfg);
};

/// One PD actuator: tau = kp * ((theta_ref + ks * a) - theta) - kd * theta_dot
/// with the action clamped to [-1, 1] and the torque to [-tau_max, tau_max].
double pd_torque(double kp, double kd, double ks, double theta_ref, double theta,
                 double theta_dot, double action, double tau_max);

/// Full readout of the world after a control tick.
struct SimState {
  double time = 0.0;
  Pose pose;
  Vec3 root_lin_vel = Vec3::Zero();
  Vec3 root_ang_vel = Vec3::Zero();             // world frame
  std::vector<Vec3> joint_vel;                  // local coords rate; hinge in [0]
  FkResult fk;                                  // world joint frames
  Transform object;
  Vec3 object_lin_vel = Vec3::Zero();
  Vec3 object_ang_vel = Vec3::Zero();
  // Net contact force magnitude per tracked body: one slot per character
  // joint in skeleton order, then object, then table. Ground reactions are
  // attributed to the body touching the ground; the ground has no slot.
  VecX f;
  VecX hand_object_force;            // per hand joint, N (object contacts only)
  Vec3 object_contact_force = Vec3::Zero();    // net world force, last substep
  Vec3 object_contact_impulse = Vec3::Zero();  // integrated over the tick, N s
  double object_table_force = 0.0;             // normal force sum, N
  double object_ground_force = 0.0;

  int object_slot() const { return static_cast<int>(f.size()) - 2; }
  int table_slot() const { return static_cast<int>(f.size()) - 1; }
};

/// Deterministic fixed-step rigid-body world: PD-actuated character
/// (reduced-coordinate dynamics with a diagonal joint-space inertia
/// approximation), one free primitive object, a static table box, and the
/// ground plane z = 0. Single-threaded; run one instance per environment.
class World {
 public:
  World(std::shared_ptr<const SkeletonSpec> skeleton, WorldConfig config);

  /// Places the character, object and table, zeroes velocities. Throws
  /// InitError naming the pair if anything interpenetrates deeper than 5 mm.
  SimState reset(const Pose& pose, const Transform& object_pose, const Transform& table_pose,
                 uint64_t seed);

  /// Advances one control tick (substeps x 1/(control_hz*substeps)).
  /// Actions are clamped to [-1, 1]; the root is never actuated.
  SimState step(const VecX& action_body, const VecX& action_hand);

  /// Replay mode: imposes the given pose/object transform, derives
  /// velocities by finite difference from the previous frame, and reports
  /// contact forces from geometry without integrating dynamics.
  SimState kinematic_frame(const Pose& pose, const Transform& object_pose);

  void set_object_fixed(bool fixed) { object_fixed_ = fixed; }
  bool object_fixed() const { return object_fixed_; }
  /// Welds the root body to the world (detached-hand training).
  void set_root_fixed(bool fixed) { root_fixed_ = fixed; }

  const SimState& state() const { return state_; }
  const SkeletonSpec& skeleton() const { return *skeleton_; }
  const WorldConfig& config() const { return config_; }
  const Transform& table_pose() const { return table_; }

  int body_action_dim() const { return body_action_dim_; }
  int hand_action_dim() const { return hand_action_dim_; }

  /// Limit-center reference angles used by the body PD controller.
  const std::vector<Vec3>& body_reference() const { return body_ref_; }

 private:
  struct DofInfo {
    int joint = -1;
    int axis = 0;          // coords component
    double inertia = 0.0;  // subtree approximation + armature
    double kd = 0.0;
    bool hand = false;
  };

  void build_dof_tables();
  void set_from_pose(const Pose& pose);
  Pose current_pose() const;
  void substep(const VecX& dof_ref, const VecX& dof_action, const std::vector<char>& actuated);
  void compute_contacts(double dt, bool apply);
  void apply_wrench_to_character(int body, const Vec3& point, const Vec3& force);
  double character_inv_mass(int body, const Vec3& point, const Vec3& dir) const;
  Vec3 character_point_velocity(int body, const Vec3& point) const;
  double object_inv_mass(const Vec3& point, const Vec3& dir) const;
  Vec3 object_point_velocity(const Vec3& point) const;
  void check_divergence() const;
  void refresh_fk();
  SimState snapshot() const;

  std::shared_ptr<const SkeletonSpec> skeleton_;
  WorldConfig config_;

  // Generalized state. Ball joints store rotation-vector coordinates.
  Vec3 root_pos_ = Vec3::Zero();
  Quat root_rot_ = Quat::Identity();
  Vec3 root_lin_vel_ = Vec3::Zero();
  Vec3 root_ang_vel_ = Vec3::Zero();
  std::vector<Vec3> coords_, coord_vel_;
  Transform object_T_;
  Vec3 object_lin_vel_ = Vec3::Zero();
  Vec3 object_ang_vel_ = Vec3::Zero();
  Transform table_;
  double time_ = 0.0;
  bool object_fixed_ = false;
  bool root_fixed_ = false;
  bool initialized_ = false;

  // Derived tables.
  std::vector<DofInfo> dofs_;                  // actuated + passive joint dofs
  std::vector<int> joint_dof_offset_;          // into dofs_, -1 for the root
  std::vector<std::vector<int>> chain_;        // joints from root (exclusive) to body
  std::vector<std::vector<ContactProbe>> probes_;
  std::vector<Vec3> object_probes_;
  std::vector<Vec3> body_ref_;                 // limit centers per joint
  double total_mass_ = 0.0;
  Vec3 root_inertia_ = Vec3::Ones();           // about root origin, rest frame
  int body_action_dim_ = 0, hand_action_dim_ = 0;
  std::vector<std::pair<int, int>> finger_pairs_;  // self-collision geom pairs

  // Per-substep scratch (sized once).
  FkResult fk_;
  VecX gen_force_;
  std::vector<Vec3> body_contact_force_;
  VecX hand_object_force_;
  Vec3 object_force_ = Vec3::Zero(), object_torque_ = Vec3::Zero();
  Vec3 object_contact_force_ = Vec3::Zero();
  Vec3 object_contact_impulse_ = Vec3::Zero();
  Vec3 table_force_ = Vec3::Zero();
  double object_table_force_ = 0.0, object_ground_force_ = 0.0;

  SimState state_;
};

}  // namespace dexbody
