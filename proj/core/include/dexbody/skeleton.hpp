#pragma once

#include <string>
#include <vector>

#include "dexbody/mathcore.hpp"

namespace dexbody {

class ConfigFile;

enum class DofType { kFree, kBall, kHinge };
enum class GeomType { kNone, kCapsule, kBox, kSphere };

/// Collision/mass geometry attached to a joint's body, in the joint frame.
struct GeomDef {
  GeomType type = GeomType::kNone;
  // capsule: params[0]=radius, params[1]=cylinder length (along axis)
  // box:     params = half extents
  // sphere:  params[0]=radius
  Vec3 params = Vec3::Zero();
  Vec3 offset = Vec3::Zero();  // geometry center in joint frame
  Vec3 axis = Vec3::UnitZ();   // capsule axis in joint frame
  double volume() const;
};

struct JointDef {
  std::string name;
  int parent = -1;  // -1 for the root
  Vec3 offset = Vec3::Zero();  // position in parent joint frame
  DofType dof = DofType::kBall;
  Vec3 axis = Vec3::UnitY();  // hinge axis in joint frame
  // Per-axis rotation limits in radians. Hinges use component 0.
  Vec3 lower = Vec3::Constant(-3.14);
  Vec3 upper = Vec3::Constant(3.14);
  GeomDef geom;
  double density = 1000.0;  // kg/m^3
  double mass = 0.0;        // derived: geom.volume() * density
};

/// Character pose: root transform plus one local rotation per joint
/// (the root's slot is identity and ignored).
struct Pose {
  Vec3 root_pos = Vec3::Zero();
  Quat root_rot = Quat::Identity();
  std::vector<Quat> joint_rot;

  static Pose neutral(size_t joint_count) {
    Pose p;
    p.joint_rot.assign(joint_count, Quat::Identity());
    return p;
  }
};

struct FkResult {
  std::vector<Vec3> pos;  // world joint positions
  std::vector<Quat> rot;  // world joint orientations
};

/// Immutable articulated-character description loaded from a skeleton file.
class SkeletonSpec {
 public:
  static SkeletonSpec load(const std::string& path);
  static SkeletonSpec from_config(ConfigFile& cfg, const std::string& text_for_hash);

  /// Anchored hand model: the wrist subtree reparented under a massless
  /// fixed-base joint, used for detached hand-prior training. Keeps the
  /// source file hash so artifacts trained on it pair with the full model.
  SkeletonSpec extract_hand_subtree() const;

  const std::vector<JointDef>& joints() const { return joints_; }
  const JointDef& joint(int i) const { return joints_[static_cast<size_t>(i)]; }
  int joint_count() const { return static_cast<int>(joints_.size()); }
  int index_of(const std::string& name) const;  // -1 if absent

  int root() const { return 0; }
  int wrist() const { return wrist_; }
  const std::vector<int>& body_joints() const { return body_joints_; }  // excludes root
  const std::vector<int>& hand_joints() const { return hand_joints_; }  // wrist first
  const std::vector<int>& fingertips() const { return fingertips_; }
  const std::vector<int>& key_joints() const { return key_joints_; }
  const std::vector<int>& children(int i) const { return children_[static_cast<size_t>(i)]; }
  /// Joints in the subtree rooted at i, including i, in file order.
  const std::vector<int>& subtree(int i) const { return subtree_[static_cast<size_t>(i)]; }
  bool is_hand_joint(int i) const { return is_hand_[static_cast<size_t>(i)]; }

  double total_mass() const { return total_mass_; }
  uint64_t source_hash() const { return source_hash_; }
  const std::string& name() const { return name_; }

  /// Identity joint rotations with the root at its file offset (the
  /// authored rest placement). FK itself places the root from the pose.
  Pose rest_pose() const;

  FkResult forward_kinematics(const Pose& pose) const;
  Pose clamp_to_limits(const Pose& pose) const;
  bool within_limits(const Pose& pose, double tol = 1e-9) const;

  /// Hinge rotations project onto the joint axis; ball rotations use the
  /// rotation-vector (exponential) coordinates the limits are stated in.
  Vec3 joint_coords(int i, const Quat& q) const;
  Quat joint_rotation(int i, const Vec3& coords) const;

 private:
  void finalize(const std::string& text_for_hash);
  void validate() const;

  std::string name_;
  std::vector<JointDef> joints_;
  std::vector<int> body_joints_, hand_joints_, fingertips_, key_joints_;
  std::vector<std::vector<int>> children_, subtree_;
  std::vector<bool> is_hand_;
  int wrist_ = -1;
  double total_mass_ = 0.0;
  uint64_t source_hash_ = 0;
};

}  // namespace dexbody
