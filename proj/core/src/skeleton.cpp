#include "dexbody/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "dexbody/config.hpp"
#include "dexbody/errors.hpp"

namespace dexbody {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 words_to_vec3(const std::vector<std::string>& w, size_t from,
                   const std::string& what) {
  if (w.size() < from + 3) throw SchemaError(what + ": expected 3 numbers");
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    try {
      size_t used = 0;
      v[k] = std::stod(w[from + static_cast<size_t>(k)], &used);
      if (used != w[from + static_cast<size_t>(k)].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw SchemaError(what + ": bad number '" + w[from + static_cast<size_t>(k)] + "'");
    }
  }
  return v;
}

double word_to_num(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw SchemaError(what + ": bad number '" + s + "'");
  }
}

Vec3 get_vec3(ConfigSection& sec, const std::string& key) {
  const std::vector<double> v = sec.get_nums(key);
  if (v.size() != 3)
    throw SchemaError(key + ": expected 3 numbers, got " + std::to_string(v.size()));
  return Vec3(v[0], v[1], v[2]);
}

Vec3 get_vec3(ConfigSection& sec, const std::string& key, const Vec3& fallback) {
  if (!sec.has(key)) return fallback;
  return get_vec3(sec, key);
}

GeomDef parse_geom(ConfigSection& sec, const std::string& joint_name) {
  GeomDef g;
  const std::string ctx = "joint '" + joint_name + "' geom";
  std::vector<std::string> w = sec.get_words("geom", {"none"});
  if (w.empty()) throw SchemaError(ctx + ": empty");
  const std::string& kind = w[0];
  if (kind == "none") {
    g.type = GeomType::kNone;
  } else if (kind == "capsule") {
    if (w.size() != 3) throw SchemaError(ctx + ": capsule needs radius and length");
    g.type = GeomType::kCapsule;
    g.params[0] = word_to_num(w[1], ctx);
    g.params[1] = word_to_num(w[2], ctx);
    if (g.params[0] <= 0.0 || g.params[1] < 0.0)
      throw SchemaError(ctx + ": capsule radius must be > 0 and length >= 0");
  } else if (kind == "box") {
    g.type = GeomType::kBox;
    g.params = words_to_vec3(w, 1, ctx);
    if ((g.params.array() <= 0.0).any())
      throw SchemaError(ctx + ": box half extents must be > 0");
  } else if (kind == "sphere") {
    if (w.size() != 2) throw SchemaError(ctx + ": sphere needs a radius");
    g.type = GeomType::kSphere;
    g.params[0] = word_to_num(w[1], ctx);
    if (g.params[0] <= 0.0) throw SchemaError(ctx + ": sphere radius must be > 0");
  } else {
    throw SchemaError(ctx + ": unknown kind '" + kind + "'");
  }
  g.offset = get_vec3(sec, "geom_offset", Vec3::Zero());
  g.axis = get_vec3(sec, "geom_axis", Vec3::UnitZ());
  if (g.axis.norm() < 1e-12) throw SchemaError(ctx + ": zero axis");
  g.axis.normalize();
  return g;
}

}  // namespace

double GeomDef::volume() const {
  switch (type) {
    case GeomType::kNone:
      return 0.0;
    case GeomType::kCapsule: {
      const double r = params[0], l = params[1];
      return kPi * r * r * l + (4.0 / 3.0) * kPi * r * r * r;
    }
    case GeomType::kBox:
      return 8.0 * params[0] * params[1] * params[2];
    case GeomType::kSphere: {
      const double r = params[0];
      return (4.0 / 3.0) * kPi * r * r * r;
    }
  }
  return 0.0;
}

SkeletonSpec SkeletonSpec::load(const std::string& path) {
  const std::string text = read_text_file(path);
  ConfigFile cfg = ConfigFile::parse_string(text, path);
  return from_config(cfg, text);
}

SkeletonSpec SkeletonSpec::from_config(ConfigFile& cfg, const std::string& text_for_hash) {
  SkeletonSpec spec;
  ConfigSection& top = cfg.top();
  const long schema = top.get_int("schema");
  if (schema != 1) throw SchemaError("unsupported schema " + std::to_string(schema));
  const std::string type = top.get_str("type");
  if (type != "skeleton") throw SchemaError("expected type = skeleton, got '" + type + "'");
  spec.name_ = top.get_str("name");
  top.require_all_consumed();

  std::unordered_map<std::string, int> index;
  for (ConfigSection* sec : cfg.named("joint")) {
    JointDef j;
    j.name = sec->get_str("name");
    if (j.name.empty()) throw SchemaError("joint with empty name");
    if (index.count(j.name)) throw SchemaError("duplicate joint '" + j.name + "'");
    const std::string parent = sec->get_str("parent");
    if (parent == "none") {
      j.parent = -1;
    } else if (parent == j.name) {
      throw SchemaError("joint '" + j.name + "' is its own parent (cycle)");
    } else {
      auto it = index.find(parent);
      if (it == index.end())
        throw SchemaError("joint '" + j.name + "' has unknown parent '" + parent +
                          "' (parents must be declared first)");
      j.parent = it->second;
    }
    j.offset = get_vec3(*sec, "offset");
    const std::string dof = sec->get_str("dof");
    if (dof == "free") {
      j.dof = DofType::kFree;
    } else if (dof == "ball") {
      j.dof = DofType::kBall;
    } else if (dof == "hinge") {
      j.dof = DofType::kHinge;
    } else {
      throw SchemaError("joint '" + j.name + "': unknown dof '" + dof + "'");
    }
    j.axis = get_vec3(*sec, "axis", Vec3::UnitY());
    if (j.dof == DofType::kHinge && j.axis.norm() < 1e-12)
      throw SchemaError("joint '" + j.name + "': zero hinge axis");
    j.axis.normalize();
    j.lower = get_vec3(*sec, "lower", Vec3::Constant(-kPi));
    j.upper = get_vec3(*sec, "upper", Vec3::Constant(kPi));
    for (int k = 0; k < 3; ++k) {
      if (j.lower[k] > j.upper[k])
        throw SchemaError("joint '" + j.name + "': lower limit above upper on axis " +
                          std::to_string(k));
    }
    j.geom = parse_geom(*sec, j.name);
    j.density = sec->get_num("density", 1000.0);
    if (j.density <= 0.0) throw SchemaError("joint '" + j.name + "': density must be > 0");
    j.mass = j.geom.volume() * j.density;
    sec->require_all_consumed();
    index.emplace(j.name, static_cast<int>(spec.joints_.size()));
    spec.joints_.push_back(std::move(j));
  }
  if (spec.joints_.empty()) throw SchemaError("skeleton has no joints");
  int roots = 0;
  for (const JointDef& j : spec.joints_) roots += (j.parent < 0) ? 1 : 0;
  if (roots != 1) throw SchemaError("skeleton must have exactly one root joint");
  if (spec.joints_[0].parent != -1) throw SchemaError("root joint must be declared first");
  if (spec.joints_[0].dof != DofType::kFree) throw SchemaError("root joint must have dof = free");
  for (size_t i = 1; i < spec.joints_.size(); ++i) {
    if (spec.joints_[i].dof == DofType::kFree)
      throw SchemaError("joint '" + spec.joints_[i].name + "': only the root may be free");
  }

  ConfigSection* subs_ptr = cfg.unique("subsets");
  if (subs_ptr == nullptr) throw SchemaError("missing [subsets] section");
  ConfigSection& subs = *subs_ptr;
  auto resolve_list = [&](const char* key) {
    std::vector<int> out;
    for (const std::string& n : subs.get_words(key)) {
      auto it = index.find(n);
      if (it == index.end()) throw SchemaError(std::string(key) + ": unknown joint '" + n + "'");
      out.push_back(it->second);
    }
    return out;
  };
  spec.body_joints_ = resolve_list("body");
  spec.hand_joints_ = resolve_list("hand");
  spec.fingertips_ = resolve_list("fingertips");
  spec.key_joints_ = resolve_list("key");
  const std::string wrist_name = subs.get_str("wrist");
  auto wit = index.find(wrist_name);
  if (wit == index.end()) throw SchemaError("wrist: unknown joint '" + wrist_name + "'");
  spec.wrist_ = wit->second;
  subs.require_all_consumed();
  cfg.require_all_consumed();

  spec.finalize(text_for_hash);
  spec.validate();
  return spec;
}

void SkeletonSpec::finalize(const std::string& text_for_hash) {
  const size_t n = joints_.size();
  children_.assign(n, {});
  for (size_t i = 1; i < n; ++i)
    children_[static_cast<size_t>(joints_[i].parent)].push_back(static_cast<int>(i));
  subtree_.assign(n, {});
  // Children have larger indices than parents, so one reverse sweep suffices.
  for (size_t i = n; i-- > 0;) {
    std::vector<int> acc{static_cast<int>(i)};
    for (int c : children_[i])
      for (int d : subtree_[static_cast<size_t>(c)]) acc.push_back(d);
    std::sort(acc.begin(), acc.end());
    subtree_[i] = std::move(acc);
  }
  is_hand_.assign(n, false);
  for (int i : hand_joints_) is_hand_[static_cast<size_t>(i)] = true;
  total_mass_ = 0.0;
  for (const JointDef& j : joints_) total_mass_ += j.mass;
  source_hash_ = fnv1a64(text_for_hash);
}

void SkeletonSpec::validate() const {
  if (total_mass_ <= 0.0) throw SchemaError("skeleton has zero total mass");
  std::unordered_set<int> in_wrist(subtree(wrist_).begin(), subtree(wrist_).end());
  for (int i : hand_joints_) {
    if (!in_wrist.count(i))
      throw SchemaError("hand joint '" + joints_[static_cast<size_t>(i)].name +
                        "' is not in the wrist subtree");
  }
  for (int i : fingertips_) {
    if (!is_hand_[static_cast<size_t>(i)])
      throw SchemaError("fingertip '" + joints_[static_cast<size_t>(i)].name +
                        "' is not a hand joint");
  }
  for (int i : body_joints_) {
    if (i == 0) throw SchemaError("body subset must not contain the root");
    if (is_hand_[static_cast<size_t>(i)])
      throw SchemaError("joint '" + joints_[static_cast<size_t>(i)].name +
                        "' listed in both body and hand subsets");
  }
  // A body-only skeleton (empty hand subset) is a valid test fixture.
  if (!hand_joints_.empty() && hand_joints_[0] != wrist_)
    throw SchemaError("hand subset must start with the wrist joint");
}

int SkeletonSpec::index_of(const std::string& name) const {
  for (size_t i = 0; i < joints_.size(); ++i)
    if (joints_[i].name == name) return static_cast<int>(i);
  return -1;
}

SkeletonSpec SkeletonSpec::extract_hand_subtree() const {
  SkeletonSpec out;
  out.name_ = name_ + ".hand";
  JointDef anchor;
  anchor.name = "anchor";
  anchor.parent = -1;
  anchor.dof = DofType::kFree;
  anchor.geom.type = GeomType::kNone;
  anchor.mass = 0.0;
  out.joints_.push_back(anchor);

  std::unordered_map<int, int> remap;  // old index -> new index
  for (int old : subtree(wrist_)) {
    JointDef j = joints_[static_cast<size_t>(old)];
    if (old == wrist_) {
      j.parent = 0;
      j.offset = Vec3::Zero();
    } else {
      j.parent = remap.at(j.parent);
    }
    remap.emplace(old, static_cast<int>(out.joints_.size()));
    out.joints_.push_back(std::move(j));
  }
  for (int i : hand_joints_) out.hand_joints_.push_back(remap.at(i));
  for (int i : fingertips_) out.fingertips_.push_back(remap.at(i));
  out.wrist_ = remap.at(wrist_);
  out.finalize("");
  out.source_hash_ = source_hash_;  // artifacts must pair with the full model
  return out;
}

Pose SkeletonSpec::rest_pose() const {
  Pose p = Pose::neutral(joints_.size());
  p.root_pos = joints_[0].offset;
  return p;
}

FkResult SkeletonSpec::forward_kinematics(const Pose& pose) const {
  const size_t n = joints_.size();
  if (pose.joint_rot.size() != n)
    throw InvalidArgument("pose has " + std::to_string(pose.joint_rot.size()) +
                          " joint rotations, skeleton has " + std::to_string(n));
  FkResult fk;
  fk.pos.resize(n);
  fk.rot.resize(n);
  fk.pos[0] = pose.root_pos;
  fk.rot[0] = canonical(pose.root_rot);
  for (size_t i = 1; i < n; ++i) {
    const JointDef& j = joints_[i];
    const size_t p = static_cast<size_t>(j.parent);
    fk.pos[i] = fk.pos[p] + fk.rot[p] * j.offset;
    fk.rot[i] = canonical(fk.rot[p] * pose.joint_rot[i]);
  }
  return fk;
}

Vec3 SkeletonSpec::joint_coords(int i, const Quat& q) const {
  const JointDef& j = joints_[static_cast<size_t>(i)];
  if (j.dof == DofType::kHinge) {
    const Quat c = canonical(q);
    const double angle = 2.0 * std::atan2(c.vec().dot(j.axis), c.w());
    return Vec3(angle, 0.0, 0.0);
  }
  return quat_log(q);
}

Quat SkeletonSpec::joint_rotation(int i, const Vec3& coords) const {
  const JointDef& j = joints_[static_cast<size_t>(i)];
  if (j.dof == DofType::kHinge) return Quat(Eigen::AngleAxisd(coords[0], j.axis));
  return quat_exp(coords);
}

Pose SkeletonSpec::clamp_to_limits(const Pose& pose) const {
  Pose out = pose;
  for (size_t i = 1; i < joints_.size(); ++i) {
    const JointDef& j = joints_[i];
    Vec3 c = joint_coords(static_cast<int>(i), pose.joint_rot[i]);
    const int dofs = (j.dof == DofType::kHinge) ? 1 : 3;
    bool changed = false;
    for (int k = 0; k < dofs; ++k) {
      const double clamped = std::clamp(c[k], j.lower[k], j.upper[k]);
      changed |= clamped != c[k];
      c[k] = clamped;
    }
    if (changed) out.joint_rot[i] = joint_rotation(static_cast<int>(i), c);
    out.joint_rot[i] = canonical(out.joint_rot[i]);
  }
  out.root_rot = canonical(out.root_rot);
  return out;
}

bool SkeletonSpec::within_limits(const Pose& pose, double tol) const {
  for (size_t i = 1; i < joints_.size(); ++i) {
    const JointDef& j = joints_[i];
    const Vec3 c = joint_coords(static_cast<int>(i), pose.joint_rot[i]);
    const int dofs = (j.dof == DofType::kHinge) ? 1 : 3;
    for (int k = 0; k < dofs; ++k)
      if (c[k] < j.lower[k] - tol || c[k] > j.upper[k] + tol) return false;
  }
  return true;
}

}  // namespace dexbody
