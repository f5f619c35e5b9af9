#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>

namespace dexbody::test {

const std::string& assets_dir() {
  static const std::string dir = DEXBODY_ASSETS_DIR;
  return dir;
}

std::shared_ptr<const SkeletonSpec> desk_skeleton() {
  static auto spec = std::make_shared<const SkeletonSpec>(
      SkeletonSpec::load(assets_dir() + "/desk_humanoid.skel"));
  return spec;
}

WorldConfig desk_world_config() {
  static const WorldConfig cfg = WorldConfig::load(assets_dir() + "/desk_world.cfg");
  return cfg;
}

Transform desk_table() {
  Transform t;
  t.t = Vec3(0.45, 0.0, 0.74);
  return t;
}

double table_top_z(const WorldConfig& cfg, const Transform& table) {
  return table.t[2] + cfg.table_half[2];
}

Transform object_on_table(const WorldConfig& cfg, double x, double y, double gap) {
  Transform o;
  o.t = Vec3(x, y, table_top_z(cfg, desk_table()) + cfg.object.rest_clearance() + gap);
  return o;
}

VecX zeros(int n) { return VecX::Zero(n); }

std::string scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "dexbody_tests" / name;
  fs::create_directories(base);
  return base.string();
}

double gradient_check(MLP& net, const MLPGrads& grads,
                      const std::function<double(const MLP&)>& loss, double h) {
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double hi = loss(net);
    param = saved - h;
    const double lo = loss(net);
    param = saved;
    const double numeric = (hi - lo) / (2.0 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  };
  for (size_t l = 0; l < net.weights.size(); ++l) {
    for (int r = 0; r < net.weights[l].rows(); ++r)
      for (int c = 0; c < net.weights[l].cols(); ++c)
        probe(net.weights[l](r, c), grads.weights[l](r, c));
    for (int i = 0; i < net.biases[l].size(); ++i)
      probe(net.biases[l][i], grads.biases[l][i]);
  }
  return worst;
}

}  // namespace dexbody::test
