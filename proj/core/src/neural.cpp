#include "dexbody/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dexbody/errors.hpp"

namespace dexbody {

namespace {

bool layer_rectified(const MLP& net, int layer) {
  return layer + 1 < net.layer_count() || net.rectified_output;
}

void append_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}

void append_u32(std::string& out, uint32_t v) { append_bytes(out, &v, 4); }
void append_u64(std::string& out, uint64_t v) { append_bytes(out, &v, 8); }
void append_f32(std::string& out, float v) { append_bytes(out, &v, 4); }

// Cursor over a loaded checkpoint image; every read is bounds-checked.
struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void read(void* p, size_t n) {
    if (pos + n > buf.size()) throw SchemaError("checkpoint: truncated file");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  uint32_t u32() {
    uint32_t v;
    read(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    read(&v, 8);
    return v;
  }
  float f32() {
    float v;
    read(&v, 4);
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    if (n > 1u << 20) throw SchemaError("checkpoint: implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
};

}  // namespace

MLP MLP::create(const std::vector<int>& widths, Rng& rng, bool rectified_output) {
  if (widths.size() < 2) throw InvalidArgument("MLP: need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw InvalidArgument("MLP: widths must be positive");
  MLP net;
  net.widths = widths;
  net.rectified_output = rectified_output;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int rows = widths[l + 1];
    const int cols = widths[l];
    MatX w(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(cols));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = scale * rng.normal();
    net.weights.push_back(std::move(w));
    net.biases.push_back(VecX::Zero(rows));
  }
  return net;
}

int MLP::param_count() const {
  int n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += static_cast<int>(weights[l].size() + biases[l].size());
  return n;
}

void MLP::validate() const {
  if (widths.size() < 2 || weights.size() != widths.size() - 1 ||
      biases.size() != weights.size())
    throw InvalidArgument("MLP: layer bookkeeping out of sync");
  for (size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != widths[l + 1] || weights[l].cols() != widths[l] ||
        biases[l].size() != widths[l + 1])
      throw InvalidArgument("MLP: layer shapes do not chain");
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw InvalidArgument("MLP: non-finite parameters");
  }
}

MLPGrads MLPGrads::zeros_like(const MLP& net) {
  MLPGrads g;
  for (size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.push_back(MatX::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(VecX::Zero(net.biases[l].size()));
  }
  return g;
}

void MLPGrads::add_scaled(const MLPGrads& other, double s) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] += s * other.weights[l];
    biases[l] += s * other.biases[l];
  }
}

void MLPGrads::scale(double s) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= s;
    biases[l] *= s;
  }
}

double MLPGrads::squared_norm() const {
  double n = 0.0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += weights[l].squaredNorm() + biases[l].squaredNorm();
  return n;
}

bool MLPGrads::finite() const {
  for (size_t l = 0; l < weights.size(); ++l)
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  return true;
}

VecX mlp_forward(const MLP& net, const VecX& input, MLPCache* cache) {
  if (input.size() != net.input_dim())
    throw InvalidArgument("mlp_forward: input dimension mismatch");
  if (cache) {
    cache->act.assign(1, input);
    cache->pre.clear();
  }
  VecX x = input;
  for (int l = 0; l < net.layer_count(); ++l) {
    VecX pre = net.weights[static_cast<size_t>(l)] * x + net.biases[static_cast<size_t>(l)];
    x = layer_rectified(net, l) ? pre.cwiseMax(0.0) : pre;
    if (cache) {
      cache->pre.push_back(std::move(pre));
      cache->act.push_back(x);
    }
  }
  return x;
}

VecX mlp_backward(const MLP& net, const MLPCache& cache, const VecX& grad_out,
                  MLPGrads& grads) {
  if (static_cast<int>(cache.pre.size()) != net.layer_count())
    throw InvalidArgument("mlp_backward: cache does not match the network");
  if (grad_out.size() != net.output_dim())
    throw InvalidArgument("mlp_backward: gradient dimension mismatch");
  VecX delta = grad_out;
  for (int l = net.layer_count() - 1; l >= 0; --l) {
    const size_t ls = static_cast<size_t>(l);
    if (layer_rectified(net, l))
      delta = delta.cwiseProduct(
          (cache.pre[ls].array() > 0.0).cast<double>().matrix());
    grads.weights[ls] += delta * cache.act[ls].transpose();
    grads.biases[ls] += delta;
    delta = net.weights[ls].transpose() * delta;
  }
  return delta;
}

void Adam::step(MLP& net, const MLPGrads& grads) {
  if (m.weights.empty()) {
    m = MLPGrads::zeros_like(net);
    v = MLPGrads::zeros_like(net);
  }
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (size_t l = 0; l < net.weights.size(); ++l) {
    m.weights[l] = beta1 * m.weights[l] + (1.0 - beta1) * grads.weights[l];
    v.weights[l] =
        beta2 * v.weights[l] + (1.0 - beta2) * grads.weights[l].cwiseProduct(grads.weights[l]);
    net.weights[l].array() -= lr * (m.weights[l].array() / c1) /
                              ((v.weights[l].array() / c2).sqrt() + eps);
    m.biases[l] = beta1 * m.biases[l] + (1.0 - beta1) * grads.biases[l];
    v.biases[l] =
        beta2 * v.biases[l] + (1.0 - beta2) * grads.biases[l].cwiseProduct(grads.biases[l]);
    net.biases[l].array() -= lr * (m.biases[l].array() / c1) /
                             ((v.biases[l].array() / c2).sqrt() + eps);
  }
}

PolicySample policy_sample(const GaussianPolicy& policy, const VecX& obs, Rng& rng) {
  const VecX mean = mlp_forward(policy.net, obs);
  const double sd = policy.std_dev();
  PolicySample s;
  s.raw = VecX(mean.size());
  for (int i = 0; i < mean.size(); ++i) s.raw[i] = mean[i] + sd * rng.normal();
  s.action = s.raw.cwiseMax(-1.0).cwiseMin(1.0);
  s.logprob = policy_logprob(policy, mean, s.raw);
  return s;
}

double policy_logprob(const GaussianPolicy& policy, const VecX& mean, const VecX& raw) {
  if (mean.size() != raw.size())
    throw InvalidArgument("policy_logprob: dimension mismatch");
  const double sd = policy.std_dev();
  const double n = static_cast<double>(mean.size());
  const double quad = (raw - mean).squaredNorm() / (2.0 * sd * sd);
  return -quad - n * policy.log_std - 0.5 * n * std::log(2.0 * M_PI);
}

DiscEncoder DiscEncoder::create(int input_dim, const std::vector<int>& trunk_widths,
                                int latent_dim, Rng& rng, double kappa) {
  if (trunk_widths.empty()) throw InvalidArgument("DiscEncoder: trunk widths empty");
  if (latent_dim < 2) throw InvalidArgument("DiscEncoder: latent dimension must be >= 2");
  std::vector<int> trunk = {input_dim};
  trunk.insert(trunk.end(), trunk_widths.begin(), trunk_widths.end());
  DiscEncoder net;
  net.trunk = MLP::create(trunk, rng, /*rectified_output=*/true);
  net.disc_head = MLP::create({trunk.back(), 1}, rng);
  net.enc_head = MLP::create({trunk.back(), latent_dim}, rng);
  net.kappa = kappa;
  return net;
}

void DiscEncoder::validate() const {
  trunk.validate();
  disc_head.validate();
  enc_head.validate();
  if (!trunk.rectified_output)
    throw InvalidArgument("DiscEncoder: trunk must expose rectified features");
  if (disc_head.input_dim() != trunk.output_dim() ||
      enc_head.input_dim() != trunk.output_dim() || disc_head.output_dim() != 1)
    throw InvalidArgument("DiscEncoder: head shapes do not match the trunk");
  if (!(kappa > 0.0)) throw InvalidArgument("DiscEncoder: kappa must be positive");
}

double disc_logit(const DiscEncoder& net, const VecX& feature_pair) {
  return mlp_forward(net.disc_head, mlp_forward(net.trunk, feature_pair))[0];
}

double disc_score(const DiscEncoder& net, const VecX& feature_pair) {
  return 1.0 / (1.0 + std::exp(-disc_logit(net, feature_pair)));
}

VecX encoder_mean(const DiscEncoder& net, const VecX& feature_pair) {
  VecX u = mlp_forward(net.enc_head, mlp_forward(net.trunk, feature_pair));
  const double n = u.norm();
  if (n < 1e-12) {
    // Degenerate (for example all-zero) head output: pick a fixed direction
    // rather than dividing by zero.
    u.setZero();
    u[0] = 1.0;
    return u;
  }
  return u / n;
}

double encoder_logprob(const DiscEncoder& net, const VecX& feature_pair, const VecX& z) {
  if (z.size() != net.enc_head.output_dim())
    throw InvalidArgument("encoder_logprob: latent dimension mismatch");
  return net.kappa * (encoder_mean(net, feature_pair).dot(z) - 1.0);
}

VecX sample_latent(Rng& rng, int d) {
  if (d < 2) throw InvalidArgument("sample_latent: dimension must be >= 2");
  VecX z(d);
  double n = 0.0;
  do {
    for (int i = 0; i < d; ++i) z[i] = rng.normal();
    n = z.norm();
  } while (n < 1e-12);
  return z / n;
}

const MLP& CheckpointData::net(const std::string& name) const {
  for (const auto& [net_name, net] : nets)
    if (net_name == name) return net;
  throw SchemaError("checkpoint: no network named '" + name + "'");
}

void save_checkpoint(const CheckpointData& data, const std::string& path) {
  std::string buf;
  append_bytes(buf, "DXBC", 4);
  append_u32(buf, data.version);
  append_u64(buf, data.iteration);
  append_u64(buf, data.skeleton_hash);
  append_u64(buf, data.config_hash);
  append_u32(buf, static_cast<uint32_t>(data.stage.size()));
  append_bytes(buf, data.stage.data(), data.stage.size());
  append_u32(buf, static_cast<uint32_t>(data.nets.size()));
  for (const auto& [name, net] : data.nets) {
    net.validate();
    append_u32(buf, static_cast<uint32_t>(name.size()));
    append_bytes(buf, name.data(), name.size());
    buf.push_back(net.rectified_output ? 1 : 0);
    append_u32(buf, static_cast<uint32_t>(net.widths.size()));
    for (int w : net.widths) append_u32(buf, static_cast<uint32_t>(w));
    for (size_t l = 0; l < net.weights.size(); ++l) {
      const MatX& w = net.weights[l];
      for (int r = 0; r < w.rows(); ++r)
        for (int c = 0; c < w.cols(); ++c) append_f32(buf, static_cast<float>(w(r, c)));
      for (int i = 0; i < net.biases[l].size(); ++i)
        append_f32(buf, static_cast<float>(net.biases[l][i]));
    }
  }

  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open '" + tmp.string() + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("checkpoint: short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw IoError("checkpoint: cannot rename into '" + path + "': " + ec.message());
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r{buf};
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, "DXBC", 4) != 0)
    throw SchemaError("checkpoint: bad magic in '" + path + "'");
  CheckpointData data;
  data.version = r.u32();
  if (data.version != 1)
    throw SchemaError("checkpoint: unsupported version " + std::to_string(data.version));
  data.iteration = r.u64();
  data.skeleton_hash = r.u64();
  data.config_hash = r.u64();
  data.stage = r.str();
  const uint32_t net_count = r.u32();
  if (net_count > 64) throw SchemaError("checkpoint: implausible network count");
  for (uint32_t n = 0; n < net_count; ++n) {
    std::string name = r.str();
    MLP net;
    uint8_t rectified;
    r.read(&rectified, 1);
    net.rectified_output = rectified != 0;
    const uint32_t width_count = r.u32();
    if (width_count < 2 || width_count > 64)
      throw SchemaError("checkpoint: implausible layer count");
    for (uint32_t i = 0; i < width_count; ++i) {
      const uint32_t w = r.u32();
      if (w == 0 || w > 1u << 20) throw SchemaError("checkpoint: implausible width");
      net.widths.push_back(static_cast<int>(w));
    }
    for (size_t l = 0; l + 1 < net.widths.size(); ++l) {
      MatX w(net.widths[l + 1], net.widths[l]);
      for (int row = 0; row < w.rows(); ++row)
        for (int col = 0; col < w.cols(); ++col) w(row, col) = static_cast<double>(r.f32());
      VecX b(net.widths[l + 1]);
      for (int i = 0; i < b.size(); ++i) b[i] = static_cast<double>(r.f32());
      net.weights.push_back(std::move(w));
      net.biases.push_back(std::move(b));
    }
    net.validate();
    data.nets.emplace_back(std::move(name), std::move(net));
  }
  if (r.pos != buf.size()) throw SchemaError("checkpoint: trailing bytes in '" + path + "'");
  return data;
}

}  // namespace dexbody
