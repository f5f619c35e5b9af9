#pragma once

// Minimal neural stack with manual backpropagation: rectified MLPs, Adam,
// constant-variance Gaussian policy heads, a shared-trunk discriminator and
// skill encoder, hypersphere latent sampling, and binary checkpoints.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dexbody/mathcore.hpp"
#include "dexbody/rng.hpp"

namespace dexbody {

class Rng;

// Fully connected network. A rectifier follows every hidden layer; the
// output layer is linear unless `rectified_output` is set, which the
// discriminator/encoder trunk uses to expose rectified shared features.
struct MLP {
  std::vector<int> widths;     // input, hidden..., output
  std::vector<MatX> weights;   // weights[l] maps widths[l] -> widths[l+1]
  std::vector<VecX> biases;
  bool rectified_output = false;

  // He-style random initialization, biases zero.
  static MLP create(const std::vector<int>& widths, Rng& rng,
                    bool rectified_output = false);

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int param_count() const;

  // Throws InvalidArgument when shapes do not chain or a parameter is
  // non-finite.
  void validate() const;
};

// Intermediate values retained by a forward pass for the matching backward.
struct MLPCache {
  std::vector<VecX> act;  // act[0] is the input, act[l+1] the layer-l output
  std::vector<VecX> pre;  // preactivations per layer
};

// Parameter-shaped accumulator for gradients and optimizer moments.
struct MLPGrads {
  std::vector<MatX> weights;
  std::vector<VecX> biases;

  static MLPGrads zeros_like(const MLP& net);
  void add_scaled(const MLPGrads& other, double scale);
  void scale(double s);
  double squared_norm() const;
  bool finite() const;
};

// Evaluates the network. Pass a cache to enable a later backward call.
VecX mlp_forward(const MLP& net, const VecX& input, MLPCache* cache = nullptr);

// Backpropagates dL/doutput through the cached forward pass, accumulating
// parameter gradients into `grads` and returning dL/dinput. The rectifier
// uses subgradient 0 at exactly 0.
VecX mlp_backward(const MLP& net, const MLPCache& cache, const VecX& grad_out,
                  MLPGrads& grads);

// Adam with bias correction. Moments are created on first step.
struct Adam {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t steps = 0;
  MLPGrads m, v;

  void step(MLP& net, const MLPGrads& grads);
};

// Gaussian action head: the network predicts the mean, the standard
// deviation is a fixed constant per dimension.
struct GaussianPolicy {
  MLP net;
  double log_std = 0.0;

  double std_dev() const { return std::exp(log_std); }
};

struct PolicySample {
  VecX action;   // raw sample clamped to [-1, 1], fed to the simulator
  VecX raw;      // unclamped Gaussian draw, used for likelihood ratios
  double logprob = 0.0;
};

// Draws an action; deterministic per rng state.
PolicySample policy_sample(const GaussianPolicy& policy, const VecX& obs, Rng& rng);

// Log-density of a raw (unclamped) action under the policy's Gaussian.
double policy_logprob(const GaussianPolicy& policy, const VecX& mean, const VecX& raw);

// Discriminator and skill encoder sharing a rectified trunk. The heads are
// single linear layers: a scalar realism logit and a latent direction that
// is normalized to the unit sphere.
struct DiscEncoder {
  MLP trunk;       // rectified_output = true
  MLP disc_head;   // trunk out -> 1
  MLP enc_head;    // trunk out -> latent dim
  double kappa = 5.0;

  static DiscEncoder create(int input_dim, const std::vector<int>& trunk_widths,
                            int latent_dim, Rng& rng, double kappa = 5.0);
  void validate() const;
};

// Realism probability via sigmoid of the trunk+head logit, in (0, 1).
double disc_score(const DiscEncoder& net, const VecX& feature_pair);
double disc_logit(const DiscEncoder& net, const VecX& feature_pair);

// Unit-length latent direction predicted by the encoder head.
VecX encoder_mean(const DiscEncoder& net, const VecX& feature_pair);

// Directional log-likelihood kappa * (mu^T z - 1): 0 when z equals the
// predicted direction, -2 kappa when opposite.
double encoder_logprob(const DiscEncoder& net, const VecX& feature_pair, const VecX& z);

// Uniform draw from the unit hypersphere. Throws InvalidArgument for d < 2.
VecX sample_latent(Rng& rng, int d);

// Versioned binary checkpoint: named networks plus identifying hashes.
// Parameters are stored as little-endian 32-bit floats in layer order.
struct CheckpointData {
  uint32_t version = 1;
  std::string stage;
  uint64_t iteration = 0;
  uint64_t skeleton_hash = 0;
  uint64_t config_hash = 0;
  std::vector<std::pair<std::string, MLP>> nets;

  const MLP& net(const std::string& name) const;  // throws SchemaError if absent
};

// Writes to a temporary file in the target directory, then renames, so a
// crash never leaves a partial checkpoint behind.
void save_checkpoint(const CheckpointData& data, const std::string& path);

// Throws IoError when unreadable, SchemaError on a bad magic, version, or
// truncated payload.
CheckpointData load_checkpoint(const std::string& path);

}  // namespace dexbody
