#pragma once

// On-policy actor-critic training machinery: advantage estimation, clipped
// policy-gradient updates, and the adversarial discriminator and skill
// encoder updates that produce the imitation reward.

#include <cstdint>
#include <vector>

#include "dexbody/mathcore.hpp"
#include "dexbody/neural.hpp"
#include "dexbody/rng.hpp"

namespace dexbody {

// Optimization hyperparameters shared by all training stages.
struct MDPConfig {
  double gamma = 0.99;
  double lambda = 0.95;   // advantage estimation decay
  int horizon = 240;      // control steps per episode (8 s at 30 Hz)
  int envs = 64;
  int steps_per_update = 32;
  double learning_rate = 2e-5;
  double clip_ratio = 0.2;
  int epochs = 4;
  int minibatches = 4;

  void validate() const;  // throws InvalidArgument outside the sane ranges
};

// One flattened on-policy batch. Columns are aligned by index; `dones`
// marks transitions that ended an episode, which stops value bootstrapping
// across the boundary. `pairs` carries the concatenated feature tuples
// (phi(s), phi(s')) consumed by the discriminator and encoder; `latents`
// carries the skill vector active at each step. Both may be empty for
// stages that do not use them.
struct RolloutBatch {
  std::vector<VecX> obs;
  std::vector<VecX> raw_actions;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> logprobs;
  std::vector<uint8_t> dones;
  std::vector<VecX> pairs;
  std::vector<VecX> latents;

  int size() const { return static_cast<int>(obs.size()); }
  void clear();
  void validate() const;  // throws InvalidArgument when columns disagree
};

// Generalized advantage estimation over one environment stream.
// `bootstrap_value` is the critic's estimate for the state after the last
// step; it is ignored when the last step is marked done.
struct GaeResult {
  VecX advantages;  // raw, not normalized
  VecX returns;     // advantages + values
};
GaeResult gae_advantages(const std::vector<double>& rewards,
                         const std::vector<double>& values,
                         const std::vector<uint8_t>& dones, double bootstrap_value,
                         double gamma, double lambda);

// Shifts and scales to mean 0, standard deviation 1. A near-constant input
// only gets the shift so the output stays finite.
VecX normalize_advantages(const VecX& advantages);

struct PPOStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;             // mean(old logprob - new logprob) after the update
  double clip_fraction = 0.0;  // fraction of samples with the ratio clipped
};

// Clipped-surrogate update over `epochs` passes of `minibatches` shuffled
// slices. Advantages are normalized batch-wide before use, except that a
// single-sample batch keeps its raw advantage (normalization would erase
// it). A non-finite loss or gradient restores both networks to their entry
// state and throws UpdateAborted. A zero clip ratio degenerates to a
// zero-width trust region, so the policy term becomes a no-op.
PPOStats ppo_update(GaussianPolicy& policy, Adam& policy_opt, MLP& critic,
                    Adam& critic_opt, const RolloutBatch& batch, const VecX& advantages,
                    const VecX& returns, const MDPConfig& cfg, Rng& rng);

// Optimizer state for the three parameter groups of a DiscEncoder.
struct DiscEncoderOpt {
  Adam trunk;
  Adam disc;
  Adam enc;

  explicit DiscEncoderOpt(double lr = 2e-5);
};

struct DiscStats {
  double loss = 0.0;          // mean binary cross-entropy
  double grad_penalty = 0.0;  // mean squared input-gradient norm on reals
  double accuracy = 0.0;      // real scored > 1/2, fake scored < 1/2
  double mean_real_score = 0.0;
  double mean_fake_score = 0.0;
};

// One discriminator step: binary cross-entropy with an input-gradient
// penalty of the given weight on the real pool. Throws InvalidArgument
// when either pool is empty.
DiscStats disc_update(DiscEncoder& net, DiscEncoderOpt& opt,
                      const std::vector<VecX>& real_pairs,
                      const std::vector<VecX>& fake_pairs,
                      double grad_penalty_weight = 5.0);

struct EncoderStats {
  double loss = 0.0;       // mean negative directional log-likelihood
  double alignment = 0.0;  // mean mu . z
};

// One encoder step maximizing kappa (mu(pair) . z - 1) over the batch.
EncoderStats encoder_update(DiscEncoder& net, DiscEncoderOpt& opt,
                            const std::vector<VecX>& pairs,
                            const std::vector<VecX>& latents);

}  // namespace dexbody
