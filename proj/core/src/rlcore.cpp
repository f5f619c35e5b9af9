#include "dexbody/rlcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dexbody/errors.hpp"

namespace dexbody {

namespace {

bool finite(double v) { return std::isfinite(v); }

bool params_finite(const MLP& net) {
  for (size_t l = 0; l < net.weights.size(); ++l)
    if (!net.weights[l].allFinite() || !net.biases[l].allFinite()) return false;
  return true;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
}

// Backward through head and trunk for one sample, accumulating parameter
// gradients and returning the gradient with respect to the trunk input.
VecX backprop_pair(const MLP& trunk, const MLPCache& trunk_cache, MLPGrads& trunk_grads,
                   const MLP& head, const MLPCache& head_cache, MLPGrads& head_grads,
                   const VecX& grad_head_out) {
  const VecX dfeat = mlp_backward(head, head_cache, grad_head_out, head_grads);
  MLPGrads* dummy = &trunk_grads;
  return mlp_backward(trunk, trunk_cache, dfeat, *dummy);
}

// Gradient of the discriminator logit with respect to its input.
VecX input_gradient(const DiscEncoder& net, const VecX& x) {
  MLPCache tc, hc;
  mlp_forward(net.disc_head, mlp_forward(net.trunk, x, &tc), &hc);
  MLPGrads tg = MLPGrads::zeros_like(net.trunk);
  MLPGrads hg = MLPGrads::zeros_like(net.disc_head);
  return backprop_pair(net.trunk, tc, tg, net.disc_head, hc, hg, VecX::Ones(1));
}

}  // namespace

void MDPConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw InvalidArgument("MDPConfig: gamma must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw InvalidArgument("MDPConfig: lambda must lie in [0, 1]");
  if (horizon < 1 || envs < 1 || steps_per_update < 1)
    throw InvalidArgument("MDPConfig: horizon, envs, and steps must be at least 1");
  if (!(learning_rate > 0.0) || !finite(learning_rate))
    throw InvalidArgument("MDPConfig: learning rate must be positive and finite");
  if (!(clip_ratio >= 0.0) || !finite(clip_ratio))
    throw InvalidArgument("MDPConfig: clip ratio must be non-negative");
  if (epochs < 1 || minibatches < 1)
    throw InvalidArgument("MDPConfig: epochs and minibatches must be at least 1");
}

void RolloutBatch::clear() {
  obs.clear();
  raw_actions.clear();
  rewards.clear();
  values.clear();
  logprobs.clear();
  dones.clear();
  pairs.clear();
  latents.clear();
}

void RolloutBatch::validate() const {
  const size_t n = obs.size();
  if (raw_actions.size() != n || rewards.size() != n || values.size() != n ||
      logprobs.size() != n || dones.size() != n)
    throw InvalidArgument("RolloutBatch: column lengths disagree");
  if (!pairs.empty() && pairs.size() != n)
    throw InvalidArgument("RolloutBatch: feature-pair column length disagrees");
  if (!latents.empty() && latents.size() != n)
    throw InvalidArgument("RolloutBatch: latent column length disagrees");
}

GaeResult gae_advantages(const std::vector<double>& rewards,
                         const std::vector<double>& values,
                         const std::vector<uint8_t>& dones, double bootstrap_value,
                         double gamma, double lambda) {
  const size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw InvalidArgument("gae_advantages: aligned arrays required");
  GaeResult out;
  out.advantages = VecX::Zero(static_cast<int>(n));
  out.returns = VecX::Zero(static_cast<int>(n));
  double carry = 0.0;
  for (int t = static_cast<int>(n) - 1; t >= 0; --t) {
    const size_t ts = static_cast<size_t>(t);
    const double alive = dones[ts] ? 0.0 : 1.0;
    const double next_value =
        ts + 1 < n ? values[ts + 1] : bootstrap_value;
    const double delta = rewards[ts] + gamma * next_value * alive - values[ts];
    carry = delta + gamma * lambda * alive * carry;
    out.advantages[t] = carry;
    out.returns[t] = carry + values[ts];
  }
  return out;
}

VecX normalize_advantages(const VecX& advantages) {
  if (advantages.size() == 0) return advantages;
  const double mean = advantages.mean();
  VecX centered = advantages.array() - mean;
  const double stddev =
      std::sqrt(centered.squaredNorm() / static_cast<double>(advantages.size()));
  if (stddev < 1e-8) return centered;
  return centered / stddev;
}

PPOStats ppo_update(GaussianPolicy& policy, Adam& policy_opt, MLP& critic,
                    Adam& critic_opt, const RolloutBatch& batch, const VecX& advantages,
                    const VecX& returns, const MDPConfig& cfg, Rng& rng) {
  cfg.validate();
  batch.validate();
  const int n = batch.size();
  if (advantages.size() != n || returns.size() != n)
    throw InvalidArgument("ppo_update: advantage and return lengths disagree");
  if (n == 0) return PPOStats{};

  // Normalizing a single sample would subtract it away entirely.
  const VecX adv = n > 1 ? normalize_advantages(advantages) : advantages;
  const double var = policy.std_dev() * policy.std_dev();
  const double eps = cfg.clip_ratio;

  // Entry snapshots let a non-finite update leave no trace.
  const MLP policy_snapshot = policy.net;
  const MLP critic_snapshot = critic;
  const Adam policy_opt_snapshot = policy_opt;
  const Adam critic_opt_snapshot = critic_opt;
  auto abort = [&](const char* what) {
    policy.net = policy_snapshot;
    critic = critic_snapshot;
    policy_opt = policy_opt_snapshot;
    critic_opt = critic_opt_snapshot;
    throw UpdateAborted(what);
  };

  PPOStats stats;
  int loss_passes = 0;
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(idx, rng);
    for (int mb = 0; mb < cfg.minibatches; ++mb) {
      const int lo = n * mb / cfg.minibatches;
      const int hi = n * (mb + 1) / cfg.minibatches;
      if (hi <= lo) continue;
      const double inv_m = 1.0 / static_cast<double>(hi - lo);

      MLPGrads policy_grads = MLPGrads::zeros_like(policy.net);
      MLPGrads critic_grads = MLPGrads::zeros_like(critic);
      double policy_loss = 0.0, value_loss = 0.0;

      for (int k = lo; k < hi; ++k) {
        const size_t i = static_cast<size_t>(idx[static_cast<size_t>(k)]);
        const double a = adv[idx[static_cast<size_t>(k)]];

        MLPCache cache;
        const VecX mean = mlp_forward(policy.net, batch.obs[i], &cache);
        const double lp = policy_logprob(policy, mean, batch.raw_actions[i]);
        const double ratio = std::exp(lp - batch.logprobs[i]);
        const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
        policy_loss -= std::min(ratio * a, clipped * a) * inv_m;

        // The clipped branch (and a zero-width trust region) contribute no
        // policy gradient.
        const bool clip_active =
            (a > 0.0 && ratio > 1.0 + eps) || (a < 0.0 && ratio < 1.0 - eps);
        if (eps > 0.0 && !clip_active) {
          const VecX dmean =
              (-a * ratio * inv_m / var) * (batch.raw_actions[i] - mean);
          mlp_backward(policy.net, cache, dmean, policy_grads);
        }

        MLPCache vcache;
        const double v = mlp_forward(critic, batch.obs[i], &vcache)[0];
        const double verr = v - returns[idx[static_cast<size_t>(k)]];
        value_loss += 0.5 * verr * verr * inv_m;
        mlp_backward(critic, vcache, VecX::Constant(1, verr * inv_m), critic_grads);
      }

      if (!finite(policy_loss) || !finite(value_loss) || !policy_grads.finite() ||
          !critic_grads.finite())
        abort("ppo_update: non-finite loss or gradient");

      policy_opt.step(policy.net, policy_grads);
      critic_opt.step(critic, critic_grads);
      stats.policy_loss += policy_loss;
      stats.value_loss += value_loss;
      ++loss_passes;
    }
  }
  if (loss_passes > 0) {
    stats.policy_loss /= loss_passes;
    stats.value_loss /= loss_passes;
  }

  // Divergence diagnostics against the snapshot that collected the batch.
  double kl = 0.0;
  int clipped_count = 0;
  for (int i = 0; i < n; ++i) {
    const size_t is = static_cast<size_t>(i);
    const VecX mean = mlp_forward(policy.net, batch.obs[is]);
    const double lp = policy_logprob(policy, mean, batch.raw_actions[is]);
    kl += batch.logprobs[is] - lp;
    if (std::abs(std::exp(lp - batch.logprobs[is]) - 1.0) > eps) ++clipped_count;
  }
  stats.kl = kl / n;
  stats.clip_fraction = static_cast<double>(clipped_count) / n;

  if (!params_finite(policy.net) || !params_finite(critic))
    abort("ppo_update: non-finite parameters after update");
  return stats;
}

DiscEncoderOpt::DiscEncoderOpt(double lr) {
  trunk.lr = lr;
  disc.lr = lr;
  enc.lr = lr;
}

DiscStats disc_update(DiscEncoder& net, DiscEncoderOpt& opt,
                      const std::vector<VecX>& real_pairs,
                      const std::vector<VecX>& fake_pairs, double grad_penalty_weight) {
  if (real_pairs.empty() || fake_pairs.empty())
    throw InvalidArgument("disc_update: both sample pools must be non-empty");

  MLPGrads trunk_grads = MLPGrads::zeros_like(net.trunk);
  MLPGrads head_grads = MLPGrads::zeros_like(net.disc_head);
  DiscStats stats;
  const double wr = 0.5 / static_cast<double>(real_pairs.size());
  const double wf = 0.5 / static_cast<double>(fake_pairs.size());

  int correct = 0;
  for (const VecX& x : real_pairs) {
    MLPCache tc, hc;
    const VecX feat = mlp_forward(net.trunk, x, &tc);
    const double logit = mlp_forward(net.disc_head, feat, &hc)[0];
    const double s = 1.0 / (1.0 + std::exp(-logit));
    stats.loss += -std::log(std::max(s, 1e-12)) * wr;
    stats.mean_real_score += s / static_cast<double>(real_pairs.size());
    if (s > 0.5) ++correct;
    backprop_pair(net.trunk, tc, trunk_grads, net.disc_head, hc, head_grads,
                  VecX::Constant(1, (s - 1.0) * wr));

    if (grad_penalty_weight > 0.0) {
      // Penalty 0.5 w |grad_x logit|^2. Its parameter gradient is
      // w (d grad_x/d theta)^T grad_x, obtained as a central difference of
      // the parameter gradients along the input direction grad_x. The net
      // is piecewise linear, so inside one linear cell the difference
      // quotient is exact.
      const VecX g = input_gradient(net, x);
      const double gn = g.norm();
      stats.grad_penalty += gn * gn / static_cast<double>(real_pairs.size());
      if (gn > 1e-12) {
        const double step = 1e-4 / gn;
        const double scale =
            grad_penalty_weight / (2.0 * step) / static_cast<double>(real_pairs.size());
        for (double sign : {1.0, -1.0}) {
          MLPCache ptc, phc;
          const VecX shifted = x + sign * step * g;
          mlp_forward(net.disc_head, mlp_forward(net.trunk, shifted, &ptc), &phc);
          backprop_pair(net.trunk, ptc, trunk_grads, net.disc_head, phc, head_grads,
                        VecX::Constant(1, sign * scale));
        }
      }
    }
  }
  for (const VecX& x : fake_pairs) {
    MLPCache tc, hc;
    const VecX feat = mlp_forward(net.trunk, x, &tc);
    const double logit = mlp_forward(net.disc_head, feat, &hc)[0];
    const double s = 1.0 / (1.0 + std::exp(-logit));
    stats.loss += -std::log(std::max(1.0 - s, 1e-12)) * wf;
    stats.mean_fake_score += s / static_cast<double>(fake_pairs.size());
    if (s < 0.5) ++correct;
    backprop_pair(net.trunk, tc, trunk_grads, net.disc_head, hc, head_grads,
                  VecX::Constant(1, s * wf));
  }
  stats.accuracy = static_cast<double>(correct) /
                   static_cast<double>(real_pairs.size() + fake_pairs.size());

  if (!finite(stats.loss) || !trunk_grads.finite() || !head_grads.finite())
    throw UpdateAborted("disc_update: non-finite loss or gradient");
  opt.trunk.step(net.trunk, trunk_grads);
  opt.disc.step(net.disc_head, head_grads);
  net.trunk.validate();
  net.disc_head.validate();
  return stats;
}

EncoderStats encoder_update(DiscEncoder& net, DiscEncoderOpt& opt,
                            const std::vector<VecX>& pairs,
                            const std::vector<VecX>& latents) {
  if (pairs.size() != latents.size())
    throw InvalidArgument("encoder_update: pairs and latents must be aligned");
  if (pairs.empty()) return EncoderStats{};

  MLPGrads trunk_grads = MLPGrads::zeros_like(net.trunk);
  MLPGrads head_grads = MLPGrads::zeros_like(net.enc_head);
  EncoderStats stats;
  const double inv_n = 1.0 / static_cast<double>(pairs.size());

  for (size_t i = 0; i < pairs.size(); ++i) {
    MLPCache tc, hc;
    const VecX feat = mlp_forward(net.trunk, pairs[i], &tc);
    const VecX u = mlp_forward(net.enc_head, feat, &hc);
    const double un = u.norm();
    if (un < 1e-12) continue;  // degenerate direction carries no gradient
    const VecX mu = u / un;
    const double align = mu.dot(latents[i]);
    stats.alignment += align * inv_n;
    stats.loss += -net.kappa * (align - 1.0) * inv_n;
    const VecX du = (-net.kappa * inv_n / un) * (latents[i] - mu * align);
    backprop_pair(net.trunk, tc, trunk_grads, net.enc_head, hc, head_grads, du);
  }

  if (!finite(stats.loss) || !trunk_grads.finite() || !head_grads.finite())
    throw UpdateAborted("encoder_update: non-finite loss or gradient");
  opt.trunk.step(net.trunk, trunk_grads);
  opt.enc.step(net.enc_head, head_grads);
  net.trunk.validate();
  net.enc_head.validate();
  return stats;
}

}  // namespace dexbody
