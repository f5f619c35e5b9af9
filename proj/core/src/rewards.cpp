#include "dexbody/rewards.hpp"

#include <algorithm>
#include <cmath>

#include "dexbody/errors.hpp"

namespace dexbody {

namespace {

// min(distance, clamp) - clamp: zero beyond the clamp radius, increasingly
// negative as the distance closes, bottoming out at -clamp when on target.
double clamped_deficit(double distance, double clamp) {
  return std::min(distance, clamp) - clamp;
}

}  // namespace

void RewardWeights::validate() const {
  const double values[] = {w_task,          w_style,         encoder_weight,
                           body_beta_root,  body_beta_wrist, body_alpha_root,
                           body_alpha_wrist, traj_beta_root, traj_beta_wrist,
                           traj_alpha_root, traj_alpha_wrist, traj_alpha_success,
                           beta_x,          beta_theta,      beta_c,
                           force_cap};
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidArgument("RewardWeights: non-finite field");
  const double clamps[] = {body_beta_root, body_beta_wrist, traj_beta_root,
                           traj_beta_wrist, beta_x, beta_theta, beta_c, force_cap};
  for (double c : clamps)
    if (c <= 0.0) throw InvalidArgument("RewardWeights: clamp constants must be positive");
}

double clamp_score(double d_score) {
  return std::clamp(d_score, 1e-4, 1.0 - 1e-4);
}

double prior_reward(double d_score, double encoder_logprob, double beta) {
  return -std::log(1.0 - clamp_score(d_score)) + beta * encoder_logprob;
}

double body_traj_reward(const Vec3& root, const Vec3& root_target, const Vec3& wrist,
                        const Vec3& wrist_target, const RewardWeights& w) {
  const double db = clamped_deficit((root_target - root).norm(), w.body_beta_root);
  const double dh = clamped_deficit((wrist_target - wrist).norm(), w.body_beta_wrist);
  return std::exp(-w.body_alpha_root * db) + std::exp(-w.body_alpha_wrist * dh);
}

double body_reg_reward(const Vec3& wrist_velocity) {
  return 1.0 - std::min(std::exp(wrist_velocity.norm() - 0.8), 10.0);
}

double position_reward(const std::vector<Vec3>& target, const std::vector<Vec3>& actual,
                       const RewardWeights& w) {
  if (target.empty() || target.size() != actual.size())
    throw InvalidArgument("position_reward: joint lists must be non-empty and aligned");
  double all = 0.0;
  for (size_t j = 0; j < target.size(); ++j)
    all += clamped_deficit((target[j] - actual[j]).norm(), w.beta_x);
  const double wrist = clamped_deficit((target[0] - actual[0]).norm(), w.beta_x);
  return 0.5 * std::exp(-1.25 * all) + std::exp(-1.5 * wrist);
}

double orientation_reward(const std::vector<Quat>& target, const std::vector<Quat>& actual,
                          const RewardWeights& w) {
  if (target.empty() || target.size() != actual.size())
    throw InvalidArgument("orientation_reward: joint lists must be non-empty and aligned");
  double sum = 0.0;
  for (size_t j = 0; j < target.size(); ++j) {
    const double dot = target[j].coeffs().dot(actual[j].coeffs());
    sum += std::acos(std::clamp(2.0 * dot * dot - 1.0, -1.0, 1.0));
  }
  const double mean = sum / static_cast<double>(target.size());
  return std::exp(-2.5 * clamped_deficit(mean, w.beta_theta));
}

ContactRewards contact_reward(const std::vector<int>& target, const std::vector<int>& current,
                              const std::vector<int>& previous,
                              const std::vector<double>& force, double table_force,
                              double object_mass, const RewardWeights& w) {
  const size_t n = target.size();
  if (current.size() != n || previous.size() != n || force.size() != n)
    throw InvalidArgument("contact_reward: per-joint lists must be aligned");
  int targets = 0;
  for (int t : target)
    if (t != 0) ++targets;
  if (targets == 0)
    throw InvalidArgument("contact_reward: target contact mask must not be all zero");

  double now = 0.0, prev = 0.0;
  for (size_t j = 0; j < n; ++j) {
    if (target[j] == 0) continue;
    now += current[j] != 0 ? 1.0 : 0.0;
    prev += previous[j] != 0 ? 1.0 : 0.0;
  }
  const double c_mask = (now + prev) / static_cast<double>(targets);

  double force_sum = 0.0;
  double hand_total = 0.0;
  for (size_t j = 0; j < n; ++j) {
    hand_total += force[j];
    if (target[j] != 0 && current[j] != 0) {
      const double eta = std::min(force[j], w.beta_c * object_mass);
      force_sum += std::exp(0.25 * eta);
    }
  }

  ContactRewards out;
  out.mask = 1.0 - std::exp(-1.6 * c_mask);
  out.force = std::min(force_sum / static_cast<double>(targets), w.force_cap);
  out.tab = (hand_total > 0.0 && table_force == 0.0) ? 1.0 : 0.0;
  return out;
}

double ho_traj_reward(const Vec3& root, const Vec3& root_target, const Vec3& wrist,
                      const Vec3& wrist_target, int n_success, const RewardWeights& w) {
  if (n_success < 0) throw InvalidArgument("ho_traj_reward: n_success must be non-negative");
  const double db = clamped_deficit((root_target - root).norm(), w.traj_beta_root);
  const double dh = clamped_deficit((wrist_target - wrist).norm(), w.traj_beta_wrist);
  return std::exp(-w.traj_alpha_root * db) + std::exp(-w.traj_alpha_wrist * dh) +
         w.traj_alpha_success * n_success;
}

double ho_reg_reward(const Vec3& object_lin_vel, const Vec3& wrist_jerk) {
  return std::exp(-object_lin_vel.norm()) + std::exp(-wrist_jerk.norm());
}

double style_reward(double d_body, double d_hand) {
  return -std::log(1.0 - clamp_score(d_body)) - std::log(1.0 - clamp_score(d_hand));
}

RewardBreakdown task_reward(double r_x, double r_theta, const ContactRewards& contact,
                            double r_xi, double r_reg, double d_body, double d_hand,
                            const RewardWeights& w) {
  RewardBreakdown b;
  b.r_x = r_x;
  b.r_theta = r_theta;
  b.r_c_mask = contact.mask;
  b.r_c_force = contact.force;
  b.r_c_tab = contact.tab;
  b.r_xi = r_xi;
  b.r_reg = r_reg;
  b.r_s_body = -std::log(1.0 - clamp_score(d_body));
  b.r_s_hand = -std::log(1.0 - clamp_score(d_hand));
  b.total = w.w_task * b.task() + w.w_style * b.style();
  return b;
}

}  // namespace dexbody
