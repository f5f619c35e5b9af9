#pragma once

// Scalar reward terms for all three training stages: the imitation reward
// that drives the skill priors, the body-prior pretraining rewards, and the
// five-part hand-object task reward with its style counterpart.

#include <vector>

#include "dexbody/mathcore.hpp"

namespace dexbody {

// Weights and clamp constants shared by the reward terms. Defaults are the
// shipped training configuration; every field is config-overridable.
struct RewardWeights {
  double w_task = 0.5;    // task share of the hand-object reward
  double w_style = 0.5;   // style share of the hand-object reward
  double encoder_weight = 0.5;  // encoder log-likelihood share of the prior reward

  // Body-prior trajectory shaping: root and wrist distance clamps and falloffs.
  double body_beta_root = 0.2;
  double body_beta_wrist = 0.005;
  double body_alpha_root = 2.0;
  double body_alpha_wrist = 3.0;

  // Hand-object trajectory shaping plus the success-count bonus rate.
  double traj_beta_root = 0.01;
  double traj_beta_wrist = 0.01;
  double traj_alpha_root = 1.25;
  double traj_alpha_wrist = 3.0;
  double traj_alpha_success = 0.008;

  double beta_x = 0.01;     // per-joint position clamp, meters
  double beta_theta = 0.1;  // mean geodesic clamp, radians
  double beta_c = 15.0;     // contact force clamp per kilogram of object mass

  // The printed force term grows as exp(force/4) with no normalizer, so the
  // joint-averaged value is additionally capped here to keep it from
  // dominating the other task terms on heavy objects.
  double force_cap = 10.0;

  // Throws InvalidArgument unless every field is finite and every clamp
  // constant is positive.
  void validate() const;
};

// The three contact-related task terms, reported separately for logging.
struct ContactRewards {
  double mask = 0.0;
  double force = 0.0;
  double tab = 0.0;
};

// Per-term diagnostics for one hand-object reward evaluation.
struct RewardBreakdown {
  double r_x = 0.0;
  double r_theta = 0.0;
  double r_c_mask = 0.0;
  double r_c_force = 0.0;
  double r_c_tab = 0.0;
  double r_xi = 0.0;
  double r_reg = 0.0;
  double r_s_body = 0.0;
  double r_s_hand = 0.0;
  double total = 0.0;

  double task() const {
    return r_x + r_theta + r_c_mask + r_c_force + r_c_tab + r_xi + r_reg;
  }
  double style() const { return r_s_body + r_s_hand; }
};

// Discriminator scores are clamped into [1e-4, 1 - 1e-4] before any log so
// the imitation rewards stay finite.
double clamp_score(double d_score);

// Imitation reward for the skill priors: discriminator realism plus the
// encoder's log-likelihood of the latent that produced the transition.
double prior_reward(double d_score, double encoder_logprob, double beta);

// Body-prior pretraining reward for steering the root and wrist toward
// sampled targets. Saturates to 2 far away and peaks when both are reached.
double body_traj_reward(const Vec3& root, const Vec3& root_target, const Vec3& wrist,
                        const Vec3& wrist_target, const RewardWeights& w);

// Penalizes fast wrist motion; zero at 0.8 m/s, floored at -9.
double body_reg_reward(const Vec3& wrist_velocity);

// Hand joint position reward. Entry 0 of both lists is the wrist, which also
// earns a dedicated term. Throws InvalidArgument on empty or mismatched lists.
double position_reward(const std::vector<Vec3>& target, const std::vector<Vec3>& actual,
                       const RewardWeights& w);

// Hand joint orientation reward from the clamped mean geodesic distance.
// Always lies in [1, exp(2.5 * beta_theta)].
double orientation_reward(const std::vector<Quat>& target, const std::vector<Quat>& actual,
                          const RewardWeights& w);

// Contact mask, force, and table-avoidance terms. `force` holds the contact
// force magnitude per hand joint; `table_force` is the total force the hand
// applies to the table. Throws InvalidArgument when the target mask is all
// zero or the lists disagree in size.
ContactRewards contact_reward(const std::vector<int>& target, const std::vector<int>& current,
                              const std::vector<int>& previous,
                              const std::vector<double>& force, double table_force,
                              double object_mass, const RewardWeights& w);

// Post-grasp trajectory-following reward plus a bonus that grows with the
// number of consecutively reached waypoints. Throws InvalidArgument when
// n_success is negative.
double ho_traj_reward(const Vec3& root, const Vec3& root_target, const Vec3& wrist,
                      const Vec3& wrist_target, int n_success, const RewardWeights& w);

// Smoothness reward on object speed and wrist jerk; 2 at rest.
double ho_reg_reward(const Vec3& object_lin_vel, const Vec3& wrist_jerk);

// Style reward from the two frozen discriminators.
double style_reward(double d_body, double d_hand);

// Assembles the weighted hand-object reward from precomputed terms and the
// raw discriminator scores. The returned breakdown satisfies
// total == w_task * task() + w_style * style().
RewardBreakdown task_reward(double r_x, double r_theta, const ContactRewards& contact,
                            double r_xi, double r_reg, double d_body, double d_hand,
                            const RewardWeights& w);

}  // namespace dexbody
