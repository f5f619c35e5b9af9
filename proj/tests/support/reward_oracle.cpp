#include "reward_oracle.hpp"

#include <cmath>

namespace dexbody::test::oracle {

namespace {

double clamp_score(double d) {
  if (d < 1e-4) return 1e-4;
  if (d > 1.0 - 1e-4) return 1.0 - 1e-4;
  return d;
}

}  // namespace

double prior_reward(double d_score, double encoder_logprob, double beta) {
  return -std::log(1.0 - clamp_score(d_score)) + beta * encoder_logprob;
}

double body_traj_reward(const Vec3& root, const Vec3& root_target, const Vec3& wrist,
                        const Vec3& wrist_target) {
  const double db = std::min(std::sqrt((root_target[0] - root[0]) * (root_target[0] - root[0]) +
                                       (root_target[1] - root[1]) * (root_target[1] - root[1]) +
                                       (root_target[2] - root[2]) * (root_target[2] - root[2])),
                             0.2) -
                    0.2;
  const double dh =
      std::min(std::sqrt((wrist_target[0] - wrist[0]) * (wrist_target[0] - wrist[0]) +
                         (wrist_target[1] - wrist[1]) * (wrist_target[1] - wrist[1]) +
                         (wrist_target[2] - wrist[2]) * (wrist_target[2] - wrist[2])),
               0.005) -
      0.005;
  return std::exp(-2.0 * db) + std::exp(-3.0 * dh);
}

double body_reg_reward(const Vec3& wrist_velocity) {
  const double n = std::sqrt(wrist_velocity[0] * wrist_velocity[0] +
                             wrist_velocity[1] * wrist_velocity[1] +
                             wrist_velocity[2] * wrist_velocity[2]);
  return 1.0 - std::min(std::exp(n - 0.8), 10.0);
}

double position_reward(const std::vector<Vec3>& target, const std::vector<Vec3>& actual) {
  double all = 0.0;
  for (size_t j = 0; j < target.size(); ++j) {
    const double d = std::sqrt((target[j][0] - actual[j][0]) * (target[j][0] - actual[j][0]) +
                               (target[j][1] - actual[j][1]) * (target[j][1] - actual[j][1]) +
                               (target[j][2] - actual[j][2]) * (target[j][2] - actual[j][2]));
    all += std::min(d, 0.01) - 0.01;
  }
  const double dw = std::sqrt((target[0][0] - actual[0][0]) * (target[0][0] - actual[0][0]) +
                              (target[0][1] - actual[0][1]) * (target[0][1] - actual[0][1]) +
                              (target[0][2] - actual[0][2]) * (target[0][2] - actual[0][2]));
  const double wrist = std::min(dw, 0.01) - 0.01;
  return 0.5 * std::exp(-1.25 * all) + std::exp(-1.5 * wrist);
}

double orientation_reward(const std::vector<Quat>& target, const std::vector<Quat>& actual) {
  double sum = 0.0;
  for (size_t j = 0; j < target.size(); ++j) {
    double dot = target[j].w() * actual[j].w() + target[j].x() * actual[j].x() +
                 target[j].y() * actual[j].y() + target[j].z() * actual[j].z();
    double c = 2.0 * dot * dot - 1.0;
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    sum += std::acos(c);
  }
  const double mean = sum / static_cast<double>(target.size());
  const double dq = std::min(mean, 0.1) - 0.1;
  return std::exp(-2.5 * dq);
}

double contact_mask_reward(const std::vector<int>& target, const std::vector<int>& current,
                           const std::vector<int>& previous) {
  double tt = 0.0, tc = 0.0, tp = 0.0;
  for (size_t j = 0; j < target.size(); ++j) {
    tt += static_cast<double>(target[j] * target[j]);
    tc += static_cast<double>(target[j] * current[j]);
    tp += static_cast<double>(target[j] * previous[j]);
  }
  const double c_mask = tc / tt + tp / tt;
  return 1.0 - std::exp(-1.6 * c_mask);
}

double contact_force_reward(const std::vector<int>& target, const std::vector<int>& current,
                            const std::vector<double>& force, double object_mass,
                            double cap) {
  double sum = 0.0;
  int targets = 0;
  for (size_t j = 0; j < target.size(); ++j) {
    if (target[j] != 0) ++targets;
    if (target[j] != 0 && current[j] != 0) {
      const double eta = std::min(force[j], 15.0 * object_mass);
      sum += std::exp(0.25 * eta);
    }
  }
  return std::min(sum / static_cast<double>(targets), cap);
}

double contact_table_reward(double hand_force_total, double table_force) {
  return (hand_force_total > 0.0 && table_force == 0.0) ? 1.0 : 0.0;
}

double ho_traj_reward(const Vec3& root, const Vec3& root_target, const Vec3& wrist,
                      const Vec3& wrist_target, int n_success) {
  const double db = std::min(std::sqrt((root_target[0] - root[0]) * (root_target[0] - root[0]) +
                                       (root_target[1] - root[1]) * (root_target[1] - root[1]) +
                                       (root_target[2] - root[2]) * (root_target[2] - root[2])),
                             0.01) -
                    0.01;
  const double dh =
      std::min(std::sqrt((wrist_target[0] - wrist[0]) * (wrist_target[0] - wrist[0]) +
                         (wrist_target[1] - wrist[1]) * (wrist_target[1] - wrist[1]) +
                         (wrist_target[2] - wrist[2]) * (wrist_target[2] - wrist[2])),
               0.01) -
      0.01;
  return std::exp(-1.25 * db) + std::exp(-3.0 * dh) + 0.008 * static_cast<double>(n_success);
}

double ho_reg_reward(const Vec3& object_lin_vel, const Vec3& wrist_jerk) {
  const double no = std::sqrt(object_lin_vel[0] * object_lin_vel[0] +
                              object_lin_vel[1] * object_lin_vel[1] +
                              object_lin_vel[2] * object_lin_vel[2]);
  const double nj = std::sqrt(wrist_jerk[0] * wrist_jerk[0] + wrist_jerk[1] * wrist_jerk[1] +
                              wrist_jerk[2] * wrist_jerk[2]);
  return std::exp(-no) + std::exp(-nj);
}

double style_reward(double d_body, double d_hand) {
  return -std::log(1.0 - clamp_score(d_body)) - std::log(1.0 - clamp_score(d_hand));
}

}  // namespace dexbody::test::oracle
