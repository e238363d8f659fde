// Copyright 2026 The GUD Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GUD_SCHEDULE_HPP
#define GUD_SCHEDULE_HPP

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gud {

/// gamma values are clamped to this range before sigmoids so alpha/sigma
/// never underflow to exact 0/1.
inline constexpr double kGammaClamp = 30.0;

/// Per-component noising state gamma with derived alpha/sigma. The squared
/// values come from a single sigmoid evaluation per component, so
/// alpha_sq + sigma_sq == 1 holds exactly.
struct NoisingState {
  Eigen::VectorXd gamma;     // clamped to [-kGammaClamp, kGammaClamp]
  Eigen::VectorXd alpha_sq;  // 1 - sigmoid(gamma)
  Eigen::VectorXd sigma_sq;  // sigmoid(gamma)
  Eigen::VectorXd alpha;
  Eigen::VectorXd sigma;

  Eigen::Index dim() const { return gamma.size(); }
};

NoisingState make_noising_state(const Eigen::VectorXd& gamma);

/// log SNR_i = log Sigma_ii - gamma_i (magnitude-aware signal-to-noise).
Eigen::VectorXd log_snr(const NoisingState& state, const Eigen::VectorXd& log_var);

enum class ScheduleFamily : int {
  standard = 0,
  linear_softness = 1,
  column = 2,
  haar_column = 3,
};

std::string to_string(ScheduleFamily family);
ScheduleFamily schedule_family_from_string(const std::string& name);

/// Component-wise noising schedule t in [0,1] -> gamma(t). All families are
/// non-decreasing in t; gamma_dot returns the one-sided right derivative
/// (piecewise-linear families have kinks at clip boundaries).
///
/// Schedules are defined on "slots" (components, columns, or
/// level x column cells); group_map sends each component to its slot and
/// defaults to the identity.
struct Schedule {
  ScheduleFamily family = ScheduleFamily::standard;

  // standard / linear-softness: per-slot linear endpoints.
  Eigen::VectorXd gamma_min, gamma_max;

  // column / haar-column: shared clip levels and softness parameters.
  double gamma_lo = 0.0, gamma_hi = 0.0;
  double softness_a = 0.0;  // haar-column level softness
  double softness_b = 0.0;  // column softness
  int column_count = 0;                  // column family: L
  std::vector<int> columns_per_level;    // haar-column: L_i, i = 1..levels
  std::vector<int> slot_level, slot_column;  // haar-column slot coordinates

  std::vector<int> group_map;  // component -> slot (empty = identity)

  // Construction metadata (serialized for reproducibility).
  double gamma_denoise = 0.0, gamma_noise = 0.0, softness = 0.0;
  Eigen::VectorXd log_var, ordering;

  int slots() const;
  int dim() const { return group_map.empty() ? slots() : static_cast<int>(group_map.size()); }

  Eigen::VectorXd gamma(double t) const;
  Eigen::VectorXd gamma_dot(double t) const;
  NoisingState state(double t) const { return make_noising_state(gamma(t)); }

  std::map<std::string, std::string> to_kv() const;
  static Schedule from_kv(const std::map<std::string, std::string>& kv);
};

/// Attaches a component -> slot map (e.g. from column_grouping, 1-based
/// groups are accepted and shifted down).
Schedule with_group_map(Schedule schedule, const std::vector<int>& groups_1based);

/// All components share the linear path gamma0 + (gamma1 - gamma0) t.
Schedule standard_schedule(int dim, double gamma0, double gamma1);

/// beta_i(t) = sigma_i^2(gamma_i(t)) * gamma_dot_i(t); zero exactly where a
/// component is clipped or frozen.
Eigen::VectorXd beta_from_schedule(const Schedule& schedule, double t);

/// Linear soft-conditioning schedule with per-component endpoints
///   gamma_min_i = gamma_denoise + log_var_i + a (l_i - l_max)
///   gamma_max_i = gamma_noise   + log_var_i + a (l_i - l_min).
Schedule linear_softness_schedule(const Eigen::VectorXd& log_var,
                                  const Eigen::VectorXd& ordering, double a,
                                  double gamma_denoise, double gamma_noise);

/// Ordering variables l_i = (1-r)(-log_var_i) + r (freq_i + delta)/kappa with
/// kappa, delta matching the ranges of the two endpoints.
Eigen::VectorXd fft_ordering_variables(const Eigen::VectorXd& log_var,
                                       const Eigen::VectorXd& freq, double r);

/// Minimal admissible gamma_noise so every sigma_i(1) >= sigma_min:
///   max(3, logit(sigma_min^2) - min_i log_var_i).
double noise_floor(const Eigen::VectorXd& log_var, double sigma_min);

/// Column-sequential schedule over L columns: column i starts noising at
/// t_i = b (L-i)/(L-1) and is clipped at the designated levels.
Schedule column_schedule(int column_count, double b, double gamma_min, double gamma_max);

/// Haar level x column schedule. Level offsets c_i = a (N-i)/(N-1) stretch
/// the level clock to t_i = clip01((t - c_i)/(1-a)); columns within a level
/// follow the column rule with offsets c_ij = b (L_i - j)/(L_i - 1).
Schedule haar_column_schedule(const std::vector<int>& columns_per_level, double a,
                              double b, double gamma_min, double gamma_max);

}  // namespace gud

#endif  // GUD_SCHEDULE_HPP
