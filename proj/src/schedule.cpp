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

#include "gud/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gud {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_t(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("t must lie in [0, 1]");
}

double clip(double lo, double hi, double x) { return std::max(lo, std::min(hi, x)); }

}  // namespace

NoisingState make_noising_state(const Eigen::VectorXd& gamma) {
  NoisingState s;
  const Eigen::Index d = gamma.size();
  s.gamma = gamma.cwiseMax(-kGammaClamp).cwiseMin(kGammaClamp);
  s.sigma_sq.resize(d);
  s.alpha_sq.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double sq = sigmoid(s.gamma[i]);
    s.sigma_sq[i] = sq;
    s.alpha_sq[i] = 1.0 - sq;
  }
  s.sigma = s.sigma_sq.cwiseSqrt();
  s.alpha = s.alpha_sq.cwiseSqrt();
  return s;
}

Eigen::VectorXd log_snr(const NoisingState& state, const Eigen::VectorXd& log_var) {
  if (state.dim() != log_var.size())
    throw std::invalid_argument("log_var length does not match state");
  return log_var - state.gamma;
}

std::string to_string(ScheduleFamily family) {
  switch (family) {
    case ScheduleFamily::standard: return "standard";
    case ScheduleFamily::linear_softness: return "linear-softness";
    case ScheduleFamily::column: return "column";
    case ScheduleFamily::haar_column: return "haar-column";
  }
  throw std::invalid_argument("unknown schedule family");
}

ScheduleFamily schedule_family_from_string(const std::string& name) {
  if (name == "standard") return ScheduleFamily::standard;
  if (name == "linear-softness") return ScheduleFamily::linear_softness;
  if (name == "column") return ScheduleFamily::column;
  if (name == "haar-column") return ScheduleFamily::haar_column;
  throw std::invalid_argument("unknown schedule family: " + name);
}

int Schedule::slots() const {
  switch (family) {
    case ScheduleFamily::standard:
    case ScheduleFamily::linear_softness:
      return static_cast<int>(gamma_min.size());
    case ScheduleFamily::column:
      return column_count;
    case ScheduleFamily::haar_column:
      return static_cast<int>(slot_level.size());
  }
  return 0;
}

namespace {

// Per-slot gamma and right derivative for one schedule at time t.
void eval_slots(const Schedule& s, double t, Eigen::VectorXd& g, Eigen::VectorXd* dot) {
  const int n = s.slots();
  g.resize(n);
  if (dot) dot->resize(n);
  switch (s.family) {
    case ScheduleFamily::standard:
    case ScheduleFamily::linear_softness: {
      for (int i = 0; i < n; ++i) {
        g[i] = s.gamma_min[i] + (s.gamma_max[i] - s.gamma_min[i]) * t;
        if (dot) (*dot)[i] = s.gamma_max[i] - s.gamma_min[i];
      }
      break;
    }
    case ScheduleFamily::column: {
      const int L = s.column_count;
      const double slope = (s.gamma_hi - s.gamma_lo) / (1.0 - s.softness_b);
      for (int i = 0; i < n; ++i) {
        const double t_on = s.softness_b * double(L - (i + 1)) / double(L - 1);
        const double raw = s.gamma_lo + (t - t_on) * slope;
        g[i] = clip(s.gamma_lo, s.gamma_hi, raw);
        // Right derivative: active once the onset is reached and until the
        // noising level is hit.
        if (dot) (*dot)[i] = (t >= t_on && raw < s.gamma_hi) ? slope : 0.0;
      }
      break;
    }
    case ScheduleFamily::haar_column: {
      const int levels = static_cast<int>(s.columns_per_level.size());
      const double dg = s.gamma_hi - s.gamma_lo;
      for (int i = 0; i < n; ++i) {
        const int lvl = s.slot_level[i];     // 1-based, 1 = coarsest
        const int col = s.slot_column[i];    // 1-based within the level
        const int li = s.columns_per_level[lvl - 1];
        const double c_level = s.softness_a * double(levels - lvl) / double(levels - 1);
        const double c_col = s.softness_b * double(li - col) / double(li - 1);
        const double u = (t - c_level) / (1.0 - s.softness_a);
        const double t_level = clip(0.0, 1.0, u);
        const double raw = s.gamma_lo + dg * (t_level - c_col) / (1.0 - s.softness_b);
        g[i] = clip(s.gamma_lo, s.gamma_hi, raw);
        if (dot) {
          const bool level_active = (u >= 0.0 && u < 1.0);
          const bool gamma_active = (raw >= s.gamma_lo && raw < s.gamma_hi);
          (*dot)[i] = (level_active && gamma_active)
                          ? dg / ((1.0 - s.softness_b) * (1.0 - s.softness_a))
                          : 0.0;
        }
      }
      break;
    }
  }
}

Eigen::VectorXd expand(const Schedule& s, const Eigen::VectorXd& per_slot) {
  if (s.group_map.empty()) return per_slot;
  Eigen::VectorXd out(s.group_map.size());
  for (size_t i = 0; i < s.group_map.size(); ++i) out[i] = per_slot[s.group_map[i]];
  return out;
}

}  // namespace

Eigen::VectorXd Schedule::gamma(double t) const {
  check_t(t);
  Eigen::VectorXd g;
  eval_slots(*this, t, g, nullptr);
  Eigen::VectorXd full = expand(*this, g);
  return full.cwiseMax(-kGammaClamp).cwiseMin(kGammaClamp);
}

Eigen::VectorXd Schedule::gamma_dot(double t) const {
  check_t(t);
  Eigen::VectorXd g, dot;
  eval_slots(*this, t, g, &dot);
  Eigen::VectorXd full_g = expand(*this, g);
  Eigen::VectorXd full_dot = expand(*this, dot);
  // The +-kGammaClamp guard acts as an outer clip: frozen there as well.
  for (Eigen::Index i = 0; i < full_g.size(); ++i)
    if (full_g[i] >= kGammaClamp || full_g[i] < -kGammaClamp) full_dot[i] = 0.0;
  return full_dot;
}

Eigen::VectorXd beta_from_schedule(const Schedule& schedule, double t) {
  check_t(t);
  Eigen::VectorXd g = schedule.gamma(t);
  Eigen::VectorXd dot = schedule.gamma_dot(t);
  Eigen::VectorXd beta(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) beta[i] = sigmoid(g[i]) * dot[i];
  return beta;
}

Schedule with_group_map(Schedule schedule, const std::vector<int>& groups_1based) {
  const int n_slots = schedule.slots();
  schedule.group_map.resize(groups_1based.size());
  for (size_t i = 0; i < groups_1based.size(); ++i) {
    const int slot = groups_1based[i] - 1;
    if (slot < 0 || slot >= n_slots)
      throw std::invalid_argument("group index outside schedule slots");
    schedule.group_map[i] = slot;
  }
  return schedule;
}

Schedule standard_schedule(int dim, double gamma0, double gamma1) {
  if (dim < 1) throw std::invalid_argument("dim must be positive");
  if (!(gamma1 >= gamma0))
    throw std::invalid_argument("standard schedule requires gamma1 >= gamma0");
  Schedule s;
  s.family = ScheduleFamily::standard;
  s.gamma_min = Eigen::VectorXd::Constant(dim, gamma0);
  s.gamma_max = Eigen::VectorXd::Constant(dim, gamma1);
  s.gamma_denoise = gamma0;
  s.gamma_noise = gamma1;
  return s;
}

Schedule linear_softness_schedule(const Eigen::VectorXd& log_var,
                                  const Eigen::VectorXd& ordering, double a,
                                  double gamma_denoise, double gamma_noise) {
  const Eigen::Index d = log_var.size();
  if (d == 0) throw std::invalid_argument("empty ordering/log_var");
  if (ordering.size() != d) throw std::invalid_argument("ordering length mismatch");
  if (!(a > 0.0)) throw std::invalid_argument("softness parameter a must be positive");
  if (!ordering.allFinite()) throw std::invalid_argument("ordering variables must be finite");

  const double l_min = ordering.minCoeff();
  const double l_max = ordering.maxCoeff();
  if (gamma_noise - gamma_denoise + a * (l_max - l_min) < 0.0)
    throw std::invalid_argument("schedule would decrease: gamma_noise too far below gamma_denoise");
  Schedule s;
  s.family = ScheduleFamily::linear_softness;
  s.gamma_min.resize(d);
  s.gamma_max.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    s.gamma_min[i] = gamma_denoise + log_var[i] + a * (ordering[i] - l_max);
    s.gamma_max[i] = gamma_noise + log_var[i] + a * (ordering[i] - l_min);
  }
  s.softness = a;
  s.gamma_denoise = gamma_denoise;
  s.gamma_noise = gamma_noise;
  s.log_var = log_var;
  s.ordering = ordering;
  return s;
}

Eigen::VectorXd fft_ordering_variables(const Eigen::VectorXd& log_var,
                                       const Eigen::VectorXd& freq, double r) {
  const Eigen::Index d = log_var.size();
  if (freq.size() != d) throw std::invalid_argument("freq length mismatch");
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("r must lie in [0, 1]");
  if (freq.minCoeff() < 0.0) throw std::invalid_argument("frequencies must be nonnegative");

  const Eigen::VectorXd neg_log_var = -log_var;
  if (r == 0.0) return neg_log_var;

  const double target_min = neg_log_var.minCoeff(), target_max = neg_log_var.maxCoeff();
  const double f_min = freq.minCoeff(), f_max = freq.maxCoeff();
  double kappa, delta;
  if (f_max == f_min) {
    if (target_max != target_min)
      throw std::invalid_argument("range matching impossible: constant frequency labels");
    kappa = 1.0;
    delta = target_min - f_min;
  } else {
    if (target_max == target_min)
      throw std::invalid_argument("range matching impossible: constant variance labels");
    kappa = (f_max - f_min) / (target_max - target_min);
    delta = kappa * target_min - f_min;
  }
  Eigen::VectorXd l(d);
  for (Eigen::Index i = 0; i < d; ++i)
    l[i] = (1.0 - r) * neg_log_var[i] + r * (freq[i] + delta) / kappa;
  return l;
}

double noise_floor(const Eigen::VectorXd& log_var, double sigma_min) {
  if (!(sigma_min > 0.0 && sigma_min < 1.0))
    throw std::invalid_argument("sigma_min must lie in (0, 1)");
  const double p = sigma_min * sigma_min;
  const double logit = std::log(p / (1.0 - p));
  return std::max(3.0, logit - log_var.minCoeff());
}

Schedule column_schedule(int column_count, double b, double gamma_min, double gamma_max) {
  if (column_count < 2) throw std::invalid_argument("column schedule requires L >= 2");
  if (!(b >= 0.0 && b < 1.0)) throw std::invalid_argument("b must lie in [0, 1)");
  if (!(gamma_min < gamma_max)) throw std::invalid_argument("gamma_min must be below gamma_max");
  Schedule s;
  s.family = ScheduleFamily::column;
  s.column_count = column_count;
  s.softness_b = b;
  s.gamma_lo = gamma_min;
  s.gamma_hi = gamma_max;
  return s;
}

Schedule haar_column_schedule(const std::vector<int>& columns_per_level, double a,
                              double b, double gamma_min, double gamma_max) {
  if (columns_per_level.size() < 2)
    throw std::invalid_argument("haar-column schedule requires at least 2 levels");
  for (int li : columns_per_level)
    if (li < 2) throw std::invalid_argument("each level needs at least 2 columns");
  if (!(a >= 0.0 && a < 1.0) || !(b >= 0.0 && b < 1.0))
    throw std::invalid_argument("a and b must lie in [0, 1)");
  if (!(gamma_min < gamma_max)) throw std::invalid_argument("gamma_min must be below gamma_max");

  Schedule s;
  s.family = ScheduleFamily::haar_column;
  s.columns_per_level = columns_per_level;
  s.softness_a = a;
  s.softness_b = b;
  s.gamma_lo = gamma_min;
  s.gamma_hi = gamma_max;
  for (size_t lvl = 1; lvl <= columns_per_level.size(); ++lvl) {
    for (int col = 1; col <= columns_per_level[lvl - 1]; ++col) {
      s.slot_level.push_back(static_cast<int>(lvl));
      s.slot_column.push_back(col);
    }
  }
  return s;
}

namespace {

std::string vector_to_csv(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os.precision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::string ints_to_csv(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

Eigen::VectorXd csv_to_vector(const std::string& text) {
  std::vector<double> vals;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) vals.push_back(std::stod(tok));
  return Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size()).eval();
}

std::vector<int> csv_to_ints(const std::string& text) {
  std::vector<int> vals;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) vals.push_back(std::stoi(tok));
  return vals;
}

std::string number_to_string(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> Schedule::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["family"] = to_string(family);
  switch (family) {
    case ScheduleFamily::standard:
      kv["gamma0"] = number_to_string(gamma_min[0]);
      kv["gamma1"] = number_to_string(gamma_max[0]);
      kv["dim"] = std::to_string(gamma_min.size());
      break;
    case ScheduleFamily::linear_softness:
      kv["a"] = number_to_string(softness);
      kv["gamma_denoise"] = number_to_string(gamma_denoise);
      kv["gamma_noise"] = number_to_string(gamma_noise);
      kv["log_var"] = vector_to_csv(log_var);
      kv["ordering"] = vector_to_csv(ordering);
      break;
    case ScheduleFamily::column:
      kv["columns"] = std::to_string(column_count);
      kv["b"] = number_to_string(softness_b);
      kv["gamma_min"] = number_to_string(gamma_lo);
      kv["gamma_max"] = number_to_string(gamma_hi);
      break;
    case ScheduleFamily::haar_column:
      kv["columns_per_level"] = ints_to_csv(columns_per_level);
      kv["a"] = number_to_string(softness_a);
      kv["b"] = number_to_string(softness_b);
      kv["gamma_min"] = number_to_string(gamma_lo);
      kv["gamma_max"] = number_to_string(gamma_hi);
      break;
  }
  if (!group_map.empty()) {
    std::vector<int> g1(group_map.size());
    for (size_t i = 0; i < group_map.size(); ++i) g1[i] = group_map[i] + 1;
    kv["group_map"] = ints_to_csv(g1);
  }
  return kv;
}

Schedule Schedule::from_kv(const std::map<std::string, std::string>& kv) {
  auto need = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("missing schedule key: " + key);
    return it->second;
  };
  const ScheduleFamily family = schedule_family_from_string(need("family"));
  Schedule s;
  switch (family) {
    case ScheduleFamily::standard:
      s = standard_schedule(std::stoi(need("dim")), std::stod(need("gamma0")),
                            std::stod(need("gamma1")));
      break;
    case ScheduleFamily::linear_softness:
      s = linear_softness_schedule(csv_to_vector(need("log_var")),
                                   csv_to_vector(need("ordering")), std::stod(need("a")),
                                   std::stod(need("gamma_denoise")),
                                   std::stod(need("gamma_noise")));
      break;
    case ScheduleFamily::column:
      s = column_schedule(std::stoi(need("columns")), std::stod(need("b")),
                          std::stod(need("gamma_min")), std::stod(need("gamma_max")));
      break;
    case ScheduleFamily::haar_column:
      s = haar_column_schedule(csv_to_ints(need("columns_per_level")),
                               std::stod(need("a")), std::stod(need("b")),
                               std::stod(need("gamma_min")), std::stod(need("gamma_max")));
      break;
  }
  if (auto it = kv.find("group_map"); it != kv.end())
    s = with_group_map(s, csv_to_ints(it->second));
  return s;
}

}  // namespace gud
