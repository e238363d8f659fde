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

#ifndef GUD_PROCESS_HPP
#define GUD_PROCESS_HPP

#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "gud/rng.hpp"
#include "gud/schedule.hpp"

namespace gud {

/// Diagonal-covariance Gaussian mixture; analytically tractable stand-in for
/// a data distribution. The component-wise forward kernel keeps it closed:
/// the marginal at noising state s is the mixture with means alpha .* mu_k
/// and variances alpha^2 .* v_k + sigma^2.
struct GaussianMixture {
  Eigen::VectorXd weights;   // K, sums to 1
  Eigen::MatrixXd means;     // K x d
  Eigen::MatrixXd variances; // K x d, strictly positive

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }
  void validate() const;

  /// Per-component data variances E[x^2] - E[x]^2 of the mixture.
  Eigen::VectorXd component_variances() const;
};

/// chi_t = alpha .* chi0 + sigma .* eps with eps ~ N(0, I).
Eigen::VectorXd forward_sample(const Eigen::VectorXd& chi0, const NoisingState& state,
                               RandomStream& rng);

/// Gaussian conditional score grad_{chi_t} log p(chi_t | chi0)
///   = -(chi_t - alpha .* chi0) / sigma^2.
Eigen::VectorXd conditional_score(const Eigen::VectorXd& chi_t,
                                  const Eigen::VectorXd& chi0,
                                  const NoisingState& state);

double gm_marginal_logpdf(const GaussianMixture& mix, const Eigen::VectorXd& chi_t,
                          const NoisingState& state);
Eigen::VectorXd gm_marginal_score(const GaussianMixture& mix, const Eigen::VectorXd& chi_t,
                                  const NoisingState& state);

/// Evaluation contract for scores grad_chi log p_t(chi). Implementations must
/// be safe for concurrent read-only use.
class ScoreFunction {
 public:
  virtual ~ScoreFunction() = default;

  virtual Eigen::VectorXd score(const Eigen::VectorXd& chi,
                                const NoisingState& state) const = 0;

  /// Diagonal of the score Jacobian d s_i / d chi_i. Default: central finite
  /// differences along basis vectors.
  virtual Eigen::VectorXd score_jacobian_diag(const Eigen::VectorXd& chi,
                                              const NoisingState& state) const;

  /// Jacobian-vector product (d s / d chi) v. Default: central finite
  /// differences along v.
  virtual Eigen::VectorXd score_jacobian_vprod(const Eigen::VectorXd& chi,
                                               const NoisingState& state,
                                               const Eigen::VectorXd& v) const;
};

/// Analytic mixture score oracle with a closed-form Jacobian diagonal.
class GaussianMixtureScore : public ScoreFunction {
 public:
  explicit GaussianMixtureScore(GaussianMixture mixture);
  Eigen::VectorXd score(const Eigen::VectorXd& chi, const NoisingState& state) const override;
  Eigen::VectorXd score_jacobian_diag(const Eigen::VectorXd& chi,
                                      const NoisingState& state) const override;
  const GaussianMixture& mixture() const { return mixture_; }

 private:
  GaussianMixture mixture_;
};

/// Wraps a plain callable as a ScoreFunction (FD-based Jacobian defaults).
class CallableScore : public ScoreFunction {
 public:
  using Fn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const NoisingState&)>;
  explicit CallableScore(Fn fn) : fn_(std::move(fn)) {}
  Eigen::VectorXd score(const Eigen::VectorXd& chi, const NoisingState& state) const override {
    return fn_(chi, state);
  }

 private:
  Fn fn_;
};

/// Euler-Maruyama integration of the reverse SDE
///   d chi_i = [-1/2 beta_i chi_i - beta_i s_i](-dt) + sqrt(beta_i) dw
/// from t_from down to t_to. The score is evaluated at the left (later-time)
/// grid endpoint. Throws on non-finite score output.
Eigen::VectorXd reverse_sde_segment(const ScoreFunction& score, const Schedule& schedule,
                                    Eigen::VectorXd chi, double t_from, double t_to,
                                    int steps, RandomStream& rng);

/// Batch reverse-SDE sampling from the standard-normal prior at t = 1 down to
/// t = 0. Rows of the result are samples; per-sample seeded streams make the
/// output independent of thread count.
Eigen::MatrixXd reverse_sde_sample(const ScoreFunction& score, const Schedule& schedule,
                                   int steps, int n_samples, std::uint64_t seed,
                                   int threads = 1);

enum class DivergenceMode : int {
  automatic = 0,  // exact for d <= 16, Hutchinson otherwise
  exact = 1,      // sum of per-component Jacobian diagonals
  hutchinson = 2, // Rademacher probes
};

struct OdeOptions {
  double rel_tol = 1e-4;
  double abs_tol = 1e-4;
  int fixed_steps = 0;      // > 0: fixed-step RK4 with that many steps
  int max_steps = 1000000;
  double t_floor = 1e-5;    // integrate on [t_floor, 1]
  DivergenceMode divergence = DivergenceMode::automatic;
  int hutchinson_probes = 3;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Probability-flow ODE d chi_i = -1/2 beta_i (chi_i + s_i) dt integrated
/// from the prior at t = 1 down to t_floor. Rows are samples.
Eigen::MatrixXd ode_sample(const ScoreFunction& score, const Schedule& schedule,
                           int n_samples, const OdeOptions& opts);

struct NllResult {
  Eigen::VectorXd per_sample_nats;  // -log p(chi) per sample, total nats
  double nats_per_dim = 0.0;
  double bits_per_dim = 0.0;
  double std_error_nats_per_dim = 0.0;
  int dim = 0;
};

/// Log-likelihood along the probability-flow ODE with the divergence term
/// accumulated by the configured estimator; rows of data_chi are samples in
/// the component basis (mean already removed).
NllResult ode_nll(const ScoreFunction& score, const Schedule& schedule,
                  const Eigen::MatrixXd& data_chi, const OdeOptions& opts);

/// Adaptive Dormand-Prince 5(4) step integrator; f(t, y) -> dy/dt. Supports
/// t1 < t0. Throws when the tolerance cannot be met within max_steps.
Eigen::VectorXd integrate_rk45(
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f, double t0,
    double t1, Eigen::VectorXd y0, double rel_tol, double abs_tol, int max_steps);

/// Classic fixed-step RK4 with `steps` uniform steps.
Eigen::VectorXd integrate_rk4_fixed(
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f, double t0,
    double t1, Eigen::VectorXd y0, int steps);

/// Splits [0, n) across `threads` workers; fn(i) must be independent per i.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace gud

#endif  // GUD_PROCESS_HPP
