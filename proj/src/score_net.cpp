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

#include "gud/score_net.hpp"

#include <cmath>
#include <stdexcept>

namespace gud {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// SiLU activation x * sigmoid(x), applied elementwise.
Eigen::MatrixXd silu(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double x) { return x * sigmoid(x); });
}

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  });
}

}  // namespace

void MlpParams::validate() const {
  if (dim < 1 || label_width < 0) throw std::invalid_argument("invalid network dimensions");
  if (hidden.empty()) throw std::invalid_argument("at least one hidden layer required");
  if (weights.size() != hidden.size() + 1 || biases.size() != weights.size())
    throw std::invalid_argument("layer count mismatch");
  int in = input_width();
  for (size_t l = 0; l < weights.size(); ++l) {
    const int out = (l == hidden.size()) ? dim : hidden[l];
    if (weights[l].rows() != out || weights[l].cols() != in || biases[l].size() != out)
      throw std::invalid_argument("layer shape mismatch");
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw std::invalid_argument("parameters must be finite");
    in = out;
  }
  if (!(gamma_half > 0.0) || !(label_scale > 0.0))
    throw std::invalid_argument("conditioning scales must be positive");
}

MlpParams init_mlp(int dim, int label_width, const std::vector<int>& hidden,
                   std::uint64_t seed) {
  MlpParams p;
  p.dim = dim;
  p.label_width = label_width;
  p.hidden = hidden;
  RandomStream rng(seed);
  int in = p.input_width();
  for (size_t l = 0; l < hidden.size(); ++l) {
    const int out = hidden[l];
    Eigen::MatrixXd w(out, in);
    const double scale = std::sqrt(2.0 / in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) w(i, j) = scale * rng.normal();
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(out));
    in = out;
  }
  p.weights.push_back(Eigen::MatrixXd::Zero(dim, in));  // eps_hat = 0 at init
  p.biases.push_back(Eigen::VectorXd::Zero(dim));
  p.validate();
  return p;
}

namespace {

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per hidden layer
  std::vector<Eigen::MatrixXd> post;  // layer outputs (after residual add)
};

// Columns of x are samples. Hidden layers of equal width use residual
// connections h <- h + silu(W h + b).
Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& x,
                            ForwardCache* cache) {
  Eigen::MatrixXd h = x;
  const size_t n_hidden = p.hidden.size();
  for (size_t l = 0; l < n_hidden; ++l) {
    Eigen::MatrixXd z = (p.weights[l] * h).colwise() + p.biases[l];
    Eigen::MatrixXd a = silu(z);
    const bool residual = (h.rows() == a.rows());
    Eigen::MatrixXd out = residual ? (h + a).eval() : a;
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(out);
    }
    h = std::move(out);
  }
  return (p.weights[n_hidden] * h).colwise() + p.biases[n_hidden];
}

Eigen::MatrixXd assemble_inputs(const MlpParams& p, const Eigen::MatrixXd& chi_t_cols,
                                const Eigen::MatrixXd& gamma_cols,
                                const Eigen::VectorXd& labels) {
  const Eigen::Index n = chi_t_cols.cols();
  if (labels.size() != p.label_width) throw std::invalid_argument("label width mismatch");
  Eigen::MatrixXd x(p.input_width(), n);
  x.topRows(p.dim) = chi_t_cols;
  x.middleRows(p.dim, p.dim) =
      (gamma_cols.array() - p.gamma_center).matrix() / p.gamma_half;
  x.bottomRows(p.label_width) = (labels * p.label_scale).replicate(1, n);
  return x;
}

}  // namespace

Eigen::VectorXd predict_eps(const MlpParams& params, const Eigen::VectorXd& chi_t,
                            const NoisingState& state, const Eigen::VectorXd& labels) {
  if (chi_t.size() != params.dim || state.dim() != params.dim)
    throw std::invalid_argument("dimension mismatch");
  Eigen::MatrixXd x = assemble_inputs(params, chi_t, state.gamma, labels);
  return mlp_forward(params, x, nullptr).col(0);
}

namespace {

// Builds the batch inputs and targets for the reduced DSM objective.
void make_batch(const MlpParams& params, const Eigen::MatrixXd& chi0,
                const Schedule& schedule, const Eigen::VectorXd& t,
                const Eigen::MatrixXd& eps, const Eigen::VectorXd& labels,
                Eigen::MatrixXd& x, Eigen::MatrixXd& eps_cols) {
  const Eigen::Index n = chi0.rows();
  const int d = params.dim;
  if (eps.rows() != n || t.size() != n || chi0.cols() != d || eps.cols() != d)
    throw std::invalid_argument("batch shape mismatch");
  Eigen::MatrixXd chi_t(d, n), gamma(d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const NoisingState state = schedule.state(t[i]);
    chi_t.col(i) = state.alpha.cwiseProduct(chi0.row(i).transpose()) +
                   state.sigma.cwiseProduct(eps.row(i).transpose());
    gamma.col(i) = state.gamma;
  }
  x = assemble_inputs(params, chi_t, gamma, labels);
  eps_cols = eps.transpose();
}

}  // namespace

double dsm_loss(const MlpParams& params, const Eigen::MatrixXd& chi0,
                const Schedule& schedule, const Eigen::VectorXd& t,
                const Eigen::MatrixXd& eps, const Eigen::VectorXd& labels) {
  Eigen::MatrixXd x, eps_cols;
  make_batch(params, chi0, schedule, t, eps, labels, x, eps_cols);
  const Eigen::MatrixXd out = mlp_forward(params, x, nullptr);
  return (out - eps_cols).squaredNorm() / double(chi0.rows());
}

double dsm_loss_grad(const MlpParams& params, const Eigen::MatrixXd& chi0,
                     const Schedule& schedule, const Eigen::VectorXd& t,
                     const Eigen::MatrixXd& eps, const Eigen::VectorXd& labels,
                     MlpGrads& grads) {
  Eigen::MatrixXd x, eps_cols;
  make_batch(params, chi0, schedule, t, eps, labels, x, eps_cols);
  const Eigen::Index n = chi0.rows();
  const size_t n_hidden = params.hidden.size();

  ForwardCache cache;
  const Eigen::MatrixXd out = mlp_forward(params, x, &cache);
  const double loss = (out - eps_cols).squaredNorm() / double(n);

  grads.weights.assign(params.weights.size(), Eigen::MatrixXd());
  grads.biases.assign(params.biases.size(), Eigen::VectorXd());

  // d loss / d out
  Eigen::MatrixXd delta = 2.0 * (out - eps_cols) / double(n);

  const Eigen::MatrixXd& last_in = n_hidden > 0 ? cache.post[n_hidden - 1] : x;
  grads.weights[n_hidden] = delta * last_in.transpose();
  grads.biases[n_hidden] = delta.rowwise().sum();
  Eigen::MatrixXd dh = params.weights[n_hidden].transpose() * delta;

  for (size_t l = n_hidden; l-- > 0;) {
    const Eigen::MatrixXd& input = (l == 0) ? x : cache.post[l - 1];
    const bool residual = (input.rows() == cache.pre[l].rows());
    Eigen::MatrixXd dz = dh.cwiseProduct(silu_grad(cache.pre[l]));
    grads.weights[l] = dz * input.transpose();
    grads.biases[l] = dz.rowwise().sum();
    Eigen::MatrixXd dinput = params.weights[l].transpose() * dz;
    dh = residual ? (dinput + dh).eval() : dinput;
  }
  return loss;
}

void TrainConfig::validate() const {
  if (batch_size < 1 || steps < 1) throw std::invalid_argument("sizes must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(ema_decay > 0.0 && ema_decay < 1.0))
    throw std::invalid_argument("EMA decay must lie in (0, 1)");
  if (hidden.empty()) throw std::invalid_argument("at least one hidden layer required");
}

namespace {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  explicit AdamState(const MlpParams& p) {
    for (const auto& w : p.weights) {
      mw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
      vw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : p.biases) {
      mb.push_back(Eigen::VectorXd::Zero(b.size()));
      vb.push_back(Eigen::VectorXd::Zero(b.size()));
    }
  }
};

void adam_update(MlpParams& p, AdamState& adam, const MlpGrads& grads,
                 const TrainConfig& cfg, int step_1based) {
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step_1based);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step_1based);
  const double lr = cfg.learning_rate;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    adam.mw[l] = cfg.adam_beta1 * adam.mw[l] + (1.0 - cfg.adam_beta1) * grads.weights[l];
    adam.vw[l] = cfg.adam_beta2 * adam.vw[l] +
                 (1.0 - cfg.adam_beta2) * grads.weights[l].cwiseProduct(grads.weights[l]);
    p.weights[l] -=
        lr * (adam.mw[l] / bc1)
                 .cwiseQuotient(((adam.vw[l] / bc2).cwiseSqrt().array() + cfg.adam_eps).matrix());
    adam.mb[l] = cfg.adam_beta1 * adam.mb[l] + (1.0 - cfg.adam_beta1) * grads.biases[l];
    adam.vb[l] = cfg.adam_beta2 * adam.vb[l] +
                 (1.0 - cfg.adam_beta2) * grads.biases[l].cwiseProduct(grads.biases[l]);
    p.biases[l] -=
        lr * (adam.mb[l] / bc1)
                 .cwiseQuotient(((adam.vb[l] / bc2).cwiseSqrt().array() + cfg.adam_eps).matrix());
  }
}

}  // namespace

void ema_blend(MlpParams& ema, const MlpParams& raw, double decay) {
  for (size_t l = 0; l < raw.weights.size(); ++l) {
    ema.weights[l] = decay * ema.weights[l] + (1.0 - decay) * raw.weights[l];
    ema.biases[l] = decay * ema.biases[l] + (1.0 - decay) * raw.biases[l];
  }
}

TrainResult train(const TrainConfig& config, const Eigen::MatrixXd& data_chi,
                  const Eigen::VectorXd& labels, const ScheduleSampler& schedules,
                  const std::function<void(int, double)>& on_step) {
  config.validate();
  const int n_data = static_cast<int>(data_chi.rows());
  const int d = static_cast<int>(data_chi.cols());
  if (n_data < 1 || d < 1) throw std::invalid_argument("empty training data");

  RandomStream rng(config.seed);

  // Conditioning ranges from a few schedule draws; fixed before training.
  double g_lo = 1e300, g_hi = -1e300;
  {
    RandomStream probe = rng.split(0);
    for (int rep = 0; rep < 8; ++rep) {
      const Schedule s = schedules(probe);
      for (int k = 0; k <= 10; ++k) {
        const Eigen::VectorXd g = s.gamma(k / 10.0);
        g_lo = std::min(g_lo, g.minCoeff());
        g_hi = std::max(g_hi, g.maxCoeff());
      }
    }
  }

  MlpParams params = init_mlp(d, static_cast<int>(labels.size()), config.hidden,
                              rng.split(1).seed());
  params.gamma_center = 0.5 * (g_lo + g_hi);
  params.gamma_half = std::max(1.0, 0.5 * (g_hi - g_lo));
  params.label_scale = 1.0 / std::max(1.0, labels.cwiseAbs().maxCoeff());
  MlpParams ema = params;

  AdamState adam(params);
  MlpGrads grads;
  TrainResult result;
  result.loss_history.reserve(config.steps);

  RandomStream step_rng = rng.split(2);
  double initial_loss = 0.0;
  int divergent_streak = 0;

  for (int step = 0; step < config.steps; ++step) {
    const Schedule schedule = schedules(step_rng);
    Eigen::MatrixXd chi0(config.batch_size, d), eps(config.batch_size, d);
    Eigen::VectorXd t(config.batch_size);
    for (int i = 0; i < config.batch_size; ++i) {
      chi0.row(i) = data_chi.row(step_rng.uniform_index(n_data));
      t[i] = step_rng.uniform();
      for (int j = 0; j < d; ++j) eps(i, j) = step_rng.normal();
    }

    const double loss = dsm_loss_grad(params, chi0, schedule, t, eps, labels, grads);
    if (!std::isfinite(loss)) throw std::runtime_error("training loss is not finite");
    adam_update(params, adam, grads, config, step + 1);
    ema_blend(ema, params, config.ema_decay);
    result.loss_history.push_back(loss);
    if (on_step) on_step(step, loss);

    if (step == 0) initial_loss = loss;
    divergent_streak = (loss > 10.0 * initial_loss) ? divergent_streak + 1 : 0;
    if (divergent_streak >= 100)
      throw std::runtime_error("training diverged: loss above 10x its initial value for 100 steps");
  }

  result.params = std::move(params);
  result.ema = std::move(ema);
  return result;
}

NetScore::NetScore(MlpParams params, Eigen::VectorXd labels)
    : params_(std::move(params)), labels_(std::move(labels)) {
  params_.validate();
  if (labels_.size() != params_.label_width)
    throw std::invalid_argument("label width mismatch");
}

Eigen::VectorXd NetScore::score(const Eigen::VectorXd& chi, const NoisingState& state) const {
  const Eigen::VectorXd eps_hat = predict_eps(params_, chi, state, labels_);
  return -eps_hat.cwiseQuotient(state.sigma);
}

}  // namespace gud
