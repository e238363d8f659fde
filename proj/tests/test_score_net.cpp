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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gud/score_net.hpp"
#include "oracles.hpp"

using namespace gud;

namespace {

Schedule unit_gaussian_schedule(int dim) {
  const Eigen::VectorXd log_var = Eigen::VectorXd::Zero(dim);
  return linear_softness_schedule(log_var, -log_var, 1.0, -7.0,
                                  noise_floor(log_var, 0.99));
}

// Collects all parameters into one flat vector (for FD checks).
Eigen::VectorXd flatten(const MlpParams& p) {
  std::vector<double> vals;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i)
      vals.push_back(p.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
      vals.push_back(p.biases[l][i]);
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
}

}  // namespace

TEST_CASE("zero-initialized final layer predicts zero noise") {
  const MlpParams p = init_mlp(3, 3, {16, 16}, 5);
  RandomStream rng(1);
  const NoisingState s = make_noising_state(rng.normal_vector(3));
  const Eigen::VectorXd out = predict_eps(p, rng.normal_vector(3), s, rng.normal_vector(3));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("outputs stay finite on random inputs, including clamped gamma") {
  MlpParams p = init_mlp(4, 4, {32, 32, 32}, 7);
  // Perturb the final layer so outputs are nontrivial.
  RandomStream rng(2);
  for (Eigen::Index i = 0; i < p.weights.back().size(); ++i)
    p.weights.back().data()[i] = 0.1 * rng.normal();
  for (int trial = 0; trial < 50; ++trial) {
    const NoisingState s = make_noising_state(1e9 * rng.normal_vector(4));
    const Eigen::VectorXd out =
        predict_eps(p, 5.0 * rng.normal_vector(4), s, rng.normal_vector(4));
    CHECK(out.allFinite());
  }
}

TEST_CASE("dsm loss of a perfect predictor is zero") {
  // The zero-initialized network predicts eps_hat = 0; with eps = 0 draws the
  // prediction is exact and the loss vanishes.
  const int d = 2, n = 8;
  const MlpParams p = init_mlp(d, d, {16}, 3);
  const Schedule schedule = unit_gaussian_schedule(d);
  RandomStream rng(3);
  Eigen::MatrixXd chi0(n, d);
  for (int i = 0; i < n; ++i) chi0.row(i) = rng.normal_vector(d).transpose();
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) t[i] = rng.uniform();
  const Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(n, d);
  CHECK(dsm_loss(p, chi0, schedule, t, eps, Eigen::VectorXd::Zero(d)) == 0.0);

  // And its gradients vanish as well (no residual to propagate).
  MlpGrads grads;
  dsm_loss_grad(p, chi0, schedule, t, eps, Eigen::VectorXd::Zero(d), grads);
  for (const auto& w : grads.weights) CHECK(w.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& b : grads.biases) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dsm loss of the zero predictor concentrates at d") {
  const int d = 3, n = 8192;
  const MlpParams p = init_mlp(d, d, {8}, 4);
  const Schedule schedule = unit_gaussian_schedule(d);
  RandomStream rng(4);
  Eigen::MatrixXd chi0(n, d), eps(n, d);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    chi0.row(i) = rng.normal_vector(d).transpose();
    eps.row(i) = rng.normal_vector(d).transpose();
    t[i] = rng.uniform();
  }
  const double loss = dsm_loss(p, chi0, schedule, t, eps, Eigen::VectorXd::Zero(d));
  CHECK(loss == doctest::Approx(double(d)).epsilon(0.06));
}

TEST_CASE("sigma^2-weighted score-matching form reduces to the noise objective") {
  // lambda_i |s_i - (-eps_i / sigma_i)|^2 with s_i = -eps_hat_i / sigma_i and
  // lambda_i = sigma_i^2 must equal |eps_hat_i - eps_i|^2 identically.
  const int d = 4, n = 16;
  MlpParams p = init_mlp(d, d, {24, 24}, 6);
  RandomStream rng(5);
  for (Eigen::Index i = 0; i < p.weights.back().size(); ++i)
    p.weights.back().data()[i] = 0.2 * rng.normal();

  const Schedule schedule = unit_gaussian_schedule(d);
  const Eigen::VectorXd labels = Eigen::VectorXd::Zero(d);
  double weighted = 0.0;
  Eigen::MatrixXd chi0(n, d), eps(n, d);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    chi0.row(i) = rng.normal_vector(d).transpose();
    eps.row(i) = rng.normal_vector(d).transpose();
    t[i] = rng.uniform();
    const NoisingState s = schedule.state(t[i]);
    const Eigen::VectorXd chi_t = s.alpha.cwiseProduct(chi0.row(i).transpose()) +
                                  s.sigma.cwiseProduct(eps.row(i).transpose());
    const Eigen::VectorXd eps_hat = predict_eps(p, chi_t, s, labels);
    for (int j = 0; j < d; ++j) {
      const double model_score = -eps_hat[j] / s.sigma[j];
      const double target_score = -eps(i, j) / s.sigma[j];
      weighted += s.sigma_sq[j] * (model_score - target_score) * (model_score - target_score);
    }
  }
  weighted /= n;
  const double reduced = dsm_loss(p, chi0, schedule, t, eps, labels);
  CHECK(weighted == doctest::Approx(reduced).epsilon(1e-10));
}

TEST_CASE("analytic gradients match central finite differences") {
  const int d = 3, n = 6;
  MlpParams p = init_mlp(d, d, {10, 10}, 8);
  RandomStream rng(6);
  for (Eigen::Index i = 0; i < p.weights.back().size(); ++i)
    p.weights.back().data()[i] = 0.3 * rng.normal();
  for (Eigen::Index i = 0; i < p.biases.back().size(); ++i)
    p.biases.back()[i] = 0.1 * rng.normal();

  const Schedule schedule = unit_gaussian_schedule(d);
  const Eigen::VectorXd labels = rng.normal_vector(d);
  Eigen::MatrixXd chi0(n, d), eps(n, d);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    chi0.row(i) = rng.normal_vector(d).transpose();
    eps.row(i) = rng.normal_vector(d).transpose();
    t[i] = rng.uniform();
  }

  MlpGrads grads;
  dsm_loss_grad(p, chi0, schedule, t, eps, labels, grads);

  auto loss_at = [&](MlpParams q) {
    return dsm_loss(q, chi0, schedule, t, eps, labels);
  };
  // Probe 10 random parameter slices across all layers.
  for (int probe = 0; probe < 10; ++probe) {
    const size_t layer = rng.uniform_index(p.weights.size());
    const bool bias = rng.uniform() < 0.3;
    const double h = 1e-6;
    double analytic, numeric;
    MlpParams up = p, dn = p;
    if (bias) {
      const Eigen::Index idx = rng.uniform_index(p.biases[layer].size());
      up.biases[layer][idx] += h;
      dn.biases[layer][idx] -= h;
      analytic = grads.biases[layer][idx];
    } else {
      const Eigen::Index idx = rng.uniform_index(p.weights[layer].size());
      up.weights[layer].data()[idx] += h;
      dn.weights[layer].data()[idx] -= h;
      analytic = grads.weights[layer].data()[idx];
    }
    numeric = (loss_at(up) - loss_at(dn)) / (2.0 * h);
    CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5));
  }
}

TEST_CASE("gradients stay finite under extreme noising states") {
  const int d = 2, n = 4;
  MlpParams p = init_mlp(d, d, {12, 12}, 9);
  RandomStream rng(7);
  for (Eigen::Index i = 0; i < p.weights.back().size(); ++i)
    p.weights.back().data()[i] = 0.2 * rng.normal();
  const Schedule wide = standard_schedule(d, -300.0, 300.0);  // clamped inside
  Eigen::MatrixXd chi0(n, d), eps(n, d);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    chi0.row(i) = rng.normal_vector(d).transpose();
    eps.row(i) = rng.normal_vector(d).transpose();
    t[i] = rng.uniform();
  }
  MlpGrads grads;
  const double loss =
      dsm_loss_grad(p, chi0, wide, t, eps, Eigen::VectorXd::Zero(d), grads);
  CHECK(std::isfinite(loss));
  for (const auto& w : grads.weights) CHECK(w.allFinite());
}

TEST_CASE("EMA blending converges geometrically to frozen parameters") {
  MlpParams raw = init_mlp(2, 2, {8}, 10);
  RandomStream rng(8);
  for (Eigen::Index i = 0; i < raw.weights[0].size(); ++i)
    raw.weights[0].data()[i] = rng.normal();
  MlpParams ema = init_mlp(2, 2, {8}, 11);  // different start
  const double decay = 0.9;
  double prev_gap = 1e300;
  for (int step = 0; step < 200; ++step) {
    ema_blend(ema, raw, decay);
    double gap = 0.0;
    for (size_t l = 0; l < raw.weights.size(); ++l)
      gap = std::max(gap, (ema.weights[l] - raw.weights[l]).cwiseAbs().maxCoeff());
    CHECK(gap <= prev_gap + 1e-15);
    prev_gap = gap;
  }
  CHECK(prev_gap < 1e-8);
}

TEST_CASE("training a 1-D unit Gaussian approaches the Bayes floor") {
  // Analytic floor: E_t[ alpha^2 / (alpha^2 + sigma^2) ] = E_t[alpha^2(t)].
  const Schedule schedule = unit_gaussian_schedule(1);
  const double floor = gud::testing::adaptive_simpson(
      [&](double t) {
        const NoisingState s = schedule.state(t);
        return s.alpha_sq[0] / (s.alpha_sq[0] + s.sigma_sq[0]);
      },
      0.0, 1.0);

  RandomStream rng(9);
  const int n = 4096;
  Eigen::MatrixXd data(n, 1);
  for (int i = 0; i < n; ++i) data(i, 0) = rng.normal();

  TrainConfig cfg;
  cfg.steps = 5000;
  cfg.batch_size = 128;
  cfg.hidden = {64, 64};
  cfg.seed = 12;
  const TrainResult result =
      train(cfg, data, Eigen::VectorXd::Zero(1),
            [&](RandomStream&) { return schedule; });

  double tail = 0.0;
  const int window = 500;
  for (int i = cfg.steps - window; i < cfg.steps; ++i) tail += result.loss_history[i];
  tail /= window;
  CHECK(tail == doctest::Approx(floor).epsilon(0.05));
  // The floor lower-bounds any predictor (up to minibatch noise).
  CHECK(tail > floor * 0.98);
}

TEST_CASE("training is bitwise deterministic given the seed") {
  RandomStream rng(10);
  Eigen::MatrixXd data(256, 2);
  for (int i = 0; i < 256; ++i) data.row(i) = rng.normal_vector(2).transpose();
  const Schedule schedule = unit_gaussian_schedule(2);
  TrainConfig cfg;
  cfg.steps = 50;
  cfg.batch_size = 32;
  cfg.hidden = {16, 16};
  cfg.seed = 77;
  auto sampler = [&](RandomStream&) { return schedule; };
  const TrainResult a = train(cfg, data, Eigen::VectorXd::Zero(2), sampler);
  const TrainResult b = train(cfg, data, Eigen::VectorXd::Zero(2), sampler);
  CHECK(flatten(a.params) == flatten(b.params));
  CHECK(flatten(a.ema) == flatten(b.ema));
}

TEST_CASE("divergent training aborts with a diagnostic") {
  RandomStream rng(11);
  Eigen::MatrixXd data(64, 1);
  for (int i = 0; i < 64; ++i) data(i, 0) = rng.normal();
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.batch_size = 16;
  cfg.hidden = {8};
  cfg.learning_rate = 1e5;  // guaranteed blow-up
  cfg.seed = 13;
  CHECK_THROWS_AS(train(cfg, data, Eigen::VectorXd::Zero(1),
                        [&](RandomStream&) { return unit_gaussian_schedule(1); }),
                  std::runtime_error);
}

TEST_CASE("checkpoints round-trip bitwise") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gud_net_io_test";
  fs::create_directories(dir);
  MlpParams raw = init_mlp(3, 3, {16, 16}, 14);
  RandomStream rng(12);
  for (auto& w : raw.weights)
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  raw.gamma_center = -1.5;
  raw.gamma_half = 5.5;
  raw.label_scale = 0.25;
  MlpParams ema = raw;
  for (auto& w : ema.weights)
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += 0.01;

  const std::string path = (dir / "net.gudnet").string();
  save_checkpoint(path, raw, ema);
  MlpParams raw2, ema2;
  load_checkpoint(path, raw2, ema2);
  CHECK(flatten(raw) == flatten(raw2));
  CHECK(flatten(ema) == flatten(ema2));
  CHECK(raw2.gamma_center == raw.gamma_center);
  CHECK(raw2.gamma_half == raw.gamma_half);
  CHECK(raw2.label_scale == raw.label_scale);
  fs::remove_all(dir);
}

TEST_CASE("NetScore implements -eps_hat / sigma") {
  MlpParams p = init_mlp(2, 2, {8}, 15);
  RandomStream rng(13);
  for (Eigen::Index i = 0; i < p.weights.back().size(); ++i)
    p.weights.back().data()[i] = 0.5 * rng.normal();
  const Eigen::VectorXd labels = rng.normal_vector(2);
  const NetScore score(p, labels);
  const NoisingState s = make_noising_state(Eigen::Vector2d(-1.0, 2.0));
  const Eigen::VectorXd chi = rng.normal_vector(2);
  const Eigen::VectorXd expected =
      -predict_eps(p, chi, s, labels).cwiseQuotient(s.sigma);
  CHECK(score.score(chi, s).isApprox(expected));
}
