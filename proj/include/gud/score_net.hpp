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

#ifndef GUD_SCORE_NET_HPP
#define GUD_SCORE_NET_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gud/process.hpp"
#include "gud/rng.hpp"
#include "gud/schedule.hpp"

namespace gud {

/// Fully-connected residual noise-prediction network. The input concatenates
/// the noised components chi_t with the noising state gamma and per-component
/// position labels; the output is the predicted noise (the implied score is
/// -eps_hat / sigma). Hidden layers of equal width carry residual
/// connections; the final layer is zero-initialized so a fresh network
/// predicts eps_hat = 0.
struct MlpParams {
  int dim = 0;          // d: components, also output width
  int label_width = 0;  // position-label block width (usually d)
  std::vector<int> hidden;
  std::vector<Eigen::MatrixXd> weights;  // hidden.size() + 1 layers
  std::vector<Eigen::VectorXd> biases;

  // Input conditioning: gamma is mapped to (gamma - center)/half, labels are
  // multiplied by label_scale. Fixed at construction, stored in checkpoints.
  double gamma_center = 0.0;
  double gamma_half = 15.0;
  double label_scale = 1.0;

  int input_width() const { return 2 * dim + label_width; }
  void validate() const;
};

MlpParams init_mlp(int dim, int label_width, const std::vector<int>& hidden,
                   std::uint64_t seed);

/// Deterministic forward pass for a single input.
Eigen::VectorXd predict_eps(const MlpParams& params, const Eigen::VectorXd& chi_t,
                            const NoisingState& state, const Eigen::VectorXd& labels);

/// Denoising score-matching loss. With the sigma^2 weighting the loss reduces
/// algebraically to mean_i ||eps_hat_i - eps_i||^2; this reduced form is what
/// is computed. Rows of chi0/eps are samples; t holds per-sample times.
double dsm_loss(const MlpParams& params, const Eigen::MatrixXd& chi0,
                const Schedule& schedule, const Eigen::VectorXd& t,
                const Eigen::MatrixXd& eps, const Eigen::VectorXd& labels);

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Exact reverse-mode gradients of dsm_loss; also returns the loss value.
double dsm_loss_grad(const MlpParams& params, const Eigen::MatrixXd& chi0,
                     const Schedule& schedule, const Eigen::VectorXd& t,
                     const Eigen::MatrixXd& eps, const Eigen::VectorXd& labels,
                     MlpGrads& grads);

struct TrainConfig {
  int batch_size = 128;
  int steps = 20000;
  double learning_rate = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;
  std::vector<int> hidden = {256, 256, 256};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Draws a schedule for one training batch (parameter randomization).
using ScheduleSampler = std::function<Schedule(RandomStream&)>;

struct TrainResult {
  MlpParams params;  // raw
  MlpParams ema;     // exponential moving average, used for evaluation
  std::vector<double> loss_history;
};

/// Optimizer loop: per-batch schedule draw, per-sample uniform t and noise,
/// adaptive-moment updates, EMA tracking. Deterministic given the seed.
/// Aborts when the loss stays above 10x its initial value for 100
/// consecutive steps. `on_step(step, loss)` is optional progress reporting.
TrainResult train(const TrainConfig& config, const Eigen::MatrixXd& data_chi,
                  const Eigen::VectorXd& labels, const ScheduleSampler& schedules,
                  const std::function<void(int, double)>& on_step = nullptr);

/// ema <- decay * ema + (1 - decay) * raw, elementwise over all parameters.
void ema_blend(MlpParams& ema, const MlpParams& raw, double decay);

/// Score adapter: score(chi, state) = -predict_eps(chi, state, labels)/sigma.
class NetScore : public ScoreFunction {
 public:
  NetScore(MlpParams params, Eigen::VectorXd labels);
  Eigen::VectorXd score(const Eigen::VectorXd& chi, const NoisingState& state) const override;

 private:
  MlpParams params_;
  Eigen::VectorXd labels_;
};

/// Checkpoint container holding raw and EMA parameters.
void save_checkpoint(const std::string& path, const MlpParams& raw, const MlpParams& ema);
void load_checkpoint(const std::string& path, MlpParams& raw, MlpParams& ema);

}  // namespace gud

#endif  // GUD_SCORE_NET_HPP
