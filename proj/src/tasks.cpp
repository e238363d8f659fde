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

#include "gud/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gud {

namespace {

int segment_steps(int steps_per_unit_time, double span) {
  return std::max(1, static_cast<int>(std::lround(steps_per_unit_time * span)));
}

}  // namespace

ExtensionResult extend_image(const ScoreFunction& score, const Schedule& column_sched,
                             const TensorShape& window_shape, int k, int cycles,
                             int steps_per_unit_time, std::uint64_t seed) {
  if (column_sched.family != ScheduleFamily::column)
    throw std::invalid_argument("extension requires a column schedule");
  const int L = column_sched.column_count;
  const double b = column_sched.softness_b;
  if (window_shape.width != L)
    throw std::invalid_argument("window width must equal the schedule column count");
  if (column_sched.dim() != window_shape.dim())
    throw std::invalid_argument("schedule group map does not match the window shape");
  if (k < 1 || cycles < 0) throw std::invalid_argument("invalid k or cycle count");

  const double dt = b / double(L - 1);
  if (k * dt > b + 1e-12)
    throw std::invalid_argument("insufficient softness: k * dt exceeds b");

  // Working time: as late as possible while the k leftmost columns are at the
  // reconstruction level when committed (t* - k dt <= onset of column k).
  const double t_work = std::min(1.0, b * double(L) / double(L - 1));

  const int height = window_shape.height, channels = window_shape.channels;
  const int d = window_shape.dim();
  const int strip_cols = k * cycles + L;
  ExtensionResult result;
  result.working_time = t_work;
  result.strip.resize(height * channels, strip_cols);

  auto copy_column = [&](const Eigen::VectorXd& window, int win_col, int strip_col) {
    for (int y = 0; y < height; ++y)
      for (int c = 0; c < channels; ++c)
        result.strip(y * channels + c, strip_col) =
            window[window_shape.flat_index(y, win_col, c)];
  };

  RandomStream master(seed);
  RandomStream init_rng = master.split(0);
  Eigen::VectorXd window = init_rng.normal_vector(d);
  window = reverse_sde_segment(score, column_sched, std::move(window), 1.0, t_work,
                               segment_steps(steps_per_unit_time, 1.0 - t_work), init_rng);

  for (int cycle = 0; cycle < cycles; ++cycle) {
    RandomStream rng = master.split(cycle + 1);
    const double t_commit = t_work - k * dt;
    window = reverse_sde_segment(score, column_sched, std::move(window), t_work, t_commit,
                                 segment_steps(steps_per_unit_time, k * dt), rng);

    const int first = cycle * k;
    for (int j = 0; j < k; ++j) copy_column(window, j, first + j);
    result.committed.emplace_back(first, first + k);

    // Shift left by k, append prior-noise columns; the relabeled columns are
    // back at their time-t* noising state by the shift identity.
    Eigen::VectorXd next(d);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < L - k; ++x)
        for (int c = 0; c < channels; ++c)
          next[window_shape.flat_index(y, x, c)] =
              window[window_shape.flat_index(y, x + k, c)];
      for (int x = L - k; x < L; ++x)
        for (int c = 0; c < channels; ++c)
          next[window_shape.flat_index(y, x, c)] = rng.normal();
    }
    window = std::move(next);
  }

  RandomStream final_rng = master.split(cycles + 1);
  window = reverse_sde_segment(score, column_sched, std::move(window), t_work, 0.0,
                               segment_steps(steps_per_unit_time, t_work), final_rng);
  for (int j = 0; j < L; ++j) copy_column(window, j, k * cycles + j);
  return result;
}

Eigen::MatrixXd reconstruct(const ScoreFunction& score, const Schedule& schedule,
                            const Eigen::VectorXd& chi0, double t_noise,
                            std::uint64_t seed, int n_variants, int steps_per_unit_time) {
  if (!(t_noise > 0.0 && t_noise < 1.0))
    throw std::invalid_argument("t_noise must lie in (0, 1)");
  if (n_variants < 1) throw std::invalid_argument("need at least one variant");
  if (chi0.size() != schedule.dim()) throw std::invalid_argument("dimension mismatch");

  RandomStream master(seed);
  RandomStream noise_rng = master.split(0);
  const NoisingState state = schedule.state(t_noise);
  const Eigen::VectorXd noised = forward_sample(chi0, state, noise_rng);

  Eigen::MatrixXd variants(n_variants, chi0.size());
  const int steps = segment_steps(steps_per_unit_time, t_noise);
  for (int v = 0; v < n_variants; ++v) {
    RandomStream rng = master.split(v + 1);
    variants.row(v) =
        reverse_sde_segment(score, schedule, noised, t_noise, 0.0, steps, rng).transpose();
  }
  return variants;
}

}  // namespace gud
