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

#ifndef GUD_TASKS_HPP
#define GUD_TASKS_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gud/basis.hpp"
#include "gud/process.hpp"
#include "gud/schedule.hpp"

namespace gud {

struct ExtensionResult {
  Eigen::MatrixXd strip;  // window height x (k * cycles + L), single channel rows
  std::vector<std::pair<int, int>> committed;  // per cycle: [first, last) strip columns
  double working_time = 0.0;                   // t* the window returns to each cycle
};

/// Sequential strip generation with a column schedule over L columns.
/// Each cycle denoises the window by k * dt with dt = b/(L-1), commits the k
/// leftmost columns, shifts the window and appends k prior-noise columns,
/// restoring the window to its pre-cycle noising state. After the last cycle
/// the window is denoised to t = 0 and appended, so the strip has
/// k * cycles + L columns. Requires k * dt <= b.
ExtensionResult extend_image(const ScoreFunction& score, const Schedule& column_sched,
                             const TensorShape& window_shape, int k, int cycles,
                             int steps_per_unit_time, std::uint64_t seed);

/// Forward-noises `chi0` to t_noise under the schedule (one shared draw) and
/// reverse-samples to t = 0 with a distinct sub-seed per variant. Rows of the
/// result are variants.
Eigen::MatrixXd reconstruct(const ScoreFunction& score, const Schedule& schedule,
                            const Eigen::VectorXd& chi0, double t_noise,
                            std::uint64_t seed, int n_variants, int steps_per_unit_time);

}  // namespace gud

#endif  // GUD_TASKS_HPP
