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

#ifndef GUD_DATA_HPP
#define GUD_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gud/basis.hpp"
#include "gud/process.hpp"

namespace gud {

/// Raw quantized image stack as stored in the GUDIMGS container.
struct RawImages {
  TensorShape shape;
  int count = 0;
  std::vector<std::uint8_t> pixels;  // count * dim(), row-major per image
};

/// Preprocessed dataset. `samples` holds the centered values used by the
/// diffusion pipeline; `dequantized` keeps the uncentered values so inverse
/// preprocessing is bitwise and re-quantization recovers the raw integers.
struct Dataset {
  TensorShape shape;
  Eigen::MatrixXd samples;      // N x d, centered
  Eigen::MatrixXd dequantized;  // N x d, uncentered (empty for synthetic data)
  Eigen::VectorXd mean;         // subtracted mean (training split)
  int quant_levels = 0;         // 0 for synthetic/unquantized data
  std::vector<std::uint8_t> split;  // 0 = train, 1 = test

  int count() const { return static_cast<int>(samples.rows()); }
  int dim() const { return static_cast<int>(samples.cols()); }
  int train_count() const;
  Eigen::MatrixXd train_samples() const;
};

RawImages load_images(const std::string& path);
void save_images(const std::string& path, const RawImages& images);

/// x = 2 (raw + u)/levels - 1 with u ~ U[0,1) from per-sample streams, then
/// the empirical mean of the training split (the first train_count samples,
/// all by default) is removed and stored. Dequantization is fixed once per
/// load.
Dataset dequantize_and_center(const RawImages& raw, int levels, std::uint64_t seed,
                              int train_count = -1);

/// Re-quantizes dequantized values back to the raw integers.
RawImages requantize(const Dataset& data);

/// N exact mixture draws; deterministic given the seed.
Dataset synth_mixture(const GaussianMixture& mixture, int n, std::uint64_t seed);

/// Flat CSV pixel dump (one sample per line, integer values) -> RawImages.
RawImages images_from_csv(const std::string& path, const TensorShape& shape, int levels);
void images_to_csv(const std::string& path, const RawImages& images);

}  // namespace gud

#endif  // GUD_DATA_HPP
