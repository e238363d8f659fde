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

#include "gud/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gud/io.hpp"
#include "gud/rng.hpp"

namespace gud {

int Dataset::train_count() const {
  int n = 0;
  for (std::uint8_t s : split) n += (s == 0);
  return n;
}

Eigen::MatrixXd Dataset::train_samples() const {
  Eigen::MatrixXd out(train_count(), dim());
  int row = 0;
  for (int i = 0; i < count(); ++i)
    if (split[i] == 0) out.row(row++) = samples.row(i);
  return out;
}

RawImages load_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  expect_magic(is, "GUDIMGS", "image");
  if (read_u8(is) != 1) throw std::runtime_error("unsupported image container version");
  RawImages raw;
  raw.count = static_cast<int>(read_u32(is));
  raw.shape.height = static_cast<int>(read_u32(is));
  raw.shape.width = static_cast<int>(read_u32(is));
  raw.shape.channels = static_cast<int>(read_u32(is));
  if (raw.shape.height < 0 || raw.shape.width < 0 || raw.shape.channels < 0 || raw.count < 0)
    throw std::runtime_error("malformed image header");
  const std::size_t payload =
      static_cast<std::size_t>(raw.count) * static_cast<std::size_t>(raw.shape.dim());
  raw.pixels.resize(payload);
  if (payload > 0) {
    is.read(reinterpret_cast<char*>(raw.pixels.data()),
            static_cast<std::streamsize>(payload));
    if (static_cast<std::size_t>(is.gcount()) != payload)
      throw std::runtime_error("truncated image payload");
  }
  return raw;
}

void save_images(const std::string& path, const RawImages& images) {
  if (static_cast<std::size_t>(images.count) * images.shape.dim() != images.pixels.size())
    throw std::invalid_argument("pixel payload does not match header");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_magic(os, "GUDIMGS");
  write_u8(os, 1);
  write_u32(os, static_cast<std::uint32_t>(images.count));
  write_u32(os, static_cast<std::uint32_t>(images.shape.height));
  write_u32(os, static_cast<std::uint32_t>(images.shape.width));
  write_u32(os, static_cast<std::uint32_t>(images.shape.channels));
  if (!images.pixels.empty())
    os.write(reinterpret_cast<const char*>(images.pixels.data()),
             static_cast<std::streamsize>(images.pixels.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

Dataset dequantize_and_center(const RawImages& raw, int levels, std::uint64_t seed,
                              int train_count) {
  if (levels < 2 || levels > 256) throw std::invalid_argument("levels must lie in [2, 256]");
  const int d = raw.shape.dim();
  const int n = raw.count;
  if (train_count < 0) train_count = n;
  if (train_count < 1 || train_count > n)
    throw std::invalid_argument("invalid training split size");

  Dataset data;
  data.shape = raw.shape;
  data.quant_levels = levels;
  data.dequantized.resize(n, d);
  data.split.assign(n, 1);
  for (int i = 0; i < train_count; ++i) data.split[i] = 0;

  RandomStream master(seed);
  for (int i = 0; i < n; ++i) {
    RandomStream rng = master.split(i);
    for (int j = 0; j < d; ++j) {
      const int v = raw.pixels[static_cast<std::size_t>(i) * d + j];
      if (v >= levels) throw std::invalid_argument("pixel value outside [0, levels)");
      data.dequantized(i, j) = 2.0 * (v + rng.uniform()) / levels - 1.0;
    }
  }

  data.mean = data.dequantized.topRows(train_count).colwise().mean();
  data.samples = data.dequantized.rowwise() - data.mean.transpose();
  return data;
}

RawImages requantize(const Dataset& data) {
  if (data.quant_levels == 0 || data.dequantized.size() == 0)
    throw std::invalid_argument("dataset carries no quantization metadata");
  RawImages raw;
  raw.shape = data.shape;
  raw.count = data.count();
  raw.pixels.resize(static_cast<std::size_t>(raw.count) * data.dim());
  for (int i = 0; i < raw.count; ++i) {
    for (int j = 0; j < data.dim(); ++j) {
      const double x = data.dequantized(i, j);
      const double bin = std::floor((x + 1.0) * data.quant_levels / 2.0);
      const double clipped = std::max(0.0, std::min<double>(data.quant_levels - 1, bin));
      raw.pixels[static_cast<std::size_t>(i) * data.dim() + j] =
          static_cast<std::uint8_t>(clipped);
    }
  }
  return raw;
}

Dataset synth_mixture(const GaussianMixture& mixture, int n, std::uint64_t seed) {
  mixture.validate();
  if (n < 0) throw std::invalid_argument("sample count must be nonnegative");
  const int d = mixture.dim();
  Dataset data;
  data.shape = TensorShape{1, d, 1};
  data.samples.resize(n, d);
  data.mean = Eigen::VectorXd::Zero(d);
  data.split.assign(n, 0);

  RandomStream master(seed);
  for (int i = 0; i < n; ++i) {
    RandomStream rng = master.split(i);
    const double u = rng.uniform();
    int k = 0;
    double acc = 0.0;
    for (; k < mixture.components() - 1; ++k) {
      acc += mixture.weights[k];
      if (u < acc) break;
    }
    for (int j = 0; j < d; ++j)
      data.samples(i, j) =
          mixture.means(k, j) + std::sqrt(mixture.variances(k, j)) * rng.normal();
  }
  return data;
}

RawImages images_from_csv(const std::string& path, const TensorShape& shape, int levels) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  RawImages raw;
  raw.shape = shape;
  const int d = shape.dim();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    int col = 0;
    while (std::getline(ls, tok, ',')) {
      const int v = std::stoi(tok);
      if (v < 0 || v >= levels)
        throw std::runtime_error("csv pixel value outside [0, levels)");
      raw.pixels.push_back(static_cast<std::uint8_t>(v));
      ++col;
    }
    if (col != d) throw std::runtime_error("csv row length does not match shape");
    ++raw.count;
  }
  return raw;
}

void images_to_csv(const std::string& path, const RawImages& images) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  const int d = images.shape.dim();
  for (int i = 0; i < images.count; ++i) {
    for (int j = 0; j < d; ++j) {
      if (j) os << ',';
      os << static_cast<int>(images.pixels[static_cast<std::size_t>(i) * d + j]);
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace gud
