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

#include "gud/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gud/score_net.hpp"

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace gud {

void write_u8(std::ostream& os, std::uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), 1);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}

void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}

void write_f64_array(std::ostream& os, const double* data, std::size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(8 * n));
}

namespace {

void read_bytes(std::istream& is, void* dst, std::size_t n) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw std::runtime_error("truncated file");
}

}  // namespace

std::uint8_t read_u8(std::istream& is) {
  std::uint8_t v;
  read_bytes(is, &v, 1);
  return v;
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v;
  read_bytes(is, &v, 4);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v;
  read_bytes(is, &v, 8);
  return v;
}

double read_f64(std::istream& is) {
  double v;
  read_bytes(is, &v, 8);
  return v;
}

void read_f64_array(std::istream& is, double* data, std::size_t n) {
  read_bytes(is, data, 8 * n);
}

void write_magic(std::ostream& os, const char* magic) {
  os.write(magic, static_cast<std::streamsize>(std::strlen(magic)));
}

void expect_magic(std::istream& is, const char* magic, const std::string& what) {
  const std::size_t n = std::strlen(magic);
  std::vector<char> buf(n);
  read_bytes(is, buf.data(), n);
  if (std::memcmp(buf.data(), magic, n) != 0)
    throw std::runtime_error("not a " + what + " file (bad magic)");
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return is;
}

}  // namespace

// ---------------------------------------------------------------------------
// GUDBASIS

void save_basis(const std::string& path, const BasisSpec& basis) {
  basis.validate();
  std::ofstream os = open_out(path);
  write_magic(os, "GUDBASIS");
  write_u8(os, 1);  // version
  write_u8(os, static_cast<std::uint8_t>(basis.kind));
  write_u32(os, static_cast<std::uint32_t>(basis.shape.height));
  write_u32(os, static_cast<std::uint32_t>(basis.shape.width));
  write_u32(os, static_cast<std::uint32_t>(basis.shape.channels));
  write_u32(os, static_cast<std::uint32_t>(basis.levels));
  const std::uint64_t d = static_cast<std::uint64_t>(basis.dim());
  write_u64(os, d);
  write_f64_array(os, basis.scaling.data(), d);
  write_f64_array(os, basis.labels.data(), d);
  if (basis.kind == BasisKind::dense_orthogonal) {
    const std::uint64_t n = static_cast<std::uint64_t>(basis.u.rows());
    write_u64(os, n);
    // row-major
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = basis.u;
    write_f64_array(os, rm.data(), n * n);
  } else if (basis.kind == BasisKind::permutation) {
    for (int p : basis.perm) write_u64(os, static_cast<std::uint64_t>(p));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

BasisSpec load_basis(const std::string& path) {
  std::ifstream is = open_in(path);
  expect_magic(is, "GUDBASIS", "basis");
  const std::uint8_t version = read_u8(is);
  if (version != 1) throw std::runtime_error("unsupported basis container version");
  BasisSpec basis;
  basis.kind = static_cast<BasisKind>(read_u8(is));
  basis.shape.height = static_cast<int>(read_u32(is));
  basis.shape.width = static_cast<int>(read_u32(is));
  basis.shape.channels = static_cast<int>(read_u32(is));
  basis.levels = static_cast<int>(read_u32(is));
  const std::uint64_t d = read_u64(is);
  if (d != static_cast<std::uint64_t>(basis.shape.dim()))
    throw std::runtime_error("basis container dimension mismatch");
  basis.scaling.resize(d);
  basis.labels.resize(d);
  read_f64_array(is, basis.scaling.data(), d);
  read_f64_array(is, basis.labels.data(), d);
  switch (basis.kind) {
    case BasisKind::dense_orthogonal: {
      const std::uint64_t n = read_u64(is);
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(n, n);
      read_f64_array(is, rm.data(), n * n);
      basis.u = rm;
      break;
    }
    case BasisKind::permutation: {
      basis.perm.resize(d);
      for (std::uint64_t i = 0; i < d; ++i) basis.perm[i] = static_cast<int>(read_u64(is));
      break;
    }
    case BasisKind::fft2_real: {
      // Rows are rebuilt deterministically from the shape.
      const BasisSpec rebuilt = build_fft_basis(basis.shape);
      basis.u = rebuilt.u;
      break;
    }
    case BasisKind::haar:
      basis.haar = haar_layout(basis.shape, basis.levels);
      break;
    case BasisKind::identity:
      break;
  }
  basis.validate();
  return basis;
}

// ---------------------------------------------------------------------------
// GUDSAMPS

void save_samples(const std::string& path, const SampleTensor& samples) {
  std::ofstream os = open_out(path);
  write_magic(os, "GUDSAMPS");
  write_u8(os, 1);
  write_u8(os, samples.component_space ? 1 : 0);
  write_u32(os, static_cast<std::uint32_t>(samples.values.rows()));
  write_u32(os, static_cast<std::uint32_t>(samples.shape.height));
  write_u32(os, static_cast<std::uint32_t>(samples.shape.width));
  write_u32(os, static_cast<std::uint32_t>(samples.shape.channels));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm =
      samples.values;
  write_f64_array(os, rm.data(), static_cast<std::size_t>(rm.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

SampleTensor load_samples(const std::string& path) {
  std::ifstream is = open_in(path);
  expect_magic(is, "GUDSAMPS", "sample");
  if (read_u8(is) != 1) throw std::runtime_error("unsupported sample container version");
  SampleTensor out;
  out.component_space = read_u8(is) != 0;
  const std::uint32_t n = read_u32(is);
  out.shape.height = static_cast<int>(read_u32(is));
  out.shape.width = static_cast<int>(read_u32(is));
  out.shape.channels = static_cast<int>(read_u32(is));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
      n, out.shape.dim());
  read_f64_array(is, rm.data(), static_cast<std::size_t>(rm.size()));
  out.values = rm;
  return out;
}

// ---------------------------------------------------------------------------
// GUDNET

namespace {

void write_params(std::ostream& os, const MlpParams& p) {
  write_u32(os, static_cast<std::uint32_t>(p.dim));
  write_u32(os, static_cast<std::uint32_t>(p.label_width));
  write_u32(os, static_cast<std::uint32_t>(p.hidden.size()));
  for (int h : p.hidden) write_u32(os, static_cast<std::uint32_t>(h));
  write_f64(os, p.gamma_center);
  write_f64(os, p.gamma_half);
  write_f64(os, p.label_scale);
  for (size_t l = 0; l < p.weights.size(); ++l) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm =
        p.weights[l];
    write_f64_array(os, rm.data(), static_cast<std::size_t>(rm.size()));
    write_f64_array(os, p.biases[l].data(), static_cast<std::size_t>(p.biases[l].size()));
  }
}

MlpParams read_params(std::istream& is) {
  MlpParams p;
  p.dim = static_cast<int>(read_u32(is));
  p.label_width = static_cast<int>(read_u32(is));
  const std::uint32_t n_hidden = read_u32(is);
  for (std::uint32_t i = 0; i < n_hidden; ++i)
    p.hidden.push_back(static_cast<int>(read_u32(is)));
  p.gamma_center = read_f64(is);
  p.gamma_half = read_f64(is);
  p.label_scale = read_f64(is);
  int in = p.input_width();
  for (std::uint32_t l = 0; l <= n_hidden; ++l) {
    const int out = (l == n_hidden) ? p.dim : p.hidden[l];
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(out, in);
    read_f64_array(is, rm.data(), static_cast<std::size_t>(rm.size()));
    Eigen::VectorXd b(out);
    read_f64_array(is, b.data(), static_cast<std::size_t>(out));
    p.weights.push_back(rm);
    p.biases.push_back(std::move(b));
    in = out;
  }
  p.validate();
  return p;
}

}  // namespace

void save_checkpoint(const std::string& path, const MlpParams& raw, const MlpParams& ema) {
  raw.validate();
  ema.validate();
  std::ofstream os = open_out(path);
  write_magic(os, "GUDNET");
  write_u8(os, 1);
  write_u8(os, 2);  // content flag: 0 raw, 1 ema, 2 both
  write_params(os, raw);
  write_params(os, ema);
  if (!os) throw std::runtime_error("write failed: " + path);
}

void load_checkpoint(const std::string& path, MlpParams& raw, MlpParams& ema) {
  std::ifstream is = open_in(path);
  expect_magic(is, "GUDNET", "checkpoint");
  if (read_u8(is) != 1) throw std::runtime_error("unsupported checkpoint version");
  const std::uint8_t flag = read_u8(is);
  if (flag == 2) {
    raw = read_params(is);
    ema = read_params(is);
  } else {
    raw = read_params(is);
    ema = raw;
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    hash ^= data[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace gud
