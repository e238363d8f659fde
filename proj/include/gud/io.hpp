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

#ifndef GUD_IO_HPP
#define GUD_IO_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gud/basis.hpp"

namespace gud {

// Little-endian binary primitives shared by the file containers.
void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
void write_f64_array(std::ostream& os, const double* data, std::size_t n);
std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
void read_f64_array(std::istream& is, double* data, std::size_t n);
void write_magic(std::ostream& os, const char* magic);
void expect_magic(std::istream& is, const char* magic, const std::string& what);

/// Sample tensor container ("GUDSAMPS"): N x shape float64 payload plus a
/// flag recording whether values live in data (pixel) or component space.
struct SampleTensor {
  TensorShape shape;
  bool component_space = false;
  Eigen::MatrixXd values;  // N x dim
};

void save_samples(const std::string& path, const SampleTensor& samples);
SampleTensor load_samples(const std::string& path);

/// Round-trip-safe decimal formatting for CSV output.
std::string format_double(double v);

/// FNV-1a 64-bit checksum (fixture verification).
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);

}  // namespace gud

#endif  // GUD_IO_HPP
