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

#ifndef GUD_BASIS_HPP
#define GUD_BASIS_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

namespace gud {

/// Source tensor shape. Components are flattened row-major as
/// (row, column, channel), channel fastest:
///   index = (row * width + column) * channels + channel.
struct TensorShape {
  int height = 1;
  int width = 1;
  int channels = 1;

  int dim() const { return height * width * channels; }
  int pixels() const { return height * width; }
  int flat_index(int row, int col, int channel) const {
    return (row * width + col) * channels + channel;
  }
  bool operator==(const TensorShape&) const = default;
};

enum class BasisKind : int {
  identity = 0,
  dense_orthogonal = 1,
  fft2_real = 2,
  haar = 3,
  permutation = 4,
};

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

/// Per-level layout of a Haar decomposition. Sub-band order within a level is
/// LH, HL, HH; the coefficient vector concatenates the high-frequency blocks
/// of level 1..n followed by the final low-frequency block, per channel
/// interleaved in the standard flattening.
struct HaarLayout {
  int levels = 0;
  TensorShape shape;
  // Component metadata over the full flattened vector (length d):
  std::vector<int> level;    // 1..levels for HF blocks, levels for the LL block
  std::vector<int> column;   // 1-based column index inside the sub-band grid
  std::vector<int> group;    // sequential group label: coarse -> fine, 1-based
  // Offsets of the value for (row, col, channel) of sub-band `band` at `lvl`;
  // band: 0=LH, 1=HL, 2=HH, 3=LL (LL valid only at the final level).
  int offset(int lvl, int band, int row, int col, int channel) const;
};

/// Change of representation chi = S^-1 U phi with orthogonal U and positive
/// diagonal scaling S. The prior covariance in data space is U^-1 S^2 U.
struct BasisSpec {
  BasisKind kind = BasisKind::identity;
  TensorShape shape;
  int levels = 0;                // haar only
  Eigen::VectorXd scaling;       // diag(S), length d, strictly positive
  Eigen::VectorXd labels;        // per-component position labels, length d
  Eigen::MatrixXd u;             // dense kinds: per-channel orthogonal matrix
  std::vector<int> perm;         // permutation kind: chi[i] = phi[perm[i]] / S[i]
  HaarLayout haar;               // haar kind only

  int dim() const { return shape.dim(); }
  void validate() const;
};

/// Empirical mean and per-component variances of data in the chosen basis.
struct CovarianceEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd variances;  // unbiased, after mean subtraction
  int sample_count = 0;
};

/// Mean and unbiased per-component variances; rows of `samples` are samples.
/// Requires at least two samples.
CovarianceEstimate estimate_covariance(const Eigen::MatrixXd& samples);
/// Same, validating that every vector in the collection has equal length.
CovarianceEstimate estimate_covariance(const std::vector<Eigen::VectorXd>& samples);

/// Eigendecomposition basis for a symmetric covariance matrix. Rows of U are
/// eigenvectors ordered by descending eigenvalue, each with its
/// largest-magnitude entry made positive. With `whiten` the scaling is
/// sqrt(max(eigenvalue, variance_floor)); labels are always
/// -log(max(eigenvalue, variance_floor)). The resulting shape is a flat
/// vector (1 x n x 1).
BasisSpec build_pca_basis(const Eigen::MatrixXd& cov_matrix, bool whiten,
                          double variance_floor = 1e-6);

BasisSpec build_identity_basis(const TensorShape& shape);

/// Real orthogonal representation of the 2-D DFT, applied per channel.
/// Non-self-conjugate frequencies contribute a sqrt(2)-normalized
/// cosine/sine row pair; rows are ordered by (|k|, k_y, k_x) and labels
/// carry |k| (with aliased frequencies folded to their magnitude).
BasisSpec build_fft_basis(const TensorShape& shape);

/// Multi-level 2-D Haar wavelet basis (per channel). Labels carry the
/// sequential coefficient-group index, coarse to fine.
BasisSpec build_haar_basis(const TensorShape& shape, int levels);

/// Component reordering: chi[i] = phi[perm[i]]. Labels carry the source
/// index.
BasisSpec build_permutation_basis(const TensorShape& shape,
                                  const std::vector<int>& perm);

/// Replicates a flat-vector basis (from build_pca_basis on per-channel
/// covariance) across the channels of an image shape. scaling/labels are
/// repeated per channel; U stays the per-channel matrix.
BasisSpec expand_per_channel(const BasisSpec& flat, const TensorShape& shape);

/// Replaces the scaling by sqrt(max(var_i, floor)) so transformed components
/// have unit variance (prior matches the data's second-order statistics).
void apply_whitening(BasisSpec& basis, const Eigen::VectorXd& component_variances,
                     double variance_floor = 1e-6);

/// chi = S^-1 U phi.
Eigen::VectorXd forward_transform(const BasisSpec& basis, const Eigen::VectorXd& phi);
/// phi = U^-1 S chi; exact inverse of forward_transform.
Eigen::VectorXd inverse_transform(const BasisSpec& basis, const Eigen::VectorXd& chi);

/// Row-wise batch variants (rows are samples).
Eigen::MatrixXd forward_transform_rows(const BasisSpec& basis, const Eigen::MatrixXd& phis);
Eigen::MatrixXd inverse_transform_rows(const BasisSpec& basis, const Eigen::MatrixXd& chis);

/// Score/gradient change of representation: for chi = S^-1 U phi,
///   grad_chi log p = S U grad_phi log p.
Eigen::VectorXd score_to_component_basis(const BasisSpec& basis,
                                         const Eigen::VectorXd& grad_phi);
Eigen::VectorXd score_to_data_basis(const BasisSpec& basis,
                                    const Eigen::VectorXd& grad_chi);

/// Multi-level Haar decomposition of one flattened image. Output layout is
/// HF(1)..HF(levels) then LL(levels); see HaarLayout. Norm preserving.
Eigen::VectorXd haar_decompose(const Eigen::VectorXd& image, const TensorShape& shape,
                               int levels);
Eigen::VectorXd haar_reconstruct(const Eigen::VectorXd& coeffs, const TensorShape& shape,
                                 int levels);
HaarLayout haar_layout(const TensorShape& shape, int levels);

/// Column group map: component -> 1-based column index of its pixel,
/// identical across rows and channels.
std::vector<int> column_grouping(const TensorShape& shape);

/// log p_phi(phi) = log p_chi(S^-1 U phi) - sum_i log S_ii.
double loglik_base_change(const BasisSpec& basis, double loglik_chi);

void save_basis(const std::string& path, const BasisSpec& basis);
BasisSpec load_basis(const std::string& path);

}  // namespace gud

#endif  // GUD_BASIS_HPP
