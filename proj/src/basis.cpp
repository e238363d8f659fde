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

#include "gud/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

#include <Eigen/Dense>

namespace gud {

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::identity: return "identity";
    case BasisKind::dense_orthogonal: return "dense-orthogonal";
    case BasisKind::fft2_real: return "fft2-real";
    case BasisKind::haar: return "haar";
    case BasisKind::permutation: return "permutation";
  }
  throw std::invalid_argument("unknown basis kind");
}

BasisKind basis_kind_from_string(const std::string& name) {
  if (name == "identity" || name == "pixel") return BasisKind::identity;
  if (name == "dense-orthogonal" || name == "pca") return BasisKind::dense_orthogonal;
  if (name == "fft2-real" || name == "fft") return BasisKind::fft2_real;
  if (name == "haar") return BasisKind::haar;
  if (name == "permutation") return BasisKind::permutation;
  throw std::invalid_argument("unknown basis kind: " + name);
}

void BasisSpec::validate() const {
  const int d = dim();
  if (d <= 0) throw std::invalid_argument("basis shape has no components");
  if (scaling.size() != d || labels.size() != d)
    throw std::invalid_argument("scaling/labels length does not match shape");
  for (int i = 0; i < d; ++i) {
    if (!(scaling[i] > 0.0) || !std::isfinite(scaling[i]))
      throw std::invalid_argument("scaling entries must be strictly positive and finite");
  }
  switch (kind) {
    case BasisKind::dense_orthogonal:
    case BasisKind::fft2_real: {
      const int n = shape.pixels();
      if (u.rows() != n || u.cols() != n)
        throw std::invalid_argument("dense basis matrix does not match shape");
      break;
    }
    case BasisKind::permutation: {
      if (static_cast<int>(perm.size()) != d)
        throw std::invalid_argument("permutation length does not match shape");
      std::vector<char> seen(d, 0);
      for (int p : perm) {
        if (p < 0 || p >= d || seen[p]) throw std::invalid_argument("invalid permutation");
        seen[p] = 1;
      }
      break;
    }
    case BasisKind::haar:
      if (levels < 1) throw std::invalid_argument("haar basis requires levels >= 1");
      break;
    case BasisKind::identity:
      break;
  }
}

CovarianceEstimate estimate_covariance(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  if (n < 2) throw std::invalid_argument("estimate_covariance requires at least 2 samples");
  CovarianceEstimate est;
  est.sample_count = static_cast<int>(n);
  est.mean = samples.colwise().mean();
  Eigen::MatrixXd centered = samples.rowwise() - est.mean.transpose();
  est.variances = centered.array().square().colwise().sum() / static_cast<double>(n - 1);
  return est;
}

CovarianceEstimate estimate_covariance(const std::vector<Eigen::VectorXd>& samples) {
  if (samples.size() < 2)
    throw std::invalid_argument("estimate_covariance requires at least 2 samples");
  const Eigen::Index d = samples.front().size();
  Eigen::MatrixXd mat(samples.size(), d);
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != d)
      throw std::invalid_argument("samples have mismatched lengths");
    mat.row(i) = samples[i].transpose();
  }
  return estimate_covariance(mat);
}

BasisSpec build_pca_basis(const Eigen::MatrixXd& cov_matrix, bool whiten,
                          double variance_floor) {
  if (!(variance_floor > 0.0))
    throw std::invalid_argument("variance_floor must be positive");
  const Eigen::Index n = cov_matrix.rows();
  if (cov_matrix.cols() != n || n < 1)
    throw std::invalid_argument("covariance matrix must be square");
  const double scale = std::max(1.0, cov_matrix.cwiseAbs().maxCoeff());
  if ((cov_matrix - cov_matrix.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::invalid_argument("covariance matrix is not symmetric within 1e-8");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      0.5 * (cov_matrix + cov_matrix.transpose()));
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");

  BasisSpec basis;
  basis.kind = BasisKind::dense_orthogonal;
  basis.shape = TensorShape{1, static_cast<int>(n), 1};
  basis.u.resize(n, n);
  basis.scaling = Eigen::VectorXd::Ones(n);
  basis.labels.resize(n);

  // Eigen returns ascending eigenvalues; rows of U are eigenvectors by
  // descending eigenvalue, sign-fixed so the largest-magnitude entry is
  // positive.
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = n - 1 - i;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index argmax;
    v.cwiseAbs().maxCoeff(&argmax);
    if (v[argmax] < 0.0) v = -v;
    basis.u.row(i) = v.transpose();
    const double ev = std::max(solver.eigenvalues()[src], variance_floor);
    basis.labels[i] = -std::log(ev);
    if (whiten) basis.scaling[i] = std::sqrt(ev);
  }
  return basis;
}

BasisSpec build_identity_basis(const TensorShape& shape) {
  BasisSpec basis;
  basis.kind = BasisKind::identity;
  basis.shape = shape;
  basis.scaling = Eigen::VectorXd::Ones(shape.dim());
  basis.labels.resize(shape.dim());
  const std::vector<int> cols = column_grouping(shape);
  for (int i = 0; i < shape.dim(); ++i) basis.labels[i] = static_cast<double>(cols[i]);
  return basis;
}

namespace {

struct FreqRow {
  double mag;
  int ky, kx;
  bool self_conjugate;
};

}  // namespace

BasisSpec build_fft_basis(const TensorShape& shape) {
  const int h = shape.height, w = shape.width;
  if (h < 1 || w < 1) throw std::invalid_argument("invalid shape");
  const int n = h * w;

  std::vector<FreqRow> freqs;
  for (int ky = 0; ky < h; ++ky) {
    for (int kx = 0; kx < w; ++kx) {
      const int my = (h - ky) % h, mx = (w - kx) % w;
      const bool self = (my == ky && mx == kx);
      if (!self && std::tie(ky, kx) > std::tie(my, mx)) continue;  // partner covers it
      const double fy = std::min(ky, h - ky), fx = std::min(kx, w - kx);
      freqs.push_back({std::hypot(fy, fx), ky, kx, self});
    }
  }
  std::sort(freqs.begin(), freqs.end(), [](const FreqRow& a, const FreqRow& b) {
    return std::tie(a.mag, a.ky, a.kx) < std::tie(b.mag, b.ky, b.kx);
  });

  BasisSpec basis;
  basis.kind = BasisKind::fft2_real;
  basis.shape = shape;
  basis.u.resize(n, n);
  Eigen::VectorXd mags(n);

  int row = 0;
  for (const FreqRow& f : freqs) {
    const double norm = f.self_conjugate ? 1.0 / std::sqrt(double(n))
                                         : std::sqrt(2.0 / double(n));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double angle =
            2.0 * M_PI * (double(f.ky) * y / h + double(f.kx) * x / w);
        basis.u(row, y * w + x) = norm * std::cos(angle);
        if (!f.self_conjugate) basis.u(row + 1, y * w + x) = norm * std::sin(angle);
      }
    }
    mags[row] = f.mag;
    if (!f.self_conjugate) mags[row + 1] = f.mag;
    row += f.self_conjugate ? 1 : 2;
  }
  if (row != n) throw std::runtime_error("fft basis row count mismatch");

  const int d = shape.dim();
  basis.scaling = Eigen::VectorXd::Ones(d);
  basis.labels.resize(d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < shape.channels; ++c)
      basis.labels[i * shape.channels + c] = mags[i];
  return basis;
}

HaarLayout haar_layout(const TensorShape& shape, int levels) {
  if (levels < 1) throw std::invalid_argument("levels must be >= 1");
  if (shape.height % (1 << levels) != 0 || shape.width % (1 << levels) != 0)
    throw std::invalid_argument("image dimensions not divisible by 2^levels");
  HaarLayout layout;
  layout.levels = levels;
  layout.shape = shape;
  const int d = shape.dim();
  layout.level.resize(d);
  layout.column.resize(d);
  layout.group.resize(d);

  int offset = 0;
  for (int lvl = 1; lvl <= levels; ++lvl) {
    const int hh = shape.height >> lvl, ww = shape.width >> lvl;
    const int band_size = hh * ww * shape.channels;
    // HF(lvl) = [LH, HL, HH]; schedule group counts down from fine to coarse.
    for (int band = 0; band < 3; ++band) {
      for (int idx = 0; idx < band_size; ++idx) {
        const int comp = offset + band * band_size + idx;
        layout.level[comp] = lvl;
        layout.column[comp] = (idx / shape.channels) % ww + 1;
        layout.group[comp] = levels - lvl + 1;
      }
    }
    offset += 3 * band_size;
  }
  // Final low-frequency block shares the coarsest group.
  const int hh = shape.height >> levels, ww = shape.width >> levels;
  const int ll_size = hh * ww * shape.channels;
  for (int idx = 0; idx < ll_size; ++idx) {
    const int comp = offset + idx;
    layout.level[comp] = levels;
    layout.column[comp] = (idx / shape.channels) % ww + 1;
    layout.group[comp] = 1;
  }
  if (offset + ll_size != d) throw std::runtime_error("haar layout size mismatch");
  return layout;
}

int HaarLayout::offset(int lvl, int band, int row, int col, int channel) const {
  int start = 0;
  for (int m = 1; m < lvl; ++m) {
    const int hh = shape.height >> m, ww = shape.width >> m;
    start += 3 * hh * ww * shape.channels;
  }
  const int hh = shape.height >> lvl, ww = shape.width >> lvl;
  const int band_size = hh * ww * shape.channels;
  if (band == 3) {
    if (lvl != levels) throw std::invalid_argument("LL block exists only at the final level");
    start += 3 * band_size;
  } else {
    start += band * band_size;
  }
  return start + (row * ww + col) * shape.channels + channel;
}

Eigen::VectorXd haar_decompose(const Eigen::VectorXd& image, const TensorShape& shape,
                               int levels) {
  const HaarLayout layout = haar_layout(shape, levels);
  if (image.size() != shape.dim()) throw std::invalid_argument("dimension mismatch");
  Eigen::VectorXd out(shape.dim());
  const int channels = shape.channels;

  for (int c = 0; c < channels; ++c) {
    int hh = shape.height, ww = shape.width;
    Eigen::MatrixXd cur(hh, ww);
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < ww; ++x) cur(y, x) = image[shape.flat_index(y, x, c)];

    for (int lvl = 1; lvl <= levels; ++lvl) {
      hh /= 2;
      ww /= 2;
      Eigen::MatrixXd ll(hh, ww);
      // Fused row/column 1/sqrt(2) passes: one 2x2 butterfly with a 1/2
      // factor, keeping the transform orthogonal and integer-exact.
      for (int y = 0; y < hh; ++y) {
        for (int x = 0; x < ww; ++x) {
          const double a = cur(2 * y, 2 * x), b = cur(2 * y, 2 * x + 1);
          const double p = cur(2 * y + 1, 2 * x), q = cur(2 * y + 1, 2 * x + 1);
          ll(y, x) = (a + b + p + q) / 2.0;
          out[layout.offset(lvl, 0, y, x, c)] = ((a + p) - (b + q)) / 2.0;  // LH
          out[layout.offset(lvl, 1, y, x, c)] = ((a - p) + (b - q)) / 2.0;  // HL
          out[layout.offset(lvl, 2, y, x, c)] = ((a - p) - (b - q)) / 2.0;  // HH
        }
      }
      cur = ll;
    }
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < ww; ++x) out[layout.offset(levels, 3, y, x, c)] = cur(y, x);
  }
  return out;
}

Eigen::VectorXd haar_reconstruct(const Eigen::VectorXd& coeffs, const TensorShape& shape,
                                 int levels) {
  const HaarLayout layout = haar_layout(shape, levels);
  if (coeffs.size() != shape.dim()) throw std::invalid_argument("dimension mismatch");
  Eigen::VectorXd out(shape.dim());

  for (int c = 0; c < shape.channels; ++c) {
    int hh = shape.height >> levels, ww = shape.width >> levels;
    Eigen::MatrixXd cur(hh, ww);
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < ww; ++x) cur(y, x) = coeffs[layout.offset(levels, 3, y, x, c)];

    for (int lvl = levels; lvl >= 1; --lvl) {
      Eigen::MatrixXd up(2 * hh, 2 * ww);
      for (int y = 0; y < hh; ++y) {
        for (int x = 0; x < ww; ++x) {
          const double ll = cur(y, x);
          const double lh = coeffs[layout.offset(lvl, 0, y, x, c)];
          const double hl = coeffs[layout.offset(lvl, 1, y, x, c)];
          const double hhv = coeffs[layout.offset(lvl, 2, y, x, c)];
          up(2 * y, 2 * x) = (ll + lh + hl + hhv) / 2.0;
          up(2 * y, 2 * x + 1) = (ll - lh + hl - hhv) / 2.0;
          up(2 * y + 1, 2 * x) = (ll + lh - hl - hhv) / 2.0;
          up(2 * y + 1, 2 * x + 1) = (ll - lh - hl + hhv) / 2.0;
        }
      }
      cur = up;
      hh *= 2;
      ww *= 2;
    }
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x) out[shape.flat_index(y, x, c)] = cur(y, x);
  }
  return out;
}

BasisSpec build_haar_basis(const TensorShape& shape, int levels) {
  BasisSpec basis;
  basis.kind = BasisKind::haar;
  basis.shape = shape;
  basis.levels = levels;
  basis.haar = haar_layout(shape, levels);
  basis.scaling = Eigen::VectorXd::Ones(shape.dim());
  basis.labels.resize(shape.dim());
  for (int i = 0; i < shape.dim(); ++i)
    basis.labels[i] = static_cast<double>(basis.haar.group[i]);
  return basis;
}

BasisSpec build_permutation_basis(const TensorShape& shape, const std::vector<int>& perm) {
  BasisSpec basis;
  basis.kind = BasisKind::permutation;
  basis.shape = shape;
  basis.perm = perm;
  basis.scaling = Eigen::VectorXd::Ones(shape.dim());
  basis.labels.resize(shape.dim());
  for (int i = 0; i < shape.dim(); ++i) basis.labels[i] = static_cast<double>(perm[i]);
  basis.validate();
  return basis;
}

BasisSpec expand_per_channel(const BasisSpec& flat, const TensorShape& shape) {
  if (flat.shape.dim() != shape.pixels())
    throw std::invalid_argument("per-channel basis size does not match target shape");
  BasisSpec basis = flat;
  basis.shape = shape;
  const int n = shape.pixels(), ch = shape.channels;
  basis.scaling.resize(n * ch);
  basis.labels.resize(n * ch);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < ch; ++c) {
      basis.scaling[i * ch + c] = flat.scaling[i];
      basis.labels[i * ch + c] = flat.labels[i];
    }
  }
  return basis;
}

void apply_whitening(BasisSpec& basis, const Eigen::VectorXd& component_variances,
                     double variance_floor) {
  if (component_variances.size() != basis.dim())
    throw std::invalid_argument("variance vector length mismatch");
  if (!(variance_floor > 0.0)) throw std::invalid_argument("variance_floor must be positive");
  for (int i = 0; i < basis.dim(); ++i)
    basis.scaling[i] = std::sqrt(std::max(component_variances[i], variance_floor));
}

namespace {

Eigen::VectorXd apply_orthogonal(const BasisSpec& basis, const Eigen::VectorXd& x,
                                 bool forward) {
  const int d = basis.dim();
  if (x.size() != d) throw std::invalid_argument("dimension mismatch");
  switch (basis.kind) {
    case BasisKind::identity:
      return x;
    case BasisKind::dense_orthogonal:
    case BasisKind::fft2_real: {
      const int n = basis.shape.pixels(), ch = basis.shape.channels;
      Eigen::VectorXd out(d);
      Eigen::VectorXd buf(n);
      for (int c = 0; c < ch; ++c) {
        for (int i = 0; i < n; ++i) buf[i] = x[i * ch + c];
        Eigen::VectorXd res = forward ? (basis.u * buf).eval()
                                      : (basis.u.transpose() * buf).eval();
        for (int i = 0; i < n; ++i) out[i * ch + c] = res[i];
      }
      return out;
    }
    case BasisKind::haar:
      return forward ? haar_decompose(x, basis.shape, basis.levels)
                     : haar_reconstruct(x, basis.shape, basis.levels);
    case BasisKind::permutation: {
      Eigen::VectorXd out(d);
      if (forward) {
        for (int i = 0; i < d; ++i) out[i] = x[basis.perm[i]];
      } else {
        for (int i = 0; i < d; ++i) out[basis.perm[i]] = x[i];
      }
      return out;
    }
  }
  throw std::invalid_argument("unknown basis kind");
}

}  // namespace

Eigen::VectorXd forward_transform(const BasisSpec& basis, const Eigen::VectorXd& phi) {
  Eigen::VectorXd chi = apply_orthogonal(basis, phi, true);
  return chi.cwiseQuotient(basis.scaling);
}

Eigen::VectorXd inverse_transform(const BasisSpec& basis, const Eigen::VectorXd& chi) {
  if (chi.size() != basis.dim()) throw std::invalid_argument("dimension mismatch");
  return apply_orthogonal(basis, chi.cwiseProduct(basis.scaling), false);
}

Eigen::MatrixXd forward_transform_rows(const BasisSpec& basis, const Eigen::MatrixXd& phis) {
  Eigen::MatrixXd out(phis.rows(), phis.cols());
  for (Eigen::Index i = 0; i < phis.rows(); ++i)
    out.row(i) = forward_transform(basis, phis.row(i).transpose()).transpose();
  return out;
}

Eigen::MatrixXd inverse_transform_rows(const BasisSpec& basis, const Eigen::MatrixXd& chis) {
  Eigen::MatrixXd out(chis.rows(), chis.cols());
  for (Eigen::Index i = 0; i < chis.rows(); ++i)
    out.row(i) = inverse_transform(basis, chis.row(i).transpose()).transpose();
  return out;
}

Eigen::VectorXd score_to_component_basis(const BasisSpec& basis,
                                         const Eigen::VectorXd& grad_phi) {
  return apply_orthogonal(basis, grad_phi, true).cwiseProduct(basis.scaling);
}

Eigen::VectorXd score_to_data_basis(const BasisSpec& basis,
                                    const Eigen::VectorXd& grad_chi) {
  if (grad_chi.size() != basis.dim()) throw std::invalid_argument("dimension mismatch");
  return apply_orthogonal(basis, grad_chi.cwiseQuotient(basis.scaling), false);
}

std::vector<int> column_grouping(const TensorShape& shape) {
  if (shape.dim() <= 0) throw std::invalid_argument("invalid shape");
  std::vector<int> groups(shape.dim());
  for (int y = 0; y < shape.height; ++y)
    for (int x = 0; x < shape.width; ++x)
      for (int c = 0; c < shape.channels; ++c)
        groups[shape.flat_index(y, x, c)] = x + 1;
  return groups;
}

double loglik_base_change(const BasisSpec& basis, double loglik_chi) {
  if (!std::isfinite(loglik_chi)) throw std::invalid_argument("log-likelihood must be finite");
  for (int i = 0; i < basis.dim(); ++i)
    if (!(basis.scaling[i] > 0.0))
      throw std::invalid_argument("scaling entries must be strictly positive");
  return loglik_chi - basis.scaling.array().log().sum();
}

}  // namespace gud
