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

#include "gud/basis.hpp"
#include "gud/io.hpp"
#include "gud/rng.hpp"
#include "oracles.hpp"

using namespace gud;

namespace {

Eigen::MatrixXd random_spd(int n, RandomStream& rng) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
}

std::vector<BasisSpec> all_basis_kinds(RandomStream& rng) {
  std::vector<BasisSpec> out;
  out.push_back(build_identity_basis(TensorShape{2, 3, 2}));
  BasisSpec pca = build_pca_basis(random_spd(6, rng), true);
  out.push_back(pca);
  out.push_back(build_fft_basis(TensorShape{4, 4, 1}));
  out.push_back(build_fft_basis(TensorShape{4, 6, 3}));
  out.push_back(build_haar_basis(TensorShape{8, 8, 3}, 2));
  out.push_back(build_permutation_basis(TensorShape{1, 5, 1}, {3, 0, 4, 1, 2}));
  return out;
}

}  // namespace

TEST_CASE("estimate_covariance matches the two-point hand example") {
  Eigen::MatrixXd samples(2, 2);
  samples << 0, 0, 2, 2;
  const CovarianceEstimate est = estimate_covariance(samples);
  CHECK(est.mean.isApprox(Eigen::Vector2d(1, 1)));
  CHECK(est.variances.isApprox(Eigen::Vector2d(2, 2)));
  CHECK(est.sample_count == 2);
}

TEST_CASE("estimate_covariance is zero for identical samples") {
  Eigen::MatrixXd samples = Eigen::MatrixXd::Constant(5, 3, 1.25);
  CHECK(estimate_covariance(samples).variances.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("estimate_covariance concentrates on the population variances") {
  RandomStream rng(11);
  const int n = 100000;
  Eigen::MatrixXd samples(n, 2);
  for (int i = 0; i < n; ++i) {
    samples(i, 0) = rng.normal();
    samples(i, 1) = 2.0 * rng.normal();
  }
  const CovarianceEstimate est = estimate_covariance(samples);
  CHECK(est.variances[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(est.variances[1] == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("estimate_covariance rejects short or ragged input") {
  CHECK_THROWS_AS(estimate_covariance(Eigen::MatrixXd::Zero(1, 3)), std::invalid_argument);
  std::vector<Eigen::VectorXd> ragged{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(estimate_covariance(ragged), std::invalid_argument);
}

TEST_CASE("pca on the identity covariance gives an orthogonal unwhitened basis") {
  const BasisSpec basis = build_pca_basis(Eigen::MatrixXd::Identity(4, 4), true);
  CHECK((basis.u * basis.u.transpose() - Eigen::MatrixXd::Identity(4, 4))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK(basis.scaling.isOnes());
  RandomStream rng(3);
  const Eigen::VectorXd x = rng.normal_vector(4);
  CHECK((inverse_transform(basis, forward_transform(basis, x)) - x).norm() < 1e-12);
}

TEST_CASE("pca whitening of diag(4,1)") {
  Eigen::MatrixXd cov = Eigen::Vector2d(4, 1).asDiagonal();
  const BasisSpec basis = build_pca_basis(cov, true);
  CHECK(basis.scaling.isApprox(Eigen::Vector2d(2, 1)));
  CHECK(basis.labels[0] == doctest::Approx(-std::log(4.0)));
  // Transformed variances are (1, 1): scale a covariance-matched sample cloud.
  RandomStream rng(5);
  const int n = 20000;
  Eigen::MatrixXd chi(n, 2);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector2d phi(2.0 * rng.normal(), rng.normal());
    chi.row(i) = forward_transform(basis, phi).transpose();
  }
  const CovarianceEstimate est = estimate_covariance(chi);
  CHECK(est.variances[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(est.variances[1] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("pca reconstructs a random SPD covariance as U^-1 S^2 U") {
  RandomStream rng(7);
  const Eigen::MatrixXd cov = random_spd(8, rng);
  const BasisSpec basis = build_pca_basis(cov, true);
  const Eigen::MatrixXd s2 = basis.scaling.cwiseProduct(basis.scaling).asDiagonal();
  const Eigen::MatrixXd rebuilt = basis.u.transpose() * s2 * basis.u;
  CHECK((rebuilt - cov).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pca diagonalizes with non-increasing spectrum") {
  RandomStream rng(9);
  const Eigen::MatrixXd cov = random_spd(8, rng);
  const BasisSpec basis = build_pca_basis(cov, false);
  const Eigen::MatrixXd d = basis.u * cov * basis.u.transpose();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i != j) CHECK(std::abs(d(i, j)) < 1e-8);
  for (int i = 1; i < 8; ++i) CHECK(d(i, i) <= d(i - 1, i - 1) + 1e-12);
  CHECK(basis.scaling.isOnes());  // unwhitened
}

TEST_CASE("pca rejects asymmetric input") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 0.5, 0.2, 1;
  CHECK_THROWS_AS(build_pca_basis(bad, false), std::invalid_argument);
}

TEST_CASE("whitened transformed data has unit variance (Monte Carlo)") {
  // Population covariance known analytically; fresh draws afterwards.
  Eigen::MatrixXd cov = Eigen::Vector4d(0.25, 1.0, 2.0, 9.0).asDiagonal();
  const BasisSpec basis = build_pca_basis(cov, true);
  RandomStream rng(13);
  const int n = 100000;
  Eigen::MatrixXd chi(n, 4);
  Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd phi(4);
    for (int j = 0; j < 4; ++j) phi[j] = sd[j] * rng.normal();
    chi.row(i) = forward_transform(basis, phi).transpose();
  }
  const CovarianceEstimate est = estimate_covariance(chi);
  for (int j = 0; j < 4; ++j) {
    // 3 standard errors of a variance estimate from n normal draws.
    const double se = std::sqrt(2.0 / (n - 1));
    CHECK(std::abs(est.variances[j] - 1.0) < 3.0 * se);
  }
}

TEST_CASE("identity and pure-scaling transforms") {
  BasisSpec identity = build_identity_basis(TensorShape{1, 2, 1});
  const Eigen::Vector2d phi(2, -4);
  CHECK(forward_transform(identity, phi).isApprox(phi));

  BasisSpec scaled = identity;
  scaled.scaling = Eigen::Vector2d(2, 2);
  CHECK(forward_transform(scaled, phi).isApprox(Eigen::Vector2d(1, -2)));
  CHECK(inverse_transform(scaled, Eigen::Vector2d(1, -2)).isApprox(phi));
}

TEST_CASE("haar hand example [[1,2],[3,4]] -> (5,-1,-2,0) exactly") {
  const TensorShape shape{2, 2, 1};
  Eigen::VectorXd img(4);
  img << 1, 2, 3, 4;  // row-major
  const Eigen::VectorXd coeffs = haar_decompose(img, shape, 1);
  const HaarLayout layout = haar_layout(shape, 1);
  CHECK(coeffs[layout.offset(1, 3, 0, 0, 0)] == 5.0);   // LL
  CHECK(coeffs[layout.offset(1, 0, 0, 0, 0)] == -1.0);  // LH
  CHECK(coeffs[layout.offset(1, 1, 0, 0, 0)] == -2.0);  // HL
  CHECK(coeffs[layout.offset(1, 2, 0, 0, 0)] == 0.0);   // HH
  // Norm preservation: 1+4+9+16 = 25+1+4+0 = 30.
  CHECK(coeffs.squaredNorm() == doctest::Approx(30.0).epsilon(1e-14));
  CHECK((haar_reconstruct(coeffs, shape, 1) - img).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("haar of a constant image is 2c in LL and zero elsewhere") {
  const TensorShape shape{4, 4, 1};
  const double c = 0.7;
  const Eigen::VectorXd img = Eigen::VectorXd::Constant(shape.dim(), c);
  const Eigen::VectorXd coeffs = haar_decompose(img, shape, 1);
  const HaarLayout layout = haar_layout(shape, 1);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      CHECK(coeffs[layout.offset(1, 3, y, x, 0)] == doctest::Approx(2.0 * c));
      CHECK(coeffs[layout.offset(1, 0, y, x, 0)] == 0.0);
      CHECK(coeffs[layout.offset(1, 1, y, x, 0)] == 0.0);
      CHECK(coeffs[layout.offset(1, 2, y, x, 0)] == 0.0);
    }
}

TEST_CASE("haar roundtrip and Parseval at every admissible level count") {
  const TensorShape shape{8, 8, 3};
  RandomStream rng(17);
  for (int levels = 1; levels <= 3; ++levels) {
    const Eigen::VectorXd img = rng.normal_vector(shape.dim());
    const Eigen::VectorXd coeffs = haar_decompose(img, shape, levels);
    CHECK(coeffs.norm() == doctest::Approx(img.norm()).epsilon(1e-12));
    CHECK((haar_reconstruct(coeffs, shape, levels) - img).cwiseAbs().maxCoeff() <
          1e-10 * img.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("haar rejects shapes not divisible by 2^levels") {
  CHECK_THROWS_AS(haar_layout(TensorShape{6, 6, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(haar_decompose(Eigen::VectorXd::Zero(36), TensorShape{6, 6, 1}, 2),
                  std::invalid_argument);
}

TEST_CASE("fft basis: constant image concentrates on |k| = 0") {
  const TensorShape shape{4, 4, 1};
  const BasisSpec basis = build_fft_basis(shape);
  const Eigen::VectorXd chi =
      forward_transform(basis, Eigen::VectorXd::Constant(shape.dim(), 1.0));
  for (int i = 0; i < shape.dim(); ++i) {
    if (basis.labels[i] == 0.0)
      CHECK(std::abs(chi[i]) == doctest::Approx(4.0));  // sqrt(HW) * mean
    else
      CHECK(std::abs(chi[i]) < 1e-12);
  }
}

TEST_CASE("fft basis is orthogonal (Parseval) and invertible") {
  for (const TensorShape shape : {TensorShape{4, 4, 1}, TensorShape{3, 5, 1},
                                  TensorShape{1, 8, 1}, TensorShape{4, 6, 3}}) {
    const BasisSpec basis = build_fft_basis(shape);
    RandomStream rng(23);
    const Eigen::VectorXd x = rng.normal_vector(shape.dim());
    const Eigen::VectorXd chi = forward_transform(basis, x);
    CHECK(chi.norm() == doctest::Approx(x.norm()).epsilon(1e-12));
    CHECK((inverse_transform(basis, chi) - x).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("fft of a single-pixel impulse has flat power per frequency") {
  const TensorShape shape{4, 4, 1};
  const BasisSpec basis = build_fft_basis(shape);
  Eigen::VectorXd img = Eigen::VectorXd::Zero(shape.dim());
  img[shape.flat_index(1, 2, 0)] = 1.0;
  const Eigen::VectorXd chi = forward_transform(basis, img);
  CHECK(chi.squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
  // Complex frequency power 1/(HW) per frequency: packed rows carry it as
  // 1/HW for self-conjugate rows and 2/HW per cosine/sine pair.
  const int hw = shape.pixels();
  int i = 0;
  while (i < hw) {
    const bool paired = (i + 1 < hw) && (basis.labels[i + 1] == basis.labels[i]) &&
                        std::abs(chi[i] * chi[i] + chi[i + 1] * chi[i + 1] - 2.0 / hw) <
                            std::abs(chi[i] * chi[i] - 1.0 / hw);
    if (paired) {
      CHECK(chi[i] * chi[i] + chi[i + 1] * chi[i + 1] ==
            doctest::Approx(2.0 / hw).epsilon(1e-9));
      i += 2;
    } else {
      CHECK(chi[i] * chi[i] == doctest::Approx(1.0 / hw).epsilon(1e-9));
      i += 1;
    }
  }
}

TEST_CASE("column grouping") {
  CHECK(column_grouping(TensorShape{2, 2, 1}) == std::vector<int>{1, 2, 1, 2});
  const auto groups = column_grouping(TensorShape{32, 32, 3});
  std::vector<int> counts(33, 0);
  for (int g : groups) counts[g]++;
  for (int c = 1; c <= 32; ++c) CHECK(counts[c] == 96);
  int max_group = 0;
  for (int g : column_grouping(TensorShape{5, 7, 2})) max_group = std::max(max_group, g);
  CHECK(max_group == 7);
}

TEST_CASE("loglik base change") {
  BasisSpec identity = build_identity_basis(TensorShape{1, 3, 1});
  CHECK(loglik_base_change(identity, -1.5) == -1.5);

  BasisSpec scaled = identity;
  scaled.scaling = Eigen::Vector3d(2, 2, 2);
  CHECK(loglik_base_change(scaled, -1.5) ==
        doctest::Approx(-1.5 - 3.0 * std::log(2.0)));

  // Standard-normal chi density with S = diag(2,1): p_phi(0) = (2*pi)^-1 / 2.
  BasisSpec s21 = build_identity_basis(TensorShape{1, 2, 1});
  s21.scaling = Eigen::Vector2d(2, 1);
  const double loglik_chi = -std::log(2.0 * M_PI);  // 2-D standard normal at 0
  const double loglik_phi = loglik_base_change(s21, loglik_chi);
  CHECK(std::exp(loglik_phi) == doctest::Approx(0.5 / (2.0 * M_PI)).epsilon(1e-12));

  CHECK_THROWS_AS(loglik_base_change(identity, std::nan("")), std::invalid_argument);
}

TEST_CASE("roundtrip and inner-product preservation for every basis kind") {
  RandomStream rng(29);
  for (const BasisSpec& basis : all_basis_kinds(rng)) {
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = rng.normal_vector(basis.dim());
      const Eigen::VectorXd y = rng.normal_vector(basis.dim());
      const Eigen::VectorXd xr = inverse_transform(basis, forward_transform(basis, x));
      CHECK((xr - x).norm() <= 1e-10 * std::max(1.0, x.norm()));
      // The orthogonal part: undo the scaling to isolate U.
      const Eigen::VectorXd ux =
          forward_transform(basis, x).cwiseProduct(basis.scaling);
      const Eigen::VectorXd uy =
          forward_transform(basis, y).cwiseProduct(basis.scaling);
      CHECK(std::abs(ux.dot(uy) - x.dot(y)) <= 1e-10 * x.norm() * y.norm());
    }
  }
}

TEST_CASE("score change of representation matches finite differences") {
  // Analytic density in data space: N(m, C); chi-space score from the chain
  // rule must match the finite-difference gradient of the chi log density.
  RandomStream rng(31);
  const int n = 5;
  const Eigen::MatrixXd cov = random_spd(n, rng);
  const Eigen::VectorXd mean = rng.normal_vector(n);
  const Eigen::MatrixXd prec = cov.inverse();

  BasisSpec basis = build_pca_basis(cov, true);
  const Eigen::VectorXd chi_pt = rng.normal_vector(n);
  const Eigen::VectorXd phi_pt = inverse_transform(basis, chi_pt);

  const Eigen::VectorXd grad_phi = -prec * (phi_pt - mean);
  const Eigen::VectorXd grad_chi = score_to_component_basis(basis, grad_phi);

  auto chi_logpdf = [&](const Eigen::VectorXd& chi) {
    const Eigen::VectorXd phi = inverse_transform(basis, chi);
    return -0.5 * (phi - mean).dot(prec * (phi - mean));  // constants drop in the gradient
  };
  const Eigen::VectorXd fd = gud::testing::fd_gradient(chi_logpdf, chi_pt);
  CHECK((grad_chi - fd).cwiseAbs().maxCoeff() < 1e-8);
  // Round trip back to the data basis.
  CHECK((score_to_data_basis(basis, grad_chi) - grad_phi).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("basis containers round-trip through GUDBASIS files") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gud_basis_io_test";
  fs::create_directories(dir);
  RandomStream rng(37);
  int idx = 0;
  for (const BasisSpec& basis : all_basis_kinds(rng)) {
    const std::string path = (dir / ("b" + std::to_string(idx++) + ".gudbasis")).string();
    save_basis(path, basis);
    const BasisSpec loaded = load_basis(path);
    CHECK(loaded.kind == basis.kind);
    CHECK(loaded.shape == basis.shape);
    CHECK(loaded.scaling.isApprox(basis.scaling));
    CHECK(loaded.labels.isApprox(basis.labels));
    const Eigen::VectorXd x = rng.normal_vector(basis.dim());
    CHECK(forward_transform(loaded, x).isApprox(forward_transform(basis, x)));
  }
  fs::remove_all(dir);
}

TEST_CASE("dimension mismatches are rejected") {
  const BasisSpec basis = build_identity_basis(TensorShape{2, 2, 1});
  CHECK_THROWS_AS(forward_transform(basis, Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(inverse_transform(basis, Eigen::VectorXd::Zero(5)),
                  std::invalid_argument);
}
