// Copyright 2026 The hlearn Authors
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

#include "hlearn/density_matrix.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

#include "hlearn/error.hpp"

namespace hlearn {

DensityMatrix::DensityMatrix(int n_sites) : n_sites_(n_sites) {
  if (n_sites <= 0 || n_sites > 20) {
    throw DimensionError("DensityMatrix: dense storage supports 1..20 sites, got " +
                         std::to_string(n_sites));
  }
  const Eigen::Index dim = Eigen::Index{1} << n_sites;
  entries_ = Eigen::MatrixXcd::Zero(dim, dim);
  entries_(0, 0) = 1.0;
}

DensityMatrix::DensityMatrix(int n_sites, Eigen::MatrixXcd entries) : DensityMatrix(n_sites) {
  if (entries.rows() != entries_.rows() || entries.cols() != entries_.cols()) {
    throw DimensionError("DensityMatrix: expected " + std::to_string(entries_.rows()) +
                         " x " + std::to_string(entries_.rows()) + " entries");
  }
  entries_ = std::move(entries);
}

DensityMatrix DensityMatrix::pure(int n_sites, const Eigen::VectorXcd& psi) {
  DensityMatrix rho(n_sites);
  if (psi.size() != rho.dim()) throw DimensionError("DensityMatrix::pure: vector size mismatch");
  rho.entries_ = psi * psi.adjoint();
  return rho;
}

DensityMatrix DensityMatrix::product(const std::vector<Eigen::Matrix2cd>& sites) {
  DensityMatrix rho(static_cast<int>(sites.size()));
  // Site 0 is the least significant bit, so it is the rightmost Kronecker factor.
  Eigen::MatrixXcd acc = sites[0];
  for (std::size_t k = 1; k < sites.size(); ++k) {
    Eigen::MatrixXcd next = Eigen::kroneckerProduct(sites[k], acc);
    acc = std::move(next);
  }
  rho.entries_ = std::move(acc);
  return rho;
}

DensityMatrix DensityMatrix::basis_state(int n_sites, std::uint64_t index) {
  DensityMatrix rho(n_sites);
  if (index >= static_cast<std::uint64_t>(rho.dim())) {
    throw DimensionError("DensityMatrix::basis_state: index out of range");
  }
  rho.entries_(0, 0) = 0.0;
  const auto i = static_cast<Eigen::Index>(index);
  rho.entries_(i, i) = 1.0;
  return rho;
}

double DensityMatrix::hermiticity_error() const {
  return (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff();
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::MatrixXcd herm = 0.5 * (entries_ + entries_.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

bool DensityMatrix::is_valid(double herm_tol, double trace_tol, double eig_tol) const {
  if (hermiticity_error() > herm_tol) return false;
  if (std::abs(trace() - 1.0) > trace_tol) return false;
  return min_eigenvalue() >= -eig_tol;
}

Eigen::Matrix2cd bloch_to_density(const std::array<double, 3>& r) {
  using c = std::complex<double>;
  Eigen::Matrix2cd m;
  m << c(0.5 * (1 + r[2]), 0), c(0.5 * r[0], -0.5 * r[1]),
       c(0.5 * r[0], 0.5 * r[1]), c(0.5 * (1 - r[2]), 0);
  return m;
}

}  // namespace hlearn
