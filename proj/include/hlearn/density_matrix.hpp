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

#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace hlearn {

/// Dense 2^n x 2^n density matrix. Site k is bit k of the row/column index.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(int n_sites);
  DensityMatrix(int n_sites, Eigen::MatrixXcd entries);

  /// |psi><psi| for a normalized state vector.
  static DensityMatrix pure(int n_sites, const Eigen::VectorXcd& psi);
  /// Tensor product of single-site 2x2 density matrices.
  static DensityMatrix product(const std::vector<Eigen::Matrix2cd>& sites);
  /// Computational basis state |index><index|.
  static DensityMatrix basis_state(int n_sites, std::uint64_t index);

  int n_sites() const { return n_sites_; }
  Eigen::Index dim() const { return entries_.rows(); }
  const Eigen::MatrixXcd& entries() const { return entries_; }
  Eigen::MatrixXcd& entries() { return entries_; }

  std::complex<double> trace() const { return entries_.trace(); }
  double hermiticity_error() const;
  double min_eigenvalue() const;

  /// Checks hermiticity, unit trace and positivity at the given tolerances.
  bool is_valid(double herm_tol = 1e-10, double trace_tol = 1e-10, double eig_tol = 1e-8) const;

 private:
  int n_sites_ = 0;
  Eigen::MatrixXcd entries_;
};

/// Single-qubit state (I + r.sigma)/2 for a Bloch vector r.
Eigen::Matrix2cd bloch_to_density(const std::array<double, 3>& r);

}  // namespace hlearn
