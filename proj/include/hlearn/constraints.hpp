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

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hlearn/experiment.hpp"
#include "hlearn/pauli.hpp"

namespace hlearn {

/// Hamiltonian ansatz sum_j c_j h_j; each family is a hermitian, traceless Operator.
struct Ansatz {
  std::vector<std::string> names;
  std::vector<Operator> terms;

  int n_sites() const { return terms.empty() ? 0 : terms.front().n_sites(); }
  std::size_t size() const { return terms.size(); }
  Operator assemble(const Eigen::VectorXd& c) const;
  /// Throws std::invalid_argument for non-hermitian, non-traceless or dependent families.
  void validate() const;
};

/// Jump pairs (left, right) sharing one non-negative rate.
struct DissipatorFamily {
  std::string name;
  std::vector<std::pair<Operator, Operator>> pairs;
};

struct DissipatorAnsatz {
  std::vector<DissipatorFamily> families;

  std::size_t size() const { return families.size(); }
  /// Channels of the generator for rates d.
  std::vector<Channel> channels(const Eigen::VectorXd& d) const;
  /// (1/2) sum over the family's pairs of adjoint_dissipator(left, right, op).
  Operator heisenberg(std::size_t family, const Operator& op) const;
};

enum class SystemKind { ehrenfest, energy };

struct RowInfo {
  int state = 0;
  int end_index = 0;
  std::string observable;
};

/// M_add c = b(d) with b(d) = b_static - dissipative * d.
struct AdditionalBlock {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd static_rhs;
  Eigen::MatrixXd dissipative;
  std::vector<RowInfo> rows;

  bool empty() const { return matrix.rows() == 0; }
  Eigen::VectorXd rhs(const Eigen::VectorXd& d) const;
};

/// Linear constraints on (c, d).
///
/// Ehrenfest: K_H c + K_D d = b, with K_H = hamiltonian_block and K_D = dissipative_block.
/// Energy: (M_H + (1/2) sum_k d_k M^(k)) c = 0, with M_H = hamiltonian_block and
/// M^(k) = dissipative_terms[k].
struct ConstraintSystem {
  SystemKind kind = SystemKind::energy;
  std::vector<std::string> coefficient_names;
  std::vector<std::string> rate_names;
  Eigen::MatrixXd hamiltonian_block;
  Eigen::MatrixXd dissipative_block;
  std::vector<Eigen::MatrixXd> dissipative_terms;
  Eigen::VectorXd rhs;
  std::vector<RowInfo> rows;
  AdditionalBlock additional;

  Eigen::Index n_coefficients() const { return hamiltonian_block.cols(); }
  Eigen::Index n_rates() const { return static_cast<Eigen::Index>(rate_names.size()); }
  Eigen::Index n_rows() const { return hamiltonian_block.rows(); }

  /// (1/2) sum_k d_k M^(k).
  Eigen::MatrixXd dissipative_matrix(const Eigen::VectorXd& d) const;
  /// M_H + dissipative_matrix(d).
  Eigen::MatrixXd energy_matrix(const Eigen::VectorXd& d) const;
  /// Throws DimensionError on inconsistent shapes.
  void validate() const;
};

/// Which rows to build: initial states (empty = all) and quench end indices (empty = last).
struct RowSelection {
  std::vector<int> states;
  std::vector<int> ends;
};

ConstraintSystem build_ehrenfest(ExpectationSource& source, const Ansatz& ansatz,
                                 const DissipatorAnsatz& dissipators,
                                 const std::vector<Operator>& observables,
                                 const RowSelection& rows = {});

ConstraintSystem build_energy(ExpectationSource& source, const Ansatz& ansatz,
                              const DissipatorAnsatz& dissipators, const RowSelection& rows = {});

AdditionalBlock build_additional(ExpectationSource& source, const Ansatz& ansatz,
                                 const DissipatorAnsatz& dissipators,
                                 const std::vector<Operator>& probes,
                                 const RowSelection& rows = {});

/// Writes <prefix>.json (header) and <prefix>.bin (little-endian float64 blocks).
void save_system(const ConstraintSystem& sys, const std::string& prefix);
ConstraintSystem load_system(const std::string& prefix);

}  // namespace hlearn
