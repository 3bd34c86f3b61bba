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

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hlearn/density_matrix.hpp"
#include "hlearn/pauli.hpp"

namespace hlearn {

/// Uniform grid t_m = m * dt on [0, T] with an even number of intervals.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double total_time, int n_steps);

  double total_time() const { return total_time_; }
  int n_steps() const { return n_steps_; }
  int n_points() const { return n_steps_ + 1; }
  double dt() const { return total_time_ / n_steps_; }
  double time(int m) const { return dt() * m; }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.total_time_ == b.total_time_ && a.n_steps_ == b.n_steps_;
  }

 private:
  double total_time_ = 1.0;
  int n_steps_ = 2;
};

/// Composite Simpson integral of samples f_0..f_{2k} with spacing dt.
double simpson(std::span<const double> samples, double dt);

/// Simpson integral from t_0 to t_end for an even end index.
double simpson_to(std::span<const double> samples, int end_index, double dt);

/// Simpson weights (1, 4, 2, ..., 4, 1) * dt/3 for the first end_index + 1 samples.
std::vector<double> simpson_weights(int end_index, double dt);

/// Jump term rate * (L rho R^dag - 1/2 {R^dag L, rho}). Local channels have left == right;
/// a Kossakowski pair contributes the two ordered channels (A_k, A_l) and (A_l, A_k).
struct Channel {
  Operator left;
  Operator right;
  double rate = 0.0;
};

class LindbladModel {
 public:
  LindbladModel() = default;
  /// Validates hermiticity, rate signs and positivity of the rate matrix over jump operators.
  LindbladModel(Operator hamiltonian, std::vector<Channel> channels);

  int n_sites() const { return hamiltonian_.n_sites(); }
  const Operator& hamiltonian() const { return hamiltonian_; }
  const std::vector<Channel>& channels() const { return channels_; }

  /// Groups of sites coupled by the Hamiltonian or a channel; sorted, disjoint, covering.
  std::vector<std::vector<int>> independent_blocks() const;

  /// The model restricted to a block returned by independent_blocks().
  LindbladModel restrict_to(const std::vector<int>& sites) const;

  /// Default RK4 substeps per grid interval so that the step times the generator norm is <= 0.05.
  int default_substeps(const TimeGrid& grid) const;

  /// Pauli-sum bound on the generator norm.
  double generator_norm() const;

 private:
  Operator hamiltonian_;
  std::vector<Channel> channels_;
};

/// Generator of the master equation compiled into masked Pauli actions on a dense matrix.
/// Every contribution has the form C(i, j) * rho(i ^ xl, j ^ xr).
class Liouvillian {
 public:
  explicit Liouvillian(const LindbladModel& model);

  int n_sites() const { return n_sites_; }
  /// out = L(rho).
  void apply(const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& out) const;

 private:
  struct Separable {
    Eigen::VectorXcd u;
    Eigen::VectorXcd v;
  };
  struct Group {
    std::uint64_t xl = 0;
    std::uint64_t xr = 0;
    Eigen::MatrixXcd dense;  // used when non-empty
    std::vector<Separable> terms;
  };

  int n_sites_ = 0;
  std::vector<Group> groups_;
};

using StateVisitor = std::function<void(int time_index, const Eigen::MatrixXcd& rho)>;

/// Integrates the master equation with classical RK4, calling visit at every grid point
/// (including t_0). substeps <= 0 selects the model default. Throws IntegratorError when
/// the trace drifts by more than 1e-6.
void evolve_visit(const LindbladModel& model, const DensityMatrix& state0, const TimeGrid& grid,
                  int substeps, const StateVisitor& visit);

std::vector<DensityMatrix> evolve(const LindbladModel& model, const DensityMatrix& state0,
                                  const TimeGrid& grid, int substeps = 0);

struct TimeTrace {
  std::vector<double> samples;
  double integral = 0.0;
};

/// Real part of <op> at every grid point and its Simpson integral over [0, T].
TimeTrace time_trace(const LindbladModel& model, const DensityMatrix& state0, const Operator& op,
                     const TimeGrid& grid, int substeps = 0);

}  // namespace hlearn
