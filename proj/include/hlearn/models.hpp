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
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlearn/constraints.hpp"
#include "hlearn/dynamics.hpp"
#include "hlearn/solver.hpp"

namespace hlearn {

/// A concrete generator together with its ground truth in library coordinates.
struct ModelSpec {
  std::string name;
  LindbladModel model;
  /// True rates keyed by dissipator ansatz name (only where the ansatz can represent them).
  std::map<std::string, Eigen::VectorXd> true_rates;

  int n_sites() const { return model.n_sites(); }
};

/// Next-nearest-neighbour Ising chain with polynomial couplings and local noise.
/// Rates are (absorption, emission, dephasing) in units of b_z.
struct IsingParams {
  int n_sites = 5;
  double b_z = 1.0;
  double b_x_ratio = 0.8;
  std::array<double, 5> a{1.2, 0.05, 0.2, 0.0, -0.4};
  std::array<double, 5> b{0.2, 0.05, -0.4, 0.0, 0.8};
  std::array<double, 3> rates{0.01, 0.015, 0.02};
};

/// x_{i,j} = ((i + j) - (n + 1)) / n for one-based sites i, j.
double ising_coordinate(int i, int j, int n_sites);
/// sum_l coeffs[l] * x^l.
double coupling_polynomial(const std::array<double, 5>& coeffs, double x);
ModelSpec ising_model(const IsingParams& params);

/// Long-range XY chain of ions with jittered positions, site decay and correlated dephasing
/// Gamma_kl = gamma_z delta_kl + gamma_0.
struct XYParams {
  int n_sites = 6;
  double j0 = 120.0;
  double alpha = 1.5;
  double b_z = 100.0;
  double jitter = 0.05;
  double gamma_minus = 5.0;
  double gamma_z = 7.5;
  double gamma_0 = 2.5;
  std::uint64_t seed = 1;
};

/// Positions i + r_i with r_i uniform in [-jitter, jitter].
std::vector<double> ion_positions(int n_sites, double jitter, std::uint64_t seed);
/// Couplings J_ij = j0 / |p_i - p_j|^alpha for i < j, row-major over pairs.
std::vector<double> power_law_couplings(const std::vector<double>& positions, double j0, double alpha);
ModelSpec xy_model(const XYParams& params);

/// Independent XY blocks sharing one coupling pattern; no field, no noise.
struct SubsystemParams {
  int n_blocks = 1;
  int block_size = 5;
  double j0 = 1.2;
  double alpha = 1.5;
  double jitter = 0.05;
  std::uint64_t seed = 1;
};

ModelSpec subsystem_model(const SubsystemParams& params);

/// XX + YY on sites i, j.
Operator flip_flop(int n_sites, int i, int j);

/// Hamiltonian ansatz by name: A1, A2, A3, A4, A5, AXY, A_sub (block_size required).
Ansatz hamiltonian_ansatz(const std::string& name, int n_sites, int block_size = 0);
/// Dissipator ansatz by name: none, D_loc, D_col, D_dist (distance_cap < 0 means no cap).
DissipatorAnsatz dissipator_ansatz(const std::string& name, int n_sites, int distance_cap = -1);

/// Families grouped by the name prefix before '[' into normalized indicator columns.
Parametrization homogeneous_parametrization(const Ansatz& ansatz);
/// Flip-flop families xy[i,j] weighted by |i - j|^-alpha in one column; every other
/// prefix group gets an indicator column. alpha ranges over [0, 3].
Parametrization power_law_parametrization(const Ansatz& ansatz);

struct Projection {
  Eigen::VectorXd coefficients;
  /// Relative Pauli-norm residual of the best fit.
  double residual = 0.0;
};

/// Least-squares coefficients of op in the span of the ansatz families.
Projection project_onto(const Ansatz& ansatz, const Operator& op);

/// Probe operators: "site0" {X0, Y0, Z0}, "pair01" (site0 plus X1, Y1, Z1, XX, XY, YX, YY on
/// sites 0 and 1), "sites" (X, Y, Z on every site).
std::vector<Operator> probe_set(const std::string& name, int n_sites);

/// Every Pauli string of weight 1..max_weight.
std::vector<Operator> local_observables(int n_sites, int max_weight = 2);

}  // namespace hlearn
