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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "hlearn/constraints.hpp"

namespace hlearn {

/// Singular values in ascending order with the matching right singular vectors as columns.
struct Spectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  /// Set when the matrix has fewer rows than columns.
  bool underdetermined = false;

  double ratio() const;
};

/// Full right spectrum of a real matrix. Rows beyond the column count are first folded
/// into a triangular factor. Throws SolverError on non-finite entries.
Spectrum svd_min(const Eigen::MatrixXd& matrix);

/// Isometry G(alpha) with orthonormal columns, optionally depending on nonlinear parameters.
struct Parametrization {
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> generator;
  std::vector<std::pair<double, double>> alpha_bounds;

  /// Constant G; columns are orthonormalized.
  static Parametrization fixed(const Eigen::MatrixXd& g);
  int n_alpha() const { return static_cast<int>(alpha_bounds.size()); }
  /// Orthonormalized G at alpha; throws SolverError on dependent columns.
  Eigen::MatrixXd matrix(const Eigen::VectorXd& alpha = {}) const;
};

/// Gram-Schmidt on the columns, preserving their directions.
Eigen::MatrixXd orthonormalize_columns(const Eigen::MatrixXd& g);

struct SolverConfig {
  double xi = 0.0;
  double beta = 0.0;
  /// Upper bound per rate; a single entry applies to every rate.
  std::vector<double> d_max{1.0};
  /// Objective evaluations per box dimension.
  int direct_budget = 500;
  double direct_epsilon = 1e-4;
  /// Relative change of the optimum between budget and twice the budget counted as converged.
  double convergence_tolerance = 1e-2;
  double degeneracy_ratio = 0.1;
  double degeneracy_scale = 1e-3;
  bool polish = true;

  void validate(Eigen::Index n_rates) const;
  double upper(Eigen::Index k) const;
};

struct LearningResult {
  std::vector<std::string> coefficient_names;
  std::vector<std::string> rate_names;
  /// Solution direction; unit norm for homogeneous problems.
  Eigen::VectorXd c_rec;
  /// s * c_rec when an overall scale is available.
  std::optional<Eigen::VectorXd> c_scaled;
  std::optional<double> scale;
  Eigen::VectorXd d_rec;
  std::optional<Eigen::VectorXd> alpha_rec;
  Spectrum spectrum;
  std::optional<Eigen::VectorXd> projected_spectrum;
  std::optional<double> ratio_projected;
  double ratio = 0.0;
  double residual = 0.0;
  std::optional<double> delta_add;
  bool converged = true;
  int evaluations = 0;
  std::vector<std::string> warnings;

  /// Coefficients in physical units: c_scaled when present, else c_rec.
  const Eigen::VectorXd& coefficients() const { return c_scaled ? *c_scaled : c_rec; }
};

nlohmann::json result_to_json(const LearningResult& result);

struct BoxResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
};

/// Deterministic DIRECT (dividing rectangles) minimization over [lower, upper].
BoxResult direct_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                          int max_evaluations, double epsilon = 1e-4);

/// Compass search started at x with initial step h per coordinate, kept inside the box.
BoxResult pattern_search(const std::function<double(const Eigen::VectorXd&)>& f,
                         Eigen::VectorXd x, Eigen::VectorXd step, const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, double min_step_fraction = 1e-9,
                         int max_evaluations = 20000);

struct BoundedLsq {
  Eigen::VectorXd free;
  Eigen::VectorXd nonneg;
  double residual = 0.0;
  Eigen::VectorXd gradient;  // gradient of 1/2 |r|^2 with respect to the nonneg block
};

/// min |A x + B y - b| over x free and y >= 0 (active set on y).
BoundedLsq bounded_least_squares(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b_cols,
                                 const Eigen::VectorXd& rhs);

/// Ehrenfest constraints: least squares with nonnegative rates.
LearningResult solve_ehrenfest(const ConstraintSystem& sys, const SolverConfig& cfg);

/// Energy constraints: minimal singular value over the rate box.
LearningResult solve_energy(const ConstraintSystem& sys, const SolverConfig& cfg);

/// Energy constraints stacked with xi-weighted additional rows; fixes the overall scale.
LearningResult solve_with_additional(const ConstraintSystem& sys, const SolverConfig& cfg);

/// Dispatches on the system kind, on xi and on the presence of additional rows.
LearningResult solve(const ConstraintSystem& sys, const SolverConfig& cfg);

/// Every coefficient block right-multiplied by G; names become g0, g1, ...
ConstraintSystem reparametrize(const ConstraintSystem& sys, const Eigen::MatrixXd& g);

/// Solves in the image of G(alpha), searching alpha over its box, and maps back c = G c_G.
LearningResult solve_parametrized(const ConstraintSystem& sys, const Parametrization& p,
                                  const SolverConfig& cfg);

/// Appends beta (I - G G^T) rows to the coefficient block.
ConstraintSystem regularize(const ConstraintSystem& sys, const Eigen::MatrixXd& g, double beta);

LearningResult solve_regularized(const ConstraintSystem& sys, const Eigen::MatrixXd& g,
                                 const SolverConfig& cfg);

/// Norm of the regularized constraint matrix applied to the solution.
double regularized_cost(const ConstraintSystem& sys, const Eigen::MatrixXd& g, double beta,
                        const Eigen::VectorXd& c, const Eigen::VectorXd& d);

struct BetaSpectrum {
  double beta = 0.0;
  /// Singular values of [M(d); beta (I - G G^T)], ascending.
  Eigen::VectorXd values;
  /// |G^T v|^2 for the matching right singular vector: 1 inside image(G), 0 outside.
  Eigen::VectorXd image_weight;
  /// Smallest singular value, the minimum of the regularized cost at fixed d.
  double cost = 0.0;
};

/// Spectrum of the regularized energy matrix at fixed rates for every beta.
std::vector<BetaSpectrum> sweep_beta(const ConstraintSystem& sys, const Eigen::MatrixXd& g,
                                     const Eigen::VectorXd& d, const std::vector<double>& betas);

/// Number of near-null directions: the largest k >= 2 with lambda_k / lambda_{k+1} below
/// ratio and lambda_k below scale * lambda_max, else 1.
int kernel_dimension(const Eigen::VectorXd& ascending, double ratio = 0.1, double scale = 1e-3);

struct ProjectedSpectrum {
  Eigen::VectorXd values;
  double ratio = 0.0;
};

/// Replaces the kernel_dim smallest right singular directions of m by their component along
/// c and recomputes the spectrum. Throws SolverError when c is orthogonal to that subspace.
ProjectedSpectrum projected_ratio(const Eigen::MatrixXd& m, const Eigen::VectorXd& c,
                                  int kernel_dim);

/// |M_add c - b|.
double delta_add(const Eigen::MatrixXd& m_add, const Eigen::VectorXd& c, const Eigen::VectorXd& b);

}  // namespace hlearn
