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

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlearn/dynamics.hpp"
#include "hlearn/experiment.hpp"
#include "hlearn/solver.hpp"

namespace hlearn {

/// Resample counts used by the shipped experiment configs.
inline constexpr int kResamplesIsing = 80;
inline constexpr int kResamplesXY = 40;
inline constexpr int kResamplesEnergy = 10;

struct BootstrapPlan {
  int n_resamples = kResamplesIsing;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Central interval reported alongside the standard deviation.
  double interval = 0.95;

  /// Throws ConfigError when n_resamples < 2 or the interval is outside (0, 1).
  void validate() const;
};

/// Vector-valued function of a dataset, recomputed on every resample.
using Statistic = std::function<Eigen::VectorXd(const QuenchDataset&)>;

struct BootstrapSummary {
  Eigen::VectorXd estimate;
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int n_resamples = 0;
};

/// Draws each setting's shot words with replacement; setting sizes are kept.
QuenchDataset resample_shots(const QuenchDataset& dataset, std::uint64_t seed);

/// Sample standard deviation and percentile interval of the statistic over resamples.
/// Resample b uses a seed derived from (plan.seed, b), so results do not depend on workers.
/// Throws ConfigError when a setting holds fewer than two shots.
BootstrapSummary bootstrap(const QuenchDataset& dataset, const Statistic& statistic,
                           const BootstrapPlan& plan);

struct ResampleChoice {
  int n_resamples = 0;
  /// Largest relative change of a nonzero error bar at the last doubling.
  double change = 0.0;
  BootstrapSummary summary;
};

/// Doubles r from plan.n_resamples until no error bar moves by more than `tolerance`
/// relative to the previous count, or r would exceed max_resamples.
ResampleChoice choose_resamples(const QuenchDataset& dataset, const Statistic& statistic,
                                const BootstrapPlan& plan, int max_resamples,
                                double tolerance = 0.1);

/// |sin| of the angle between two nonzero vectors; invariant under scaling either one.
double sin_theta(const Eigen::VectorXd& c_rec, const Eigen::VectorXd& c_true);

/// ||c_rec - c_true|| / ||c_true||.
double relative_error(const Eigen::VectorXd& c_rec, const Eigen::VectorXd& c_true);

/// Spectral norm of noisy - exact.
double error_matrix_norm(const Eigen::MatrixXd& noisy, const Eigen::MatrixXd& exact);

/// ||M c|| / (lambda_2 ||c||): an upper bound on |sin| of the angle between c and the
/// smallest right singular vector of M. Infinite when lambda_2 vanishes.
double sin_theta_bound(const Eigen::MatrixXd& m, const Eigen::VectorXd& c);

/// Projected ratio when the solver reported one, raw lambda_1 / lambda_2 otherwise.
double figure_of_merit(const LearningResult& result);

/// Turns measured or exact expectations into a learning result.
using Pipeline = std::function<LearningResult(ExpectationSource&)>;

struct CurvePoint {
  std::int64_t n_runs = 0;
  double ratio = 0.0;
  double ratio_err = 0.0;
  std::optional<double> sin_theta;
  std::optional<double> delta_add;
  bool converged = true;
};

struct LearningCurve {
  std::string name;
  std::vector<CurvePoint> points;
  /// Exact-oracle value of the figure of merit.
  std::optional<double> asymptote;
  std::optional<double> asymptote_sin_theta;

  bool converged() const;
  /// Throws std::invalid_argument unless n_runs is strictly increasing.
  void validate() const;
};

struct CurveTarget {
  std::string name;
  Pipeline pipeline;
  /// Coefficients compared against c_rec for the sin column.
  std::optional<Eigen::VectorXd> truth;
};

struct CurveOptions {
  std::uint64_t seed = 0;
  BootstrapPlan bootstrap;
  /// Points whose settings hold fewer than two shots get no error bar (NaN).
  bool with_errors = true;
  bool with_asymptote = true;
  int workers = 1;
  int substeps = 0;
};

/// Round(10^(k / per_decade)) for every k whose value lies in [lo, hi], plus hi itself.
std::vector<std::int64_t> log_budgets(std::int64_t lo, std::int64_t hi, int per_decade = 8);

/// One curve per target over a shared nested dataset: the largest budget is simulated once
/// and every smaller point is its prefix, so a point does not depend on the rest of the
/// schedule. Budgets whose allocation repeats the previous run count are skipped.
std::vector<LearningCurve> learning_curve(const LindbladModel& model,
                                          const QuenchProtocol& protocol,
                                          const std::vector<CurveTarget>& targets,
                                          const std::vector<std::int64_t>& budgets,
                                          const CurveOptions& options);

/// Header "n_runs,ratio,ratio_err,sin_theta,delta_add"; absent values are empty cells.
/// Lines starting with '#' carry the name, the asymptote and any extra key=value pairs.
std::string curve_csv(const LearningCurve& curve,
                      const std::vector<std::pair<std::string, std::string>>& extra = {});

/// Least-squares slope of log(y) against log(x); entries must be positive.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace hlearn
