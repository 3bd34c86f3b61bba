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
#include "hlearn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "hlearn/error.hpp"
#include "internal.hpp"

namespace hlearn {

using detail::parallel_for;
using detail::splitmix64;

void BootstrapPlan::validate() const {
  if (n_resamples < 2) throw ConfigError("bootstrap: n_resamples must be at least 2");
  if (!(interval > 0.0 && interval < 1.0)) throw ConfigError("bootstrap: interval must lie in (0, 1)");
  if (workers < 1) throw ConfigError("bootstrap: workers must be positive");
}

QuenchDataset resample_shots(const QuenchDataset& dataset, std::uint64_t seed) {
  QuenchDataset out = dataset;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const ShotWords& words = dataset.records[i];
    if (words.empty()) throw ConfigError("bootstrap: setting " + std::to_string(i) + " has no shots");
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    for (auto& w : out.records[i]) w = words[pick(rng)];
  }
  return out;
}

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::uint64_t resample_seed(std::uint64_t seed, int b) {
  return splitmix64(seed ^ splitmix64(0xB0075712A9ULL + static_cast<std::uint64_t>(b)));
}

}  // namespace

BootstrapSummary bootstrap(const QuenchDataset& dataset, const Statistic& statistic,
                           const BootstrapPlan& plan) {
  plan.validate();
  dataset.validate();
  for (std::size_t i = 0; i < dataset.settings.size(); ++i) {
    if (dataset.settings[i].shots < 2) {
      throw ConfigError("bootstrap: setting " + std::to_string(i) + " has fewer than two shots");
    }
  }
  BootstrapSummary out;
  out.estimate = statistic(dataset);
  const Eigen::Index k = out.estimate.size();
  const int r = plan.n_resamples;
  Eigen::MatrixXd draws(k, r);
  parallel_for(r, plan.workers, [&](int b) {
    const Eigen::VectorXd v = statistic(resample_shots(dataset, resample_seed(plan.seed, b)));
    if (v.size() != k) throw DimensionError("bootstrap: statistic changed length between resamples");
    draws.col(b) = v;
  });
  out.n_resamples = r;
  out.mean = draws.rowwise().mean();
  out.stddev.resize(k);
  out.lower.resize(k);
  out.upper.resize(k);
  const double tail = 0.5 * (1.0 - plan.interval);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::ArrayXd centered = draws.row(j).array() - out.mean(j);
    out.stddev(j) = std::sqrt(centered.square().sum() / static_cast<double>(r - 1));
    std::vector<double> row(static_cast<std::size_t>(r));
    for (int b = 0; b < r; ++b) row[static_cast<std::size_t>(b)] = draws(j, b);
    out.lower(j) = quantile(row, tail);
    out.upper(j) = quantile(row, 1.0 - tail);
  }
  return out;
}

ResampleChoice choose_resamples(const QuenchDataset& dataset, const Statistic& statistic,
                                const BootstrapPlan& plan, int max_resamples, double tolerance) {
  if (max_resamples < plan.n_resamples) throw ConfigError("bootstrap: max_resamples below start");
  BootstrapPlan current = plan;
  ResampleChoice choice;
  choice.summary = bootstrap(dataset, statistic, current);
  choice.n_resamples = current.n_resamples;
  choice.change = std::numeric_limits<double>::infinity();
  while (2 * current.n_resamples <= max_resamples) {
    current.n_resamples *= 2;
    BootstrapSummary next = bootstrap(dataset, statistic, current);
    double change = 0.0;
    for (Eigen::Index j = 0; j < next.stddev.size(); ++j) {
      const double ref = choice.summary.stddev(j);
      if (ref > 0.0) change = std::max(change, std::abs(next.stddev(j) - ref) / ref);
      else if (next.stddev(j) > 0.0) change = std::numeric_limits<double>::infinity();
    }
    choice.change = change;
    if (change < tolerance) break;
    choice.summary = std::move(next);
    choice.n_resamples = current.n_resamples;
  }
  return choice;
}

double sin_theta(const Eigen::VectorXd& c_rec, const Eigen::VectorXd& c_true) {
  if (c_rec.size() != c_true.size()) throw DimensionError("sin_theta: length mismatch");
  const double a = c_rec.norm(), b = c_true.norm();
  if (a == 0.0 || b == 0.0) throw std::invalid_argument("sin_theta: zero vector");
  const double cos = std::clamp(std::abs(c_rec.dot(c_true)) / (a * b), 0.0, 1.0);
  // The residual form keeps precision for nearly parallel vectors.
  const Eigen::VectorXd u = c_rec / a, w = c_true / b;
  const double s = (u - u.dot(w) * w).norm();
  return std::clamp(cos > 0.5 ? s : std::sqrt(1.0 - cos * cos), 0.0, 1.0);
}

double relative_error(const Eigen::VectorXd& c_rec, const Eigen::VectorXd& c_true) {
  if (c_rec.size() != c_true.size()) throw DimensionError("relative_error: length mismatch");
  const double b = c_true.norm();
  if (b == 0.0) throw std::invalid_argument("relative_error: zero truth vector");
  return (c_rec - c_true).norm() / b;
}

double error_matrix_norm(const Eigen::MatrixXd& noisy, const Eigen::MatrixXd& exact) {
  if (noisy.rows() != exact.rows() || noisy.cols() != exact.cols()) {
    throw DimensionError("error_matrix_norm: shape mismatch");
  }
  if (noisy.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(noisy - exact);
  return svd.singularValues()(0);
}

double sin_theta_bound(const Eigen::MatrixXd& m, const Eigen::VectorXd& c) {
  if (m.cols() != c.size()) throw DimensionError("sin_theta_bound: length mismatch");
  if (c.norm() == 0.0) throw std::invalid_argument("sin_theta_bound: zero vector");
  const Spectrum s = svd_min(m);
  if (s.values.size() < 2 || s.values(1) == 0.0) return std::numeric_limits<double>::infinity();
  return (m * c).norm() / (s.values(1) * c.norm());
}

double figure_of_merit(const LearningResult& result) {
  return result.ratio_projected ? *result.ratio_projected : result.ratio;
}

bool LearningCurve::converged() const {
  return std::all_of(points.begin(), points.end(), [](const CurvePoint& p) { return p.converged; });
}

void LearningCurve::validate() const {
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].n_runs <= points[i - 1].n_runs) {
      throw std::invalid_argument("learning curve: n_runs must be strictly increasing");
    }
  }
}

std::vector<std::int64_t> log_budgets(std::int64_t lo, std::int64_t hi, int per_decade) {
  if (lo < 1 || hi < lo || per_decade < 1) throw ConfigError("log_budgets: need 1 <= lo <= hi");
  std::vector<std::int64_t> out;
  const int k0 = static_cast<int>(std::floor(std::log10(static_cast<double>(lo)) * per_decade)) - 1;
  for (int k = k0;; ++k) {
    const auto v = static_cast<std::int64_t>(std::llround(std::pow(10.0, static_cast<double>(k) / per_decade)));
    if (v >= hi) break;
    if (v >= lo && (out.empty() || v > out.back())) out.push_back(v);
  }
  out.push_back(hi);
  return out;
}

std::vector<LearningCurve> learning_curve(const LindbladModel& model,
                                          const QuenchProtocol& protocol,
                                          const std::vector<CurveTarget>& targets,
                                          const std::vector<std::int64_t>& budgets,
                                          const CurveOptions& options) {
  if (budgets.empty()) throw ConfigError("learning_curve: empty budget schedule");
  for (std::size_t i = 1; i < budgets.size(); ++i) {
    if (budgets[i] <= budgets[i - 1]) throw ConfigError("learning_curve: budgets must increase");
  }
  if (options.with_errors) options.bootstrap.validate();
  protocol.validate();

  std::vector<LearningCurve> curves(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) curves[t].name = targets[t].name;

  const QuenchDataset full =
      simulate_dataset(model, protocol, budgets.back(), options.seed, options.workers, options.substeps);
  std::int64_t last_runs = 0;
  for (const std::int64_t budget : budgets) {
    const QuenchDataset ds = full.prefix(protocol.allocate(budget));
    const std::int64_t runs = ds.total_runs();
    if (runs <= last_runs) continue;
    last_runs = runs;
    const bool bootstrappable = std::all_of(ds.settings.begin(), ds.settings.end(),
                                            [](const MeasurementSetting& s) { return s.shots >= 2; });
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const CurveTarget& target = targets[t];
      DatasetSource source(ds);
      const LearningResult result = target.pipeline(source);
      CurvePoint point;
      point.n_runs = runs;
      point.ratio = figure_of_merit(result);
      point.converged = result.converged;
      point.delta_add = result.delta_add;
      if (target.truth) point.sin_theta = sin_theta(result.c_rec, *target.truth);
      point.ratio_err = std::numeric_limits<double>::quiet_NaN();
      if (options.with_errors && bootstrappable) {
        BootstrapPlan plan = options.bootstrap;
        plan.seed = splitmix64(options.bootstrap.seed ^ static_cast<std::uint64_t>(runs));
        const Statistic stat = [&](const QuenchDataset& d) {
          DatasetSource s(d);
          return Eigen::VectorXd::Constant(1, figure_of_merit(target.pipeline(s)));
        };
        point.ratio_err = bootstrap(ds, stat, plan).stddev(0);
      }
      curves[t].points.push_back(point);
    }
  }
  if (options.with_asymptote) {
    OracleSource oracle(model, protocol.states, protocol.grid, options.substeps, options.workers);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const LearningResult result = targets[t].pipeline(oracle);
      curves[t].asymptote = figure_of_merit(result);
      if (targets[t].truth) curves[t].asymptote_sin_theta = sin_theta(result.c_rec, *targets[t].truth);
    }
  }
  return curves;
}

namespace {

std::string cell(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string cell(const std::optional<double>& v) { return v ? cell(*v) : std::string(); }

}  // namespace

std::string curve_csv(const LearningCurve& curve,
                      const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ostringstream os;
  os << "# name=" << curve.name << '\n';
  if (curve.asymptote) os << "# asymptote=" << cell(curve.asymptote) << '\n';
  if (curve.asymptote_sin_theta) os << "# asymptote_sin_theta=" << cell(curve.asymptote_sin_theta) << '\n';
  for (const auto& [key, value] : extra) os << "# " << key << '=' << value << '\n';
  os << "n_runs,ratio,ratio_err,sin_theta,delta_add\n";
  for (const CurvePoint& p : curve.points) {
    os << p.n_runs << ',' << cell(p.ratio) << ',' << cell(p.ratio_err) << ',' << cell(p.sin_theta) << ','
       << cell(p.delta_add) << '\n';
  }
  return os.str();
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("log_log_slope: need two or more points");
  double mx = 0.0, my = 0.0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw std::invalid_argument("log_log_slope: entries must be positive");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("log_log_slope: x values coincide");
  return sxy / sxx;
}

}  // namespace hlearn
