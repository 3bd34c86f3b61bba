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
#include "hlearn/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hlearn/error.hpp"

namespace hlearn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Largest-magnitude component positive.
void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  if (v.size() == 0) return;
  Eigen::Index k = 0;
  v.cwiseAbs().maxCoeff(&k);
  if (v(k) < 0) v = -v;
}

std::string format_double(double x) {
  std::ostringstream out;
  out.precision(3);
  out << x;
  return out.str();
}

}  // namespace

double Spectrum::ratio() const {
  if (values.size() < 2) return 0.0;
  if (!(values(1) > 0.0)) return 1.0;
  return std::clamp(values(0) / values(1), 0.0, 1.0);
}

Spectrum svd_min(const Eigen::MatrixXd& matrix) {
  if (!matrix.allFinite()) throw SolverError("svd_min: non-finite matrix entries");
  const Eigen::Index p = matrix.rows();
  const Eigen::Index n = matrix.cols();
  Spectrum out;
  out.underdetermined = p < n;
  if (n == 0) return out;

  Eigen::MatrixXd reduced;
  if (p > n) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(matrix);
    reduced = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  } else {
    reduced = matrix;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(reduced, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();
  out.values = Eigen::VectorXd::Zero(n);
  out.vectors.resize(n, n);
  // Descending values with the null directions last; reverse into ascending order.
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = n - 1 - j;
    out.values(j) = src < sv.size() ? sv(src) : 0.0;
    out.vectors.col(j) = v.col(src);
    fix_sign(out.vectors.col(j));
  }
  return out;
}

Eigen::MatrixXd orthonormalize_columns(const Eigen::MatrixXd& g) {
  Eigen::MatrixXd q = g;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    const double original = g.col(j).norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    }
    const double norm = q.col(j).norm();
    if (!(norm > 1e-10 * std::max(original, 1e-300))) {
      throw SolverError("parametrization: column " + std::to_string(j) + " is dependent");
    }
    q.col(j) /= norm;
  }
  return q;
}

Parametrization Parametrization::fixed(const Eigen::MatrixXd& g) {
  Parametrization p;
  const Eigen::MatrixXd q = orthonormalize_columns(g);
  p.generator = [q](const Eigen::VectorXd&) { return q; };
  return p;
}

Eigen::MatrixXd Parametrization::matrix(const Eigen::VectorXd& alpha) const {
  if (!generator) throw SolverError("parametrization without generator");
  if (alpha.size() != n_alpha()) throw DimensionError("parametrization: alpha size mismatch");
  return orthonormalize_columns(generator(alpha));
}

void SolverConfig::validate(Eigen::Index n_rates) const {
  if (!(xi >= 0.0)) throw ConfigError("solver: xi must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("solver: beta must be >= 0");
  if (direct_budget < 1) throw ConfigError("solver: direct_budget must be positive");
  if (d_max.empty()) throw ConfigError("solver: d_max is empty");
  if (d_max.size() != 1 && static_cast<Eigen::Index>(d_max.size()) != n_rates) {
    throw ConfigError("solver: d_max needs one entry or one per rate");
  }
  for (double u : d_max) {
    if (!(u > 0.0)) throw ConfigError("solver: d_max entries must be > 0");
  }
}

double SolverConfig::upper(Eigen::Index k) const {
  return d_max.size() == 1 ? d_max.front() : d_max.at(static_cast<std::size_t>(k));
}

nlohmann::json result_to_json(const LearningResult& r) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto keyed = [&](const std::vector<std::string>& names, const Eigen::VectorXd& v) {
    nlohmann::json obj = nlohmann::json::object();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const std::string key =
          static_cast<std::size_t>(i) < names.size() ? names[i] : "p" + std::to_string(i);
      obj[key] = v(i);
    }
    return obj;
  };
  nlohmann::json j;
  j["c_rec"] = keyed(r.coefficient_names, r.c_rec);
  if (r.c_scaled) j["c_scaled"] = keyed(r.coefficient_names, *r.c_scaled);
  if (r.scale) j["scale"] = *r.scale;
  j["d_rec"] = keyed(r.rate_names, r.d_rec);
  if (r.alpha_rec) j["alpha_rec"] = vec(*r.alpha_rec);
  j["spectrum"] = vec(r.spectrum.values);
  if (r.projected_spectrum) j["projected_spectrum"] = vec(*r.projected_spectrum);
  j["ratio"] = r.ratio;
  if (r.ratio_projected) j["ratio_projected"] = *r.ratio_projected;
  j["residual"] = r.residual;
  if (r.delta_add) j["delta_add"] = *r.delta_add;
  j["converged"] = r.converged;
  j["evaluations"] = r.evaluations;
  j["warnings"] = r.warnings;
  return j;
}

// ---------------------------------------------------------------------------------------
// DIRECT

namespace {

struct Rect {
  Eigen::VectorXd center;  // unit-cube coordinates
  std::vector<int> level;  // side length along k is 3^-level[k]
  double value = 0.0;
  double size = 0.0;
};

double rect_size(const std::vector<int>& level) {
  double s = 0.0;
  for (int l : level) s += std::pow(3.0, -2.0 * l);
  return 0.5 * std::sqrt(s);
}

}  // namespace

BoxResult direct_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                          int max_evaluations, double epsilon) {
  const Eigen::Index n = lower.size();
  if (upper.size() != n) throw DimensionError("direct_minimize: bound size mismatch");
  if (n == 0) throw DimensionError("direct_minimize: empty box");
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(upper(k) > lower(k))) throw SolverError("direct_minimize: empty interval");
  }
  const Eigen::VectorXd width = upper - lower;
  BoxResult best;
  auto eval = [&](const Eigen::VectorXd& unit) {
    const Eigen::VectorXd x = lower + width.cwiseProduct(unit);
    double v = f(x);
    if (std::isnan(v)) v = kInf;
    ++best.evaluations;
    if (best.evaluations == 1 || v < best.value) {
      best.value = v;
      best.x = x;
    }
    return v;
  };

  std::vector<Rect> rects;
  {
    Rect r;
    r.center = Eigen::VectorXd::Constant(n, 0.5);
    r.level.assign(static_cast<std::size_t>(n), 0);
    r.value = eval(r.center);
    r.size = rect_size(r.level);
    rects.push_back(std::move(r));
  }

  while (best.evaluations < max_evaluations) {
    // Best rectangle per size class, classes ordered by size.
    std::map<double, std::size_t> by_size;
    for (std::size_t i = 0; i < rects.size(); ++i) {
      auto it = by_size.find(rects[i].size);
      if (it == by_size.end() || rects[i].value < rects[it->second].value) by_size[rects[i].size] = i;
    }
    std::vector<std::size_t> cls;
    for (const auto& [s, i] : by_size) cls.push_back(i);

    const double fmin = best.value;
    // Start from the minimal value (largest size on ties); lower convex hull to the right.
    std::size_t start = 0;
    for (std::size_t c = 0; c < cls.size(); ++c) {
      if (rects[cls[c]].value <= rects[cls[start]].value) start = c;
    }
    std::vector<std::size_t> hull;
    for (std::size_t c = start; c < cls.size(); ++c) {
      const Rect& r = rects[cls[c]];
      while (hull.size() >= 2) {
        const Rect& a = rects[hull[hull.size() - 2]];
        const Rect& b = rects[hull.back()];
        const double cross = (b.size - a.size) * (r.value - a.value) - (b.value - a.value) * (r.size - a.size);
        if (cross <= 0.0) {
          hull.pop_back();
        } else {
          break;
        }
      }
      hull.push_back(cls[c]);
    }
    std::vector<std::size_t> selected;
    for (std::size_t h = 0; h < hull.size(); ++h) {
      const Rect& r = rects[hull[h]];
      if (h + 1 == hull.size()) {
        selected.push_back(hull[h]);
        continue;
      }
      const Rect& next = rects[hull[h + 1]];
      const double k_hi = (next.value - r.value) / (next.size - r.size);
      if (r.value - k_hi * r.size <= fmin - epsilon * std::abs(fmin)) selected.push_back(hull[h]);
    }

    for (std::size_t idx : selected) {
      if (best.evaluations >= max_evaluations) break;
      const int min_level = *std::min_element(rects[idx].level.begin(), rects[idx].level.end());
      std::vector<Eigen::Index> dims;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (rects[idx].level[static_cast<std::size_t>(k)] == min_level) dims.push_back(k);
      }
      const double delta = std::pow(3.0, -(min_level + 1));
      struct Probe {
        Eigen::Index dim;
        Eigen::VectorXd plus, minus;
        double f_plus, f_minus;
      };
      std::vector<Probe> probes;
      for (Eigen::Index k : dims) {
        Probe pr;
        pr.dim = k;
        pr.plus = rects[idx].center;
        pr.minus = rects[idx].center;
        pr.plus(k) += delta;
        pr.minus(k) -= delta;
        pr.f_plus = eval(pr.plus);
        pr.f_minus = eval(pr.minus);
        probes.push_back(std::move(pr));
      }
      std::stable_sort(probes.begin(), probes.end(), [](const Probe& a, const Probe& b) {
        return std::min(a.f_plus, a.f_minus) < std::min(b.f_plus, b.f_minus);
      });
      for (const Probe& pr : probes) {
        rects[idx].level[static_cast<std::size_t>(pr.dim)] += 1;
        for (int side = 0; side < 2; ++side) {
          Rect child;
          child.center = side == 0 ? pr.plus : pr.minus;
          child.value = side == 0 ? pr.f_plus : pr.f_minus;
          child.level = rects[idx].level;
          child.size = rect_size(child.level);
          rects.push_back(std::move(child));
        }
      }
      rects[idx].size = rect_size(rects[idx].level);
    }
  }
  return best;
}

BoxResult pattern_search(const std::function<double(const Eigen::VectorXd&)>& f,
                         Eigen::VectorXd x, Eigen::VectorXd step, const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, double min_step_fraction,
                         int max_evaluations) {
  const Eigen::Index n = x.size();
  BoxResult out;
  out.x = x;
  out.value = f(x);
  out.evaluations = 1;
  const Eigen::VectorXd min_step = min_step_fraction * (upper - lower);
  while (out.evaluations < max_evaluations) {
    bool any_large = false;
    for (Eigen::Index k = 0; k < n; ++k) any_large = any_large || step(k) > min_step(k);
    if (!any_large) break;
    Eigen::VectorXd best_x = out.x;
    double best_v = out.value;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (step(k) <= min_step(k)) continue;
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd y = out.x;
        y(k) = std::clamp(y(k) + sign * step(k), lower(k), upper(k));
        if (y(k) == out.x(k)) continue;
        double v = f(y);
        ++out.evaluations;
        if (v < best_v) {
          best_v = v;
          best_x = y;
        }
      }
    }
    if (best_v < out.value) {
      // Step along the improving direction once more before re-probing.
      const Eigen::VectorXd dir = best_x - out.x;
      out.x = best_x;
      out.value = best_v;
      const Eigen::VectorXd y = (out.x + dir).cwiseMax(lower).cwiseMin(upper);
      if (y != out.x) {
        const double v = f(y);
        ++out.evaluations;
        if (v < out.value) {
          out.x = y;
          out.value = v;
        }
      }
    } else {
      step *= 0.5;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// Least squares

namespace {

// Lawson-Hanson active set: min |B y - b| with y >= 0.
Eigen::VectorXd nnls(const Eigen::MatrixXd& b_mat, const Eigen::VectorXd& rhs) {
  const Eigen::Index m = b_mat.cols();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (m == 0) return y;
  std::vector<bool> passive(static_cast<std::size_t>(m), false);
  const double tol = 1e-12 * std::max(1.0, b_mat.norm() * rhs.norm());
  auto solve_passive = [&](const std::vector<bool>& set) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (set[static_cast<std::size_t>(k)]) idx.push_back(k);
    }
    Eigen::MatrixXd sub(b_mat.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = b_mat.col(idx[j]);
    Eigen::VectorXd zs = sub.colPivHouseholderQr().solve(rhs);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    for (std::size_t j = 0; j < idx.size(); ++j) z(idx[j]) = zs(static_cast<Eigen::Index>(j));
    return z;
  };
  for (int outer = 0; outer < 3 * static_cast<int>(m) + 10; ++outer) {
    const Eigen::VectorXd w = b_mat.transpose() * (rhs - b_mat * y);
    Eigen::Index j = -1;
    double wmax = tol;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (!passive[static_cast<std::size_t>(k)] && w(k) > wmax) {
        wmax = w(k);
        j = k;
      }
    }
    if (j < 0) break;
    passive[static_cast<std::size_t>(j)] = true;
    for (int inner = 0; inner < 3 * static_cast<int>(m) + 10; ++inner) {
      const Eigen::VectorXd z = solve_passive(passive);
      bool feasible = true;
      double alpha = 1.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        if (passive[static_cast<std::size_t>(k)] && z(k) <= 0.0) {
          feasible = false;
          alpha = std::min(alpha, y(k) / (y(k) - z(k)));
        }
      }
      if (feasible) {
        y = z;
        break;
      }
      y += alpha * (z - y);
      for (Eigen::Index k = 0; k < m; ++k) {
        if (passive[static_cast<std::size_t>(k)] && y(k) <= tol) {
          passive[static_cast<std::size_t>(k)] = false;
          y(k) = 0.0;
        }
      }
    }
  }
  return y;
}

}  // namespace

BoundedLsq bounded_least_squares(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b_cols,
                                 const Eigen::VectorXd& rhs) {
  const Eigen::Index p = rhs.size();
  if ((a.cols() > 0 && a.rows() != p) || (b_cols.cols() > 0 && b_cols.rows() != p)) {
    throw DimensionError("bounded_least_squares: row mismatch");
  }
  if (!a.allFinite() || !b_cols.allFinite() || !rhs.allFinite()) {
    throw SolverError("bounded_least_squares: non-finite input");
  }
  BoundedLsq out;
  // Project the free block out, solve the nonnegative part, then back-substitute.
  Eigen::MatrixXd b_perp = b_cols;
  Eigen::VectorXd r_perp = rhs;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  if (a.cols() > 0) {
    qr.compute(a);
    const Eigen::Index rank = qr.rank();
    const Eigen::MatrixXd q = Eigen::MatrixXd(qr.householderQ()).leftCols(rank);
    b_perp -= q * (q.transpose() * b_cols);
    r_perp -= q * (q.transpose() * rhs);
  }
  out.nonneg = nnls(b_perp, r_perp);
  out.free = a.cols() > 0 ? Eigen::VectorXd(qr.solve(rhs - b_cols * out.nonneg))
                          : Eigen::VectorXd(0);
  Eigen::VectorXd r = -rhs;
  if (a.cols() > 0) r += a * out.free;
  if (b_cols.cols() > 0) r += b_cols * out.nonneg;
  out.residual = r.norm();
  out.gradient = b_cols.cols() > 0 ? Eigen::VectorXd(b_cols.transpose() * r) : Eigen::VectorXd(0);
  return out;
}

// ---------------------------------------------------------------------------------------
// Learning problems

namespace {

Eigen::VectorXd upper_bounds(const SolverConfig& cfg, Eigen::Index m) {
  Eigen::VectorXd u(m);
  for (Eigen::Index k = 0; k < m; ++k) u(k) = cfg.upper(k);
  return u;
}

struct BoxSearch {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = true;
};

// DIRECT at the configured budget and at twice that budget; the second run decides.
BoxSearch minimize_box(const std::function<double(const Eigen::VectorXd&)>& f,
                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                       const SolverConfig& cfg) {
  const int budget = cfg.direct_budget * static_cast<int>(lower.size());
  const BoxResult first = direct_minimize(f, lower, upper, budget, cfg.direct_epsilon);
  const BoxResult second = direct_minimize(f, lower, upper, 2 * budget, cfg.direct_epsilon);
  BoxSearch out;
  out.evaluations = first.evaluations + second.evaluations;
  out.x = second.x;
  out.value = second.value;
  const Eigen::VectorXd width = upper - lower;
  out.converged = ((first.x - second.x).cwiseQuotient(width)).cwiseAbs().maxCoeff() <=
                  cfg.convergence_tolerance;
  if (cfg.polish) {
    const Eigen::VectorXd step = width / std::pow(3.0, std::ceil(std::log(2.0 * budget) / std::log(3.0) /
                                                                 static_cast<double>(lower.size())));
    const BoxResult local = pattern_search(f, out.x, step, lower, upper);
    out.evaluations += local.evaluations;
    if (local.value <= out.value) {
      out.x = local.x;
      out.value = local.value;
    }
  }
  return out;
}

void attach_projection(LearningResult& r, const Eigen::MatrixXd& m, const SolverConfig& cfg) {
  const int k = kernel_dimension(r.spectrum.values, cfg.degeneracy_ratio, cfg.degeneracy_scale);
  if (k < 2) return;
  r.warnings.push_back("near-degenerate kernel of dimension " + std::to_string(k));
  try {
    const ProjectedSpectrum ps = projected_ratio(m, r.c_rec, k);
    r.projected_spectrum = ps.values;
    r.ratio_projected = ps.ratio;
  } catch (const SolverError& e) {
    r.warnings.push_back(e.what());
  }
}

LearningResult base_result(const ConstraintSystem& sys) {
  LearningResult r;
  r.coefficient_names = sys.coefficient_names;
  r.rate_names = sys.rate_names;
  return r;
}

double energy_objective(const ConstraintSystem& sys, const Eigen::VectorXd& d) {
  const double l = svd_min(sys.energy_matrix(d)).values(0);
  return l * l;
}

LearningResult finish_energy(const ConstraintSystem& sys, const Eigen::VectorXd& d,
                             const SolverConfig& cfg) {
  LearningResult r = base_result(sys);
  const Eigen::MatrixXd m = sys.energy_matrix(d);
  r.spectrum = svd_min(m);
  if (r.spectrum.underdetermined) r.warnings.push_back("fewer constraint rows than coefficients");
  r.d_rec = d;
  r.c_rec = r.spectrum.vectors.col(0);
  r.ratio = r.spectrum.ratio();
  r.residual = r.spectrum.values(0);
  attach_projection(r, m, cfg);
  return r;
}

struct Stacked {
  Eigen::VectorXd c;
  double residual2 = 0.0;
};

Stacked stacked_solve(const ConstraintSystem& sys, const Eigen::VectorXd& d, double xi) {
  const Eigen::MatrixXd m = sys.energy_matrix(d);
  const Eigen::MatrixXd& ma = sys.additional.matrix;
  Eigen::MatrixXd a(m.rows() + ma.rows(), m.cols());
  a << m, xi * ma;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(a.rows());
  rhs.tail(ma.rows()) = xi * sys.additional.rhs(d);
  Stacked s;
  s.c = a.colPivHouseholderQr().solve(rhs);
  s.residual2 = (a * s.c - rhs).squaredNorm();
  return s;
}

LearningResult finish_additional(const ConstraintSystem& sys, const Eigen::VectorXd& d,
                                 const SolverConfig& cfg) {
  LearningResult r = base_result(sys);
  const Stacked s = stacked_solve(sys, d, cfg.xi);
  const Eigen::MatrixXd m = sys.energy_matrix(d);
  r.spectrum = svd_min(m);
  r.d_rec = d;
  r.ratio = r.spectrum.ratio();
  r.residual = std::sqrt(s.residual2);
  const double norm = s.c.norm();
  if (!(norm > 0.0)) {
    r.c_rec = r.spectrum.vectors.col(0);
    r.warnings.push_back("stacked solution vanished; scale unavailable");
    return r;
  }
  r.c_rec = s.c / norm;
  const Eigen::VectorXd b = sys.additional.rhs(d);
  const Eigen::VectorXd den = sys.additional.matrix * r.c_rec;
  double sum = 0.0;
  int used = 0;
  for (Eigen::Index i = 0; i < den.size(); ++i) {
    if (std::abs(den(i)) < 1e-12) continue;
    sum += b(i) / den(i);
    ++used;
  }
  if (used < den.size()) {
    r.warnings.push_back(std::to_string(den.size() - used) +
                         " additional rows excluded from the scale average");
  }
  if (used > 0) {
    r.scale = sum / used;
    r.c_scaled = *r.scale * r.c_rec;
    r.delta_add = delta_add(sys.additional.matrix, *r.c_scaled, b);
  } else {
    r.warnings.push_back("no additional row usable for the scale");
  }
  attach_projection(r, m, cfg);
  return r;
}

void check_bounds(LearningResult& r, const SolverConfig& cfg) {
  for (Eigen::Index k = 0; k < r.d_rec.size(); ++k) {
    if (r.d_rec(k) > cfg.upper(k) * (1.0 + 1e-12)) {
      r.warnings.push_back("rate " + std::to_string(k) + " = " + format_double(r.d_rec(k)) +
                           " exceeds its bound");
    }
  }
}

}  // namespace

LearningResult solve_ehrenfest(const ConstraintSystem& sys, const SolverConfig& cfg) {
  if (sys.kind != SystemKind::ehrenfest) throw SolverError("solve_ehrenfest: not an Ehrenfest system");
  sys.validate();
  cfg.validate(sys.n_rates());
  LearningResult r = base_result(sys);
  const BoundedLsq lsq = bounded_least_squares(sys.hamiltonian_block, sys.dissipative_block, sys.rhs);
  r.c_rec = lsq.free;
  r.d_rec = lsq.nonneg;
  r.residual = lsq.residual;
  const Eigen::Index n = sys.n_coefficients();
  const Eigen::Index m = sys.n_rates();
  Eigen::MatrixXd aug(sys.n_rows(), n + m + 1);
  aug << sys.hamiltonian_block, sys.dissipative_block, -sys.rhs;
  r.spectrum = svd_min(aug);
  r.ratio = r.spectrum.ratio();
  const Eigen::Index len = r.spectrum.values.size();
  if (len >= 2 && r.spectrum.values(1) < 1e-14 * r.spectrum.values(len - 1)) {
    r.warnings.push_back("degenerate system: second singular value below 1e-14 of the largest");
  }
  if (r.spectrum.underdetermined) r.warnings.push_back("fewer constraint rows than unknowns");
  check_bounds(r, cfg);
  r.evaluations = 1;
  return r;
}

LearningResult solve_energy(const ConstraintSystem& sys, const SolverConfig& cfg) {
  if (sys.kind != SystemKind::energy) throw SolverError("solve_energy: not an energy system");
  sys.validate();
  const Eigen::Index m = sys.n_rates();
  if (m == 0) {
    LearningResult r = finish_energy(sys, Eigen::VectorXd(0), cfg);
    r.evaluations = 1;
    return r;
  }
  cfg.validate(m);
  const BoxSearch s = minimize_box([&](const Eigen::VectorXd& d) { return energy_objective(sys, d); },
                                   Eigen::VectorXd::Zero(m), upper_bounds(cfg, m), cfg);
  LearningResult r = finish_energy(sys, s.x, cfg);
  r.evaluations = s.evaluations;
  r.converged = s.converged;
  if (!s.converged) r.warnings.push_back("rate search not converged at twice the budget");
  return r;
}

LearningResult solve_with_additional(const ConstraintSystem& sys, const SolverConfig& cfg) {
  if (sys.kind != SystemKind::energy) throw SolverError("solve_with_additional: not an energy system");
  if (!(cfg.xi > 0.0)) throw SolverError("solve_with_additional: xi must be > 0");
  if (sys.additional.empty()) throw SolverError("solve_with_additional: no additional rows");
  sys.validate();
  const Eigen::Index m = sys.n_rates();
  if (m == 0) {
    LearningResult r = finish_additional(sys, Eigen::VectorXd(0), cfg);
    r.evaluations = 1;
    return r;
  }
  cfg.validate(m);
  const BoxSearch s = minimize_box(
      [&](const Eigen::VectorXd& d) { return stacked_solve(sys, d, cfg.xi).residual2; },
      Eigen::VectorXd::Zero(m), upper_bounds(cfg, m), cfg);
  LearningResult r = finish_additional(sys, s.x, cfg);
  r.evaluations = s.evaluations;
  r.converged = s.converged;
  if (!s.converged) r.warnings.push_back("rate search not converged at twice the budget");
  return r;
}

LearningResult solve(const ConstraintSystem& sys, const SolverConfig& cfg) {
  if (sys.kind == SystemKind::ehrenfest) return solve_ehrenfest(sys, cfg);
  if (cfg.xi > 0.0 && !sys.additional.empty()) return solve_with_additional(sys, cfg);
  return solve_energy(sys, cfg);
}

ConstraintSystem reparametrize(const ConstraintSystem& sys, const Eigen::MatrixXd& g) {
  sys.validate();
  const Eigen::Index n = sys.n_coefficients();
  if (g.rows() != n) throw DimensionError("reparametrize: G must have one row per coefficient");
  if (g.cols() > n) throw DimensionError("reparametrize: G has more columns than rows");
  const Eigen::MatrixXd gram = g.transpose() * g;
  if ((gram - Eigen::MatrixXd::Identity(g.cols(), g.cols())).cwiseAbs().maxCoeff() > 1e-10) {
    throw SolverError("reparametrize: G is not an isometry");
  }
  ConstraintSystem out = sys;
  out.hamiltonian_block = sys.hamiltonian_block * g;
  for (auto& t : out.dissipative_terms) t = t * g;
  if (!sys.additional.empty()) out.additional.matrix = sys.additional.matrix * g;
  out.coefficient_names.clear();
  for (Eigen::Index j = 0; j < g.cols(); ++j) out.coefficient_names.push_back("g" + std::to_string(j));
  return out;
}

namespace {

// Maps a result computed in G coordinates back to the original coefficients.
LearningResult lift(LearningResult r, const Eigen::MatrixXd& g, const ConstraintSystem& sys) {
  r.coefficient_names = sys.coefficient_names;
  r.c_rec = g * r.c_rec;
  if (r.c_scaled) r.c_scaled = g * *r.c_scaled;
  return r;
}

}  // namespace

LearningResult solve_parametrized(const ConstraintSystem& sys, const Parametrization& p,
                                  const SolverConfig& cfg) {
  if (p.n_alpha() == 0) {
    const Eigen::MatrixXd g = p.matrix();
    return lift(solve(reparametrize(sys, g), cfg), g, sys);
  }
  const Eigen::Index na = p.n_alpha();
  const bool ehrenfest = sys.kind == SystemKind::ehrenfest;
  const bool additional = !ehrenfest && cfg.xi > 0.0 && !sys.additional.empty();
  const Eigen::Index m = ehrenfest ? 0 : sys.n_rates();
  if (m > 0) cfg.validate(m);
  Eigen::VectorXd lower(na + m), upper(na + m);
  for (Eigen::Index k = 0; k < na; ++k) {
    lower(k) = p.alpha_bounds[static_cast<std::size_t>(k)].first;
    upper(k) = p.alpha_bounds[static_cast<std::size_t>(k)].second;
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    lower(na + k) = 0.0;
    upper(na + k) = cfg.upper(k);
  }
  auto objective = [&](const Eigen::VectorXd& x) {
    const ConstraintSystem s = reparametrize(sys, p.matrix(x.head(na)));
    if (ehrenfest) {
      const double res =
          bounded_least_squares(s.hamiltonian_block, s.dissipative_block, s.rhs).residual;
      return res * res;
    }
    const Eigen::VectorXd d = x.tail(m);
    return additional ? stacked_solve(s, d, cfg.xi).residual2 : energy_objective(s, d);
  };
  const BoxSearch search = minimize_box(objective, lower, upper, cfg);
  const Eigen::VectorXd alpha = search.x.head(na);
  const Eigen::MatrixXd g = p.matrix(alpha);
  const ConstraintSystem s = reparametrize(sys, g);
  LearningResult r;
  if (ehrenfest) {
    r = solve_ehrenfest(s, cfg);
  } else if (additional) {
    r = finish_additional(s, search.x.tail(m), cfg);
  } else {
    r = finish_energy(s, search.x.tail(m), cfg);
  }
  r = lift(std::move(r), g, sys);
  r.alpha_rec = alpha;
  r.evaluations += search.evaluations;
  r.converged = r.converged && search.converged;
  if (!search.converged) r.warnings.push_back("parameter search not converged at twice the budget");
  return r;
}

ConstraintSystem regularize(const ConstraintSystem& sys, const Eigen::MatrixXd& g, double beta) {
  sys.validate();
  const Eigen::Index n = sys.n_coefficients();
  if (g.rows() != n) throw DimensionError("regularize: G must have one row per coefficient");
  if (!(beta >= 0.0)) throw ConfigError("regularize: beta must be >= 0");
  const Eigen::MatrixXd penalty = beta * (Eigen::MatrixXd::Identity(n, n) - g * g.transpose());
  auto stack = [&](const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
  };
  ConstraintSystem out = sys;
  out.hamiltonian_block = stack(sys.hamiltonian_block, penalty);
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(n, n);
  for (auto& t : out.dissipative_terms) t = stack(t, zeros);
  if (sys.kind == SystemKind::ehrenfest) {
    out.dissipative_block = stack(sys.dissipative_block, Eigen::MatrixXd::Zero(n, sys.n_rates()));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.rhs.size() + n);
    rhs.head(sys.rhs.size()) = sys.rhs;
    out.rhs = rhs;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    RowInfo info;
    info.state = -1;
    info.observable = "penalty:" + (static_cast<std::size_t>(j) < sys.coefficient_names.size()
                                        ? sys.coefficient_names[j]
                                        : std::to_string(j));
    out.rows.push_back(info);
  }
  return out;
}

LearningResult solve_regularized(const ConstraintSystem& sys, const Eigen::MatrixXd& g,
                                 const SolverConfig& cfg) {
  return solve(regularize(sys, g, cfg.beta), cfg);
}

std::vector<BetaSpectrum> sweep_beta(const ConstraintSystem& sys, const Eigen::MatrixXd& g,
                                     const Eigen::VectorXd& d, const std::vector<double>& betas) {
  if (sys.kind != SystemKind::energy) throw ConfigError("sweep_beta: needs an energy system");
  std::vector<BetaSpectrum> out;
  out.reserve(betas.size());
  for (const double beta : betas) {
    const ConstraintSystem reg = regularize(sys, g, beta);
    const Spectrum s = svd_min(reg.energy_matrix(d));
    BetaSpectrum row;
    row.beta = beta;
    row.values = s.values;
    row.image_weight = (g.transpose() * s.vectors).colwise().squaredNorm().transpose();
    row.cost = s.values(0);
    out.push_back(std::move(row));
  }
  return out;
}

double regularized_cost(const ConstraintSystem& sys, const Eigen::MatrixXd& g, double beta,
                        const Eigen::VectorXd& c, const Eigen::VectorXd& d) {
  const ConstraintSystem reg = regularize(sys, g, beta);
  if (reg.kind == SystemKind::ehrenfest) {
    return (reg.hamiltonian_block * c + reg.dissipative_block * d - reg.rhs).norm();
  }
  return (reg.energy_matrix(d) * c).norm();
}

int kernel_dimension(const Eigen::VectorXd& ascending, double ratio, double scale) {
  const Eigen::Index n = ascending.size();
  if (n < 3) return 1;
  const double top = ascending(n - 1);
  int k = 1;
  for (Eigen::Index j = 1; j + 1 < n; ++j) {
    // lambda_{j+1} against lambda_{j+2} in one-based terms.
    if (ascending(j) < ratio * ascending(j + 1) && ascending(j) < scale * top) k = static_cast<int>(j + 1);
  }
  return k;
}

ProjectedSpectrum projected_ratio(const Eigen::MatrixXd& m, const Eigen::VectorXd& c, int kernel_dim) {
  if (c.size() != m.cols()) throw DimensionError("projected_ratio: vector size mismatch");
  const Spectrum s = svd_min(m);
  ProjectedSpectrum out;
  if (kernel_dim <= 1) {
    out.values = s.values;
    out.ratio = s.ratio();
    return out;
  }
  const Eigen::Index n = m.cols();
  if (kernel_dim > n) throw DimensionError("projected_ratio: kernel larger than the space");
  const Eigen::MatrixXd vk = s.vectors.leftCols(kernel_dim);
  Eigen::VectorXd u = vk * (vk.transpose() * c);
  if (!(u.norm() > 1e-8 * c.norm())) {
    throw SolverError("projected_ratio: solution orthogonal to the near-null subspace");
  }
  u.normalize();
  Eigen::MatrixXd w(n, n - kernel_dim + 1);
  w << u, s.vectors.rightCols(n - kernel_dim);
  const Spectrum reduced = svd_min(m * w);
  out.values = reduced.values;
  out.ratio = reduced.ratio();
  return out;
}

double delta_add(const Eigen::MatrixXd& m_add, const Eigen::VectorXd& c, const Eigen::VectorXd& b) {
  if (m_add.cols() != c.size() || m_add.rows() != b.size()) {
    throw DimensionError("delta_add: shape mismatch");
  }
  return (m_add * c - b).norm();
}

}  // namespace hlearn
