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

#include "hlearn/dynamics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <tuple>

#include "hlearn/error.hpp"

namespace hlearn {

namespace {

// Plain complex multiply-add without the NaN/Inf recovery path of operator*.
inline void fma_into(cplx& acc, const cplx& a, const cplx& b) {
  const double ar = a.real(), ai = a.imag(), br = b.real(), bi = b.imag();
  acc = cplx(acc.real() + ar * br - ai * bi, acc.imag() + ar * bi + ai * br);
}

struct DisjointSets {
  explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      auto& p = parent[static_cast<std::size_t>(a)];
      p = parent[static_cast<std::size_t>(p)];
      a = p;
    }
    return a;
  }
  void join_mask(std::uint64_t mask) {
    int first = -1;
    while (mask != 0) {
      const int site = std::countr_zero(mask);
      mask &= mask - 1;
      if (first < 0) {
        first = find(site);
      } else {
        const int r = find(site);
        if (r != first) parent[static_cast<std::size_t>(std::max(r, first))] = std::min(r, first);
        first = find(first);
      }
    }
  }
  std::vector<int> parent;
};

}  // namespace

// --- TimeGrid and quadrature -----------------------------------------------

TimeGrid::TimeGrid(double total_time, int n_steps) : total_time_(total_time), n_steps_(n_steps) {
  if (!(total_time > 0.0) || !std::isfinite(total_time)) {
    throw std::invalid_argument("TimeGrid: total_time must be positive");
  }
  if (n_steps <= 0 || n_steps % 2 != 0) {
    throw std::invalid_argument("TimeGrid: n_steps must be a positive even integer, got " +
                                std::to_string(n_steps));
  }
}

std::vector<double> simpson_weights(int end_index, double dt) {
  if (end_index < 0 || end_index % 2 != 0) {
    throw std::invalid_argument("simpson: end index must be even and non-negative");
  }
  std::vector<double> w(static_cast<std::size_t>(end_index) + 1, 0.0);
  if (end_index == 0) return w;
  for (int m = 0; m <= end_index; ++m) {
    double c = (m == 0 || m == end_index) ? 1.0 : (m % 2 == 1 ? 4.0 : 2.0);
    w[static_cast<std::size_t>(m)] = c * dt / 3.0;
  }
  return w;
}

double simpson_to(std::span<const double> samples, int end_index, double dt) {
  if (end_index >= static_cast<int>(samples.size())) {
    throw DimensionError("simpson: end index beyond the sample range");
  }
  const auto w = simpson_weights(end_index, dt);
  double s = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * samples[m];
  return s;
}

double simpson(std::span<const double> samples, double dt) {
  if (samples.empty() || samples.size() % 2 == 0) {
    throw DimensionError("simpson: need an odd number of samples");
  }
  return simpson_to(samples, static_cast<int>(samples.size()) - 1, dt);
}

// --- LindbladModel ----------------------------------------------------------

LindbladModel::LindbladModel(Operator hamiltonian, std::vector<Channel> channels)
    : hamiltonian_(std::move(hamiltonian)), channels_(std::move(channels)) {
  if (hamiltonian_.n_sites() <= 0) throw DimensionError("LindbladModel: empty Hamiltonian");
  const double scale = std::max(1.0, hamiltonian_.pauli_norm());
  if (!hamiltonian_.is_hermitian(1e-12 * scale)) {
    throw std::invalid_argument("LindbladModel: Hamiltonian is not hermitian");
  }
  std::vector<Operator> jumps;
  auto index_of = [&jumps](const Operator& op) {
    for (std::size_t k = 0; k < jumps.size(); ++k) {
      if (jumps[k] == op) return k;
    }
    jumps.push_back(op);
    return jumps.size() - 1;
  };
  std::vector<std::tuple<std::size_t, std::size_t, double>> entries;
  double max_rate = 0.0;
  for (const auto& ch : channels_) {
    if (ch.left.n_sites() != n_sites() || ch.right.n_sites() != n_sites()) {
      throw DimensionError("LindbladModel: channel acts on a different number of sites");
    }
    if (!(ch.rate >= 0.0) || !std::isfinite(ch.rate)) {
      throw std::invalid_argument("LindbladModel: channel rates must be finite and non-negative");
    }
    max_rate = std::max(max_rate, ch.rate);
    entries.emplace_back(index_of(ch.left), index_of(ch.right), ch.rate);
  }
  if (jumps.empty()) return;
  const auto k = static_cast<Eigen::Index>(jumps.size());
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(k, k);
  for (const auto& [l, r, rate] : entries) {
    gamma(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(r)) += rate;
  }
  const double tol = 1e-12 * std::max(1.0, max_rate);
  if ((gamma - gamma.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw std::invalid_argument("LindbladModel: rate matrix over jump operators is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma, Eigen::EigenvaluesOnly);
  if (es.eigenvalues()(0) < -tol) {
    throw std::invalid_argument("LindbladModel: rate matrix is not positive semidefinite");
  }
}

std::vector<std::vector<int>> LindbladModel::independent_blocks() const {
  const int n = n_sites();
  DisjointSets sets(n);
  for (const auto& [p, c] : hamiltonian_.terms()) sets.join_mask(p.support());
  for (const auto& ch : channels_) {
    if (ch.rate > 0.0) sets.join_mask(ch.left.support() | ch.right.support());
  }
  std::vector<std::vector<int>> blocks;
  std::vector<int> block_of(static_cast<std::size_t>(n), -1);
  for (int s = 0; s < n; ++s) {
    const int root = sets.find(s);
    auto& b = block_of[static_cast<std::size_t>(root)];
    if (b < 0) {
      b = static_cast<int>(blocks.size());
      blocks.emplace_back();
    }
    blocks[static_cast<std::size_t>(b)].push_back(s);
  }
  return blocks;
}

LindbladModel LindbladModel::restrict_to(const std::vector<int>& sites) const {
  std::uint64_t mask = 0;
  for (int s : sites) mask |= std::uint64_t{1} << s;
  const int m = static_cast<int>(sites.size());
  Operator h(m);
  for (const auto& [p, c] : hamiltonian_.terms()) {
    const auto supp = p.support();
    if ((supp & mask) == 0) continue;
    if ((supp & ~mask) != 0) throw DimensionError("LindbladModel::restrict_to: term crosses block");
    h.add_term(p.restrict_to(sites), c);
  }
  std::vector<Channel> channels;
  for (const auto& ch : channels_) {
    const auto supp = ch.left.support() | ch.right.support();
    if ((supp & mask) == 0 || ch.rate == 0.0) continue;
    if ((supp & ~mask) != 0) {
      throw DimensionError("LindbladModel::restrict_to: channel crosses block");
    }
    channels.push_back({ch.left.restrict_to(sites), ch.right.restrict_to(sites), ch.rate});
  }
  return LindbladModel(std::move(h), std::move(channels));
}

double LindbladModel::generator_norm() const {
  double norm = hamiltonian_.pauli_norm();
  for (const auto& ch : channels_) norm += ch.rate * ch.left.pauli_norm() * ch.right.pauli_norm();
  return norm;
}

int LindbladModel::default_substeps(const TimeGrid& grid) const {
  const double steps = std::ceil(generator_norm() * grid.dt() / 0.05);
  return std::max(1, static_cast<int>(steps));
}

// --- Liouvillian ------------------------------------------------------------

Liouvillian::Liouvillian(const LindbladModel& model) : n_sites_(model.n_sites()) {
  if (n_sites_ > 20) throw DimensionError("Liouvillian: dense evolution supports at most 20 sites");
  const Eigen::Index dim = Eigen::Index{1} << n_sites_;
  const int n = n_sites_;

  // rho' = -i A rho + i rho B + sum rate L rho R^dag, with A = H - (i/2) S, B = H + (i/2) S and
  // S = sum rate R^dag L.
  Operator s(n);
  for (const auto& ch : model.channels()) s += (ch.right.adjoint() * ch.left) * cplx(ch.rate);
  const Operator a = model.hamiltonian() - s * cplx(0, 0.5);
  const Operator b = model.hamiltonian() + s * cplx(0, 0.5);

  struct Pending {
    Eigen::VectorXcd left_only;
    Eigen::VectorXcd right_only;
    std::vector<Separable> both;
  };
  std::map<std::pair<std::uint64_t, std::uint64_t>, Pending> pending;
  auto phases = [dim](const PauliString& p, bool shifted) {
    Eigen::VectorXcd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const auto idx = static_cast<std::uint64_t>(i);
      v(i) = p.phase_on(shifted ? (idx ^ p.x_bits()) : idx);
    }
    return v;
  };

  for (const auto& [p, c] : a.terms()) {
    auto& g = pending[{p.x_bits(), 0}];
    Eigen::VectorXcd u = phases(p, true) * (cplx(0, -1) * c);
    if (g.left_only.size() == 0) g.left_only = std::move(u); else g.left_only += u;
  }
  for (const auto& [q, c] : b.terms()) {
    auto& g = pending[{0, q.x_bits()}];
    Eigen::VectorXcd v = phases(q, false) * (cplx(0, 1) * c);
    if (g.right_only.size() == 0) g.right_only = std::move(v); else g.right_only += v;
  }
  for (const auto& ch : model.channels()) {
    if (ch.rate == 0.0) continue;
    const Operator right_dag = ch.right.adjoint();
    for (const auto& [p, lc] : ch.left.terms()) {
      const Eigen::VectorXcd u = phases(p, true);
      for (const auto& [q, rc] : right_dag.terms()) {
        auto& g = pending[{p.x_bits(), q.x_bits()}];
        g.both.push_back({u * (ch.rate * lc * rc), phases(q, false)});
      }
    }
  }

  const bool dense = dim <= 256;
  const Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(dim);
  for (auto& [key, pend] : pending) {
    Group g;
    g.xl = key.first;
    g.xr = key.second;
    std::vector<Separable> terms = std::move(pend.both);
    if (pend.left_only.size() != 0) terms.push_back({pend.left_only, ones});
    if (pend.right_only.size() != 0) terms.push_back({ones, pend.right_only});
    if (dense) {
      g.dense = Eigen::MatrixXcd::Zero(dim, dim);
      for (const auto& t : terms) g.dense += t.u * t.v.transpose();
      if (g.dense.cwiseAbs().maxCoeff() == 0.0) continue;
    } else {
      g.terms = std::move(terms);
    }
    groups_.push_back(std::move(g));
  }
}

void Liouvillian::apply(const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& out) const {
  const Eigen::Index dim = rho.rows();
  out.setZero(dim, dim);
  for (const auto& g : groups_) {
    const auto xl = static_cast<Eigen::Index>(g.xl);
    const auto xr = static_cast<Eigen::Index>(g.xr);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const cplx* src = rho.data() + (j ^ xr) * dim;
      cplx* dst = out.data() + j * dim;
      if (g.dense.size() != 0) {
        const cplx* c = g.dense.data() + j * dim;
        for (Eigen::Index i = 0; i < dim; ++i) fma_into(dst[i], c[i], src[i ^ xl]);
      } else {
        for (const auto& t : g.terms) {
          const cplx vj = t.v(j);
          const cplx* u = t.u.data();
          for (Eigen::Index i = 0; i < dim; ++i) {
            cplx w(0, 0);
            fma_into(w, u[i], vj);
            fma_into(dst[i], w, src[i ^ xl]);
          }
        }
      }
    }
  }
}

// --- evolution --------------------------------------------------------------

void evolve_visit(const LindbladModel& model, const DensityMatrix& state0, const TimeGrid& grid,
                  int substeps, const StateVisitor& visit) {
  if (model.n_sites() != state0.n_sites()) {
    throw DimensionError("evolve: model acts on " + std::to_string(model.n_sites()) +
                         " sites, state has " + std::to_string(state0.n_sites()));
  }
  if (substeps <= 0) substeps = model.default_substeps(grid);
  const Liouvillian gen(model);
  const double h = grid.dt() / substeps;

  Eigen::MatrixXcd rho = state0.entries();
  const Eigen::Index dim = rho.rows();
  Eigen::MatrixXcd k(dim, dim), acc(dim, dim), tmp(dim, dim);
  const cplx trace0 = rho.trace();
  visit(0, rho);
  for (int m = 1; m <= grid.n_steps(); ++m) {
    for (int s = 0; s < substeps; ++s) {
      gen.apply(rho, k);
      acc = k;
      tmp = rho + (0.5 * h) * k;
      gen.apply(tmp, k);
      acc += 2.0 * k;
      tmp = rho + (0.5 * h) * k;
      gen.apply(tmp, k);
      acc += 2.0 * k;
      tmp = rho + h * k;
      gen.apply(tmp, k);
      acc += k;
      rho += (h / 6.0) * acc;
    }
    const double drift = std::abs(rho.trace() - trace0);
    if (!(drift <= 1e-6)) {
      throw IntegratorError("evolve: trace drift " + std::to_string(drift) + " at step " +
                            std::to_string(m) + "; use more substeps");
    }
    visit(m, rho);
  }
}

std::vector<DensityMatrix> evolve(const LindbladModel& model, const DensityMatrix& state0,
                                  const TimeGrid& grid, int substeps) {
  std::vector<DensityMatrix> states;
  states.reserve(static_cast<std::size_t>(grid.n_points()));
  evolve_visit(model, state0, grid, substeps, [&](int, const Eigen::MatrixXcd& rho) {
    states.emplace_back(state0.n_sites(), rho);
  });
  return states;
}

TimeTrace time_trace(const LindbladModel& model, const DensityMatrix& state0, const Operator& op,
                     const TimeGrid& grid, int substeps) {
  if (op.n_sites() != state0.n_sites()) throw DimensionError("time_trace: operator size mismatch");
  TimeTrace trace;
  trace.samples.reserve(static_cast<std::size_t>(grid.n_points()));
  evolve_visit(model, state0, grid, substeps, [&](int, const Eigen::MatrixXcd& rho) {
    cplx v = 0;
    for (const auto& [p, c] : op.terms()) v += c * pauli_trace(p, rho);
    trace.samples.push_back(v.real());
  });
  trace.integral = simpson(trace.samples, grid.dt());
  return trace;
}

}  // namespace hlearn
