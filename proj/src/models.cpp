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
#include "hlearn/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "hlearn/error.hpp"
#include "internal.hpp"

namespace hlearn {

namespace {

Operator two_site(int n, int i, PauliLetter li, int j, PauliLetter lj) {
  PauliString p(n);
  p.set_letter(i, li);
  p.set_letter(j, lj);
  return Operator(p);
}

Operator one_site(int n, int i, PauliLetter l) { return Operator::pauli(n, i, l); }

std::string site_name(const std::string& prefix, int k) {
  return prefix + "[" + std::to_string(k) + "]";
}

std::string pair_name(const std::string& prefix, int i, int j) {
  return prefix + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
}

std::string prefix_of(const std::string& name) { return name.substr(0, name.find('[')); }

constexpr PauliLetter X = PauliLetter::X;
constexpr PauliLetter Y = PauliLetter::Y;
constexpr PauliLetter Z = PauliLetter::Z;

// Homogeneous coupling of letters (a, b) at separation `range`, symmetrized when a != b.
Operator chain_sum(int n, PauliLetter a, PauliLetter b, int range) {
  Operator op(n);
  for (int k = 0; k + range < n; ++k) {
    op += two_site(n, k, a, k + range, b);
    if (a != b) op += two_site(n, k, b, k + range, a);
  }
  return op;
}

Operator field_sum(int n, PauliLetter l) {
  Operator op(n);
  for (int k = 0; k < n; ++k) op += one_site(n, k, l);
  return op;
}

void add(Ansatz& a, std::string name, Operator op) {
  a.names.push_back(std::move(name));
  a.terms.push_back(std::move(op));
}

}  // namespace

double ising_coordinate(int i, int j, int n_sites) {
  return static_cast<double>((i + j) - (n_sites + 1)) / n_sites;
}

double coupling_polynomial(const std::array<double, 5>& coeffs, double x) {
  double v = 0.0;
  for (int l = 4; l >= 0; --l) v = v * x + coeffs[static_cast<std::size_t>(l)];
  return v;
}

ModelSpec ising_model(const IsingParams& p) {
  const int n = p.n_sites;
  if (n < 3 || n > 20) throw ConfigError("ising_model: n_sites must be in [3, 20]");
  Operator h(n);
  for (int i = 1; i + 1 <= n; ++i) {
    const double j = p.b_z * coupling_polynomial(p.a, ising_coordinate(i, i + 1, n));
    h += j * two_site(n, i - 1, Z, i, Z);
  }
  for (int i = 1; i + 2 <= n; ++i) {
    const double j = p.b_z * coupling_polynomial(p.b, ising_coordinate(i, i + 2, n));
    h += j * two_site(n, i - 1, Z, i + 1, Z);
  }
  h += (p.b_x_ratio * p.b_z) * field_sum(n, X);
  h += p.b_z * field_sum(n, Z);

  std::vector<Channel> channels;
  for (int k = 0; k < n; ++k) {
    const Operator up = Operator::sigma_plus(n, k);
    const Operator down = Operator::sigma_minus(n, k);
    const Operator z = one_site(n, k, Z);
    channels.push_back({up, up, p.rates[0] * p.b_z});
    channels.push_back({down, down, p.rates[1] * p.b_z});
    channels.push_back({z, z, p.rates[2] * p.b_z});
  }
  ModelSpec spec;
  spec.name = "ising";
  spec.model = LindbladModel(h, channels);
  Eigen::VectorXd rates(3);
  rates << p.rates[0] * p.b_z, p.rates[1] * p.b_z, p.rates[2] * p.b_z;
  spec.true_rates["D_loc"] = rates;
  return spec;
}

std::vector<double> ion_positions(int n_sites, double jitter, std::uint64_t seed) {
  if (jitter < 0.0 || jitter >= 0.5) throw ConfigError("ion_positions: jitter must be in [0, 0.5)");
  std::mt19937_64 rng(detail::splitmix64(seed));
  std::vector<double> pos(static_cast<std::size_t>(n_sites));
  for (int i = 0; i < n_sites; ++i) {
    pos[static_cast<std::size_t>(i)] = i + 1 + jitter * (2.0 * detail::unit_uniform(rng) - 1.0);
  }
  return pos;
}

std::vector<double> power_law_couplings(const std::vector<double>& positions, double j0,
                                        double alpha) {
  std::vector<double> j;
  const std::size_t n = positions.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      j.push_back(j0 / std::pow(std::abs(positions[a] - positions[b]), alpha));
    }
  }
  return j;
}

Operator flip_flop(int n_sites, int i, int j) {
  return two_site(n_sites, i, X, j, X) + two_site(n_sites, i, Y, j, Y);
}

ModelSpec xy_model(const XYParams& p) {
  const int n = p.n_sites;
  if (n < 2 || n > 20) throw ConfigError("xy_model: n_sites must be in [2, 20]");
  if (p.alpha < 0.0 || p.alpha > 3.0) throw ConfigError("xy_model: alpha must be in [0, 3]");
  if (p.gamma_minus < 0.0 || p.gamma_z < 0.0 || p.gamma_0 < 0.0) {
    throw ConfigError("xy_model: rates must be >= 0");
  }
  const std::vector<double> couplings = power_law_couplings(ion_positions(n, p.jitter, p.seed), p.j0, p.alpha);
  Operator h(n);
  std::size_t idx = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) h += couplings[idx++] * flip_flop(n, i, j);
  }
  h += p.b_z * field_sum(n, Z);

  std::vector<Channel> channels;
  for (int k = 0; k < n; ++k) {
    const Operator down = Operator::sigma_minus(n, k);
    channels.push_back({down, down, p.gamma_minus});
  }
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      const double rate = p.gamma_0 + (k == l ? p.gamma_z : 0.0);
      if (rate > 0.0) channels.push_back({one_site(n, k, Z), one_site(n, l, Z), rate});
    }
  }
  ModelSpec spec;
  spec.name = "xy";
  spec.model = LindbladModel(h, channels);
  Eigen::VectorXd col(3);
  col << p.gamma_minus, p.gamma_z + p.gamma_0, p.gamma_0;
  spec.true_rates["D_col"] = col;
  Eigen::VectorXd dist = Eigen::VectorXd::Constant(n + 1, p.gamma_0);
  dist(0) = p.gamma_minus;
  dist(1) = p.gamma_z + p.gamma_0;
  spec.true_rates["D_dist"] = dist;
  return spec;
}

ModelSpec subsystem_model(const SubsystemParams& p) {
  if (p.n_blocks < 1 || p.block_size < 2) throw ConfigError("subsystem_model: need blocks of >= 2 sites");
  const int n = p.n_blocks * p.block_size;
  if (n > PauliString::kMaxSites) throw ConfigError("subsystem_model: too many sites");
  const std::vector<double> couplings =
      power_law_couplings(ion_positions(p.block_size, p.jitter, p.seed), p.j0, p.alpha);
  Operator h(n);
  for (int blk = 0; blk < p.n_blocks; ++blk) {
    const int base = blk * p.block_size;
    std::size_t idx = 0;
    for (int i = 0; i < p.block_size; ++i) {
      for (int j = i + 1; j < p.block_size; ++j) h += couplings[idx++] * flip_flop(n, base + i, base + j);
    }
  }
  ModelSpec spec;
  spec.name = "subsystem";
  spec.model = LindbladModel(h, {});
  return spec;
}

Ansatz hamiltonian_ansatz(const std::string& name, int n, int block_size) {
  if (n < 2) throw ConfigError("hamiltonian_ansatz: need at least two sites");
  Ansatz a;
  auto a2 = [&] {
    add(a, "zz", chain_sum(n, Z, Z, 1));
    add(a, "x", field_sum(n, X));
    add(a, "z", field_sum(n, Z));
  };
  if (name == "A1") {
    add(a, "xx", chain_sum(n, X, X, 1));
    add(a, "yy", chain_sum(n, Y, Y, 1));
    add(a, "zz", chain_sum(n, Z, Z, 1));
    add(a, "xy", chain_sum(n, X, Y, 1));
    add(a, "xz", chain_sum(n, X, Z, 1));
    add(a, "yz", chain_sum(n, Y, Z, 1));
    add(a, "x", field_sum(n, X));
    add(a, "y", field_sum(n, Y));
    add(a, "z", field_sum(n, Z));
  } else if (name == "A2") {
    a2();
  } else if (name == "A3") {
    a2();
    add(a, "x1x", chain_sum(n, X, X, 2));
    add(a, "y1y", chain_sum(n, Y, Y, 2));
    add(a, "z1z", chain_sum(n, Z, Z, 2));
  } else if (name == "A4") {
    a2();
    add(a, "z1z", chain_sum(n, Z, Z, 2));
  } else if (name == "A5") {
    for (int k = 0; k + 1 < n; ++k) add(a, site_name("zz", k), two_site(n, k, Z, k + 1, Z));
    for (int k = 0; k + 2 < n; ++k) add(a, site_name("z1z", k), two_site(n, k, Z, k + 2, Z));
    for (int k = 0; k < n; ++k) add(a, site_name("x", k), one_site(n, k, X));
    for (int k = 0; k < n; ++k) add(a, site_name("z", k), one_site(n, k, Z));
  } else if (name == "AXY") {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) add(a, pair_name("xy", i, j), flip_flop(n, i, j));
    }
    for (int k = 0; k < n; ++k) add(a, site_name("z", k), one_site(n, k, Z));
  } else if (name == "A_sub") {
    if (block_size < 2 || n % block_size != 0) {
      throw ConfigError("hamiltonian_ansatz: A_sub needs a block size dividing the site count");
    }
    Operator inter(n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (i / block_size == j / block_size) {
          add(a, pair_name("xy", i, j), flip_flop(n, i, j));
        } else {
          inter += flip_flop(n, i, j);
        }
      }
    }
    if (!inter.empty()) add(a, "inter", inter);
  } else {
    throw ConfigError("unknown Hamiltonian ansatz '" + name + "'");
  }
  return a;
}

DissipatorAnsatz dissipator_ansatz(const std::string& name, int n, int distance_cap) {
  DissipatorAnsatz d;
  auto local = [&](const std::string& fam, auto make) {
    DissipatorFamily f;
    f.name = fam;
    for (int k = 0; k < n; ++k) {
      const Operator op = make(k);
      f.pairs.emplace_back(op, op);
    }
    d.families.push_back(std::move(f));
  };
  auto plus = [&](int k) { return Operator::sigma_plus(n, k); };
  auto minus = [&](int k) { return Operator::sigma_minus(n, k); };
  auto dephase = [&](int k) { return one_site(n, k, Z); };
  if (name == "none") return d;
  if (name == "D_loc") {
    local("plus", plus);
    local("minus", minus);
    local("z", dephase);
  } else if (name == "D_col") {
    local("minus", minus);
    local("z", dephase);
    DissipatorFamily col;
    col.name = "zcol";
    for (int k = 0; k < n; ++k) {
      for (int l = 0; l < n; ++l) {
        if (k != l) col.pairs.emplace_back(dephase(k), dephase(l));
      }
    }
    if (!col.pairs.empty()) d.families.push_back(std::move(col));
  } else if (name == "D_dist") {
    local("minus", minus);
    const int max_dist = distance_cap < 0 ? n - 1 : std::min(distance_cap, n - 1);
    for (int r = 0; r <= max_dist; ++r) {
      DissipatorFamily f;
      f.name = "z" + std::to_string(r);
      for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
          if (std::abs(k - l) == r) f.pairs.emplace_back(dephase(k), dephase(l));
        }
      }
      d.families.push_back(std::move(f));
    }
  } else {
    throw ConfigError("unknown dissipator ansatz '" + name + "'");
  }
  return d;
}

Parametrization homogeneous_parametrization(const Ansatz& ansatz) {
  std::vector<std::string> groups;
  for (const auto& nm : ansatz.names) {
    const std::string pre = prefix_of(nm);
    if (std::find(groups.begin(), groups.end(), pre) == groups.end()) groups.push_back(pre);
  }
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ansatz.size()),
                                            static_cast<Eigen::Index>(groups.size()));
  for (std::size_t j = 0; j < ansatz.size(); ++j) {
    const auto col = std::find(groups.begin(), groups.end(), prefix_of(ansatz.names[j])) - groups.begin();
    g(static_cast<Eigen::Index>(j), col) = 1.0;
  }
  return Parametrization::fixed(g);
}

Parametrization power_law_parametrization(const Ansatz& ansatz) {
  std::vector<std::string> groups;
  std::vector<int> distance(ansatz.size(), 0);
  for (std::size_t j = 0; j < ansatz.size(); ++j) {
    const std::string pre = prefix_of(ansatz.names[j]);
    if (pre == "xy") {
      int a = 0, b = 0;
      if (std::sscanf(ansatz.names[j].c_str(), "xy[%d,%d]", &a, &b) != 2) {
        throw ConfigError("power_law_parametrization: bad family name " + ansatz.names[j]);
      }
      distance[j] = std::abs(a - b);
      continue;
    }
    if (std::find(groups.begin(), groups.end(), pre) == groups.end()) groups.push_back(pre);
  }
  const auto n = static_cast<Eigen::Index>(ansatz.size());
  const std::vector<std::string> names = ansatz.names;
  Parametrization p;
  p.alpha_bounds = {{0.0, 3.0}};
  p.generator = [names, groups, distance, n](const Eigen::VectorXd& alpha) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, 1 + static_cast<Eigen::Index>(groups.size()));
    for (Eigen::Index j = 0; j < n; ++j) {
      const int dist = distance[static_cast<std::size_t>(j)];
      if (dist > 0) {
        g(j, 0) = std::pow(static_cast<double>(dist), -alpha(0));
      } else {
        const auto col = std::find(groups.begin(), groups.end(), prefix_of(names[static_cast<std::size_t>(j)])) -
                         groups.begin();
        g(j, 1 + col) = 1.0;
      }
    }
    return g;
  };
  return p;
}

Projection project_onto(const Ansatz& ansatz, const Operator& op) {
  std::map<PauliString, Eigen::Index> row_of;
  auto row = [&](const PauliString& s) {
    auto it = row_of.find(s);
    if (it != row_of.end()) return it->second;
    const auto r = static_cast<Eigen::Index>(row_of.size());
    row_of.emplace(s, r);
    return r;
  };
  for (const auto& t : ansatz.terms) {
    for (const auto& [s, c] : t.terms()) row(s);
  }
  for (const auto& [s, c] : op.terms()) row(s);
  const auto rows = static_cast<Eigen::Index>(row_of.size());
  const auto cols = static_cast<Eigen::Index>(ansatz.size());
  // Real and imaginary parts stacked so complex coefficients are matched exactly.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * rows, cols);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(2 * rows);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (const auto& [s, c] : ansatz.terms[static_cast<std::size_t>(j)].terms()) {
      a(row_of[s], j) = c.real();
      a(rows + row_of[s], j) = c.imag();
    }
  }
  for (const auto& [s, c] : op.terms()) {
    h(row_of[s]) = c.real();
    h(rows + row_of[s]) = c.imag();
  }
  Projection out;
  out.coefficients = a.colPivHouseholderQr().solve(h);
  const double norm = h.norm();
  out.residual = norm > 0.0 ? (a * out.coefficients - h).norm() / norm : 0.0;
  return out;
}

std::vector<Operator> probe_set(const std::string& name, int n) {
  std::vector<Operator> ops;
  if (name == "site0") {
    for (PauliLetter l : {X, Y, Z}) ops.push_back(one_site(n, 0, l));
  } else if (name == "pair01") {
    if (n < 2) throw ConfigError("probe_set: pair01 needs two sites");
    for (PauliLetter l : {X, Y, Z}) ops.push_back(one_site(n, 0, l));
    for (PauliLetter l : {X, Y, Z}) ops.push_back(one_site(n, 1, l));
    for (PauliLetter a : {X, Y}) {
      for (PauliLetter b : {X, Y}) ops.push_back(two_site(n, 0, a, 1, b));
    }
  } else if (name == "sites") {
    for (int k = 0; k < n; ++k) {
      for (PauliLetter l : {X, Y, Z}) ops.push_back(one_site(n, k, l));
    }
  } else {
    throw ConfigError("unknown probe set '" + name + "'");
  }
  return ops;
}

std::vector<Operator> local_observables(int n, int max_weight) {
  if (max_weight < 1 || max_weight > 2) throw ConfigError("local_observables: weight must be 1 or 2");
  std::vector<Operator> ops;
  for (int k = 0; k < n; ++k) {
    for (PauliLetter l : {X, Y, Z}) ops.push_back(one_site(n, k, l));
  }
  if (max_weight == 2) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        for (PauliLetter a : {X, Y, Z}) {
          for (PauliLetter b : {X, Y, Z}) ops.push_back(two_site(n, i, a, j, b));
        }
      }
    }
  }
  return ops;
}

}  // namespace hlearn
