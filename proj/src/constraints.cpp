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

#include "hlearn/constraints.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hlearn/error.hpp"

namespace hlearn {

namespace {

std::string label(const Operator& op) {
  if (op.size() == 1 && op.terms().begin()->second == cplx(1.0)) {
    return op.terms().begin()->first.to_string();
  }
  std::ostringstream out;
  out.precision(6);
  bool first = true;
  for (const auto& [p, c] : op.terms()) {
    if (!first) out << " + ";
    first = false;
    out << c.real();
    if (c.imag() != 0.0) out << (c.imag() > 0 ? "+" : "") << c.imag() << "i";
    out << "*" << p.to_string();
  }
  return out.str();
}

// Collects primitive Pauli strings, fetches them once and serves cached integrals.
class Evaluator {
 public:
  Evaluator(ExpectationSource& source, const RowSelection& sel) : source_(source) {
    if (sel.states.empty()) {
      for (int s = 0; s < source.n_states(); ++s) states_.push_back(s);
    } else {
      states_ = sel.states;
    }
    ends_ = sel.ends.empty() ? std::vector<int>{source.grid().n_steps()} : sel.ends;
    for (int s : states_) {
      if (s < 0 || s >= source.n_states()) throw std::invalid_argument("constraints: unknown state");
    }
    for (int e : ends_) {
      if (e <= 0 || e > source.grid().n_steps() || e % 2 != 0) {
        throw std::invalid_argument("constraints: quench end indices must be even and in the grid");
      }
    }
    max_end_ = *std::max_element(ends_.begin(), ends_.end());
  }

  const std::vector<int>& states() const { return states_; }
  const std::vector<int>& ends() const { return ends_; }

  void need_integral(const Operator& op) {
    for (const auto& [p, c] : op.terms()) {
      if (!p.is_identity()) integral_ops_.insert(p);
    }
  }
  void need_point(const Operator& op) {
    for (const auto& [p, c] : op.terms()) {
      if (!p.is_identity()) point_ops_.insert(p);
    }
  }

  void fetch() {
    std::vector<int> all_times;
    for (int m = 0; m <= max_end_; ++m) all_times.push_back(m);
    std::vector<int> point_times{0};
    point_times.insert(point_times.end(), ends_.begin(), ends_.end());
    std::vector<PauliString> integral(integral_ops_.begin(), integral_ops_.end());
    std::vector<PauliString> point;
    for (const auto& p : point_ops_) {
      if (!integral_ops_.count(p)) point.push_back(p);
    }
    std::vector<std::string> uncovered;
    auto attempt = [&](const std::vector<PauliString>& ops, const std::vector<int>& times) {
      if (ops.empty()) return;
      try {
        source_.require(ops, times);
      } catch (const MissingDataError& e) {
        uncovered.insert(uncovered.end(), e.uncovered().begin(), e.uncovered().end());
      }
    };
    attempt(integral, all_times);
    attempt(point, point_times);
    if (!uncovered.empty()) {
      throw MissingDataError("constraints need " + std::to_string(uncovered.size()) +
                                 " operator(s) the data cannot estimate, e.g. " + uncovered.front(),
                             uncovered);
    }
  }

  double integral(const Operator& op, int state, int end) {
    double acc = 0.0;
    for (const auto& [p, c] : op.terms()) {
      const double v = p.is_identity() ? source_.grid().time(end) : primitive_integral(p, state, end);
      acc += c.real() * v;
    }
    return acc;
  }

  double point(const Operator& op, int state, int m) { return source_.value(op, state, m); }

 private:
  double primitive_integral(const PauliString& p, int state, int end) {
    const auto key = std::make_tuple(p, state, end);
    auto it = integrals_.find(key);
    if (it != integrals_.end()) return it->second;
    auto wit = weights_.find(end);
    if (wit == weights_.end()) wit = weights_.emplace(end, simpson_weights(end, source_.grid().dt())).first;
    double acc = 0.0;
    for (int m = 0; m <= end; ++m) acc += wit->second[static_cast<std::size_t>(m)] * source_.value(p, state, m);
    integrals_.emplace(key, acc);
    return acc;
  }

  ExpectationSource& source_;
  std::vector<int> states_;
  std::vector<int> ends_;
  int max_end_ = 0;
  std::set<PauliString> integral_ops_;
  std::set<PauliString> point_ops_;
  std::map<std::tuple<PauliString, int, int>, double> integrals_;
  std::map<int, std::vector<double>> weights_;
};

void check_sizes(const ExpectationSource& source, const Ansatz& ansatz,
                 const DissipatorAnsatz& dissipators) {
  if (ansatz.terms.empty()) throw std::invalid_argument("constraints: empty Hamiltonian ansatz");
  if (ansatz.names.size() != ansatz.terms.size()) {
    throw std::invalid_argument("constraints: one name per ansatz family required");
  }
  for (const auto& h : ansatz.terms) {
    if (h.n_sites() != source.n_sites()) throw DimensionError("constraints: ansatz size mismatch");
  }
  for (const auto& f : dissipators.families) {
    for (const auto& [l, r] : f.pairs) {
      if (l.n_sites() != source.n_sites() || r.n_sites() != source.n_sites()) {
        throw DimensionError("constraints: dissipator size mismatch");
      }
    }
  }
}

std::vector<std::string> rate_names(const DissipatorAnsatz& dissipators) {
  std::vector<std::string> names;
  for (const auto& f : dissipators.families) names.push_back(f.name);
  return names;
}

// Shared by the Ehrenfest system and the additional constraints: for every observable,
// -i[O, h_j] integrals, (1/2) adjoint-dissipator integrals and the endpoint difference.
struct ObservableRows {
  Eigen::MatrixXd hamiltonian;
  Eigen::MatrixXd dissipative;
  Eigen::VectorXd difference;
  std::vector<RowInfo> rows;
};

ObservableRows observable_rows(ExpectationSource& source, const Ansatz& ansatz,
                               const DissipatorAnsatz& dissipators,
                               const std::vector<Operator>& observables, const RowSelection& sel) {
  check_sizes(source, ansatz, dissipators);
  for (const auto& o : observables) {
    if (o.n_sites() != source.n_sites()) throw DimensionError("constraints: observable size mismatch");
  }
  Evaluator eval(source, sel);
  const std::size_t n = ansatz.size(), m = dissipators.size();
  std::vector<std::vector<Operator>> h_ops(observables.size()), d_ops(observables.size());
  for (std::size_t i = 0; i < observables.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      h_ops[i].push_back(commutator(observables[i], ansatz.terms[j]) * cplx(0, -1));
      eval.need_integral(h_ops[i].back());
    }
    for (std::size_t k = 0; k < m; ++k) {
      d_ops[i].push_back(dissipators.heisenberg(k, observables[i]));
      eval.need_integral(d_ops[i].back());
    }
    eval.need_point(observables[i]);
  }
  eval.fetch();

  ObservableRows out;
  const auto p = static_cast<Eigen::Index>(eval.states().size() * eval.ends().size() * observables.size());
  out.hamiltonian.setZero(p, static_cast<Eigen::Index>(n));
  out.dissipative.setZero(p, static_cast<Eigen::Index>(m));
  out.difference.setZero(p);
  Eigen::Index row = 0;
  for (int s : eval.states()) {
    for (int e : eval.ends()) {
      for (std::size_t i = 0; i < observables.size(); ++i, ++row) {
        for (std::size_t j = 0; j < n; ++j) {
          out.hamiltonian(row, static_cast<Eigen::Index>(j)) = eval.integral(h_ops[i][j], s, e);
        }
        for (std::size_t k = 0; k < m; ++k) {
          out.dissipative(row, static_cast<Eigen::Index>(k)) = eval.integral(d_ops[i][k], s, e);
        }
        out.difference(row) = eval.point(observables[i], s, e) - eval.point(observables[i], s, 0);
        out.rows.push_back({s, e, label(observables[i])});
      }
    }
  }
  return out;
}

}  // namespace

// --- ansatz -----------------------------------------------------------------

Operator Ansatz::assemble(const Eigen::VectorXd& c) const {
  if (static_cast<std::size_t>(c.size()) != terms.size()) {
    throw DimensionError("Ansatz::assemble: coefficient count mismatch");
  }
  Operator h(n_sites());
  for (std::size_t j = 0; j < terms.size(); ++j) h += terms[j] * cplx(c(static_cast<Eigen::Index>(j)));
  return h;
}

void Ansatz::validate() const {
  if (names.size() != terms.size()) throw std::invalid_argument("ansatz: names and terms differ");
  std::map<PauliString, Eigen::Index> index;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const auto& h = terms[j];
    if (h.empty()) throw std::invalid_argument("ansatz: family '" + names[j] + "' is empty");
    if (!h.is_hermitian()) throw std::invalid_argument("ansatz: family '" + names[j] + "' is not hermitian");
    if (h.n_sites() != n_sites()) throw DimensionError("ansatz: families differ in size");
    for (const auto& [p, c] : h.terms()) {
      if (p.is_identity()) throw std::invalid_argument("ansatz: family '" + names[j] + "' has a trace");
      index.try_emplace(p, static_cast<Eigen::Index>(index.size()));
    }
  }
  Eigen::MatrixXd gram(static_cast<Eigen::Index>(index.size()), static_cast<Eigen::Index>(terms.size()));
  gram.setZero();
  for (std::size_t j = 0; j < terms.size(); ++j) {
    for (const auto& [p, c] : terms[j].terms()) gram(index.at(p), static_cast<Eigen::Index>(j)) = c.real();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
  qr.setThreshold(1e-10);
  if (qr.rank() != static_cast<Eigen::Index>(terms.size())) {
    throw std::invalid_argument("ansatz: families are linearly dependent");
  }
}

std::vector<Channel> DissipatorAnsatz::channels(const Eigen::VectorXd& d) const {
  if (static_cast<std::size_t>(d.size()) != families.size()) {
    throw DimensionError("DissipatorAnsatz::channels: rate count mismatch");
  }
  std::vector<Channel> out;
  for (std::size_t k = 0; k < families.size(); ++k) {
    for (const auto& [l, r] : families[k].pairs) out.push_back({l, r, d(static_cast<Eigen::Index>(k))});
  }
  return out;
}

Operator DissipatorAnsatz::heisenberg(std::size_t family, const Operator& op) const {
  Operator out(op.n_sites());
  for (const auto& [l, r] : families.at(family).pairs) out += adjoint_dissipator(l, r, op);
  out *= 0.5;
  return out;
}

// --- systems ----------------------------------------------------------------

Eigen::VectorXd AdditionalBlock::rhs(const Eigen::VectorXd& d) const {
  if (d.size() != dissipative.cols()) throw DimensionError("AdditionalBlock::rhs: rate count mismatch");
  if (d.size() == 0) return static_rhs;
  return static_rhs - dissipative * d;
}

Eigen::MatrixXd ConstraintSystem::dissipative_matrix(const Eigen::VectorXd& d) const {
  if (kind != SystemKind::energy) throw std::logic_error("dissipative_matrix: energy systems only");
  if (d.size() != n_rates()) throw DimensionError("dissipative_matrix: rate count mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_rows(), n_coefficients());
  for (Eigen::Index k = 0; k < d.size(); ++k) out += (0.5 * d(k)) * dissipative_terms[static_cast<std::size_t>(k)];
  return out;
}

Eigen::MatrixXd ConstraintSystem::energy_matrix(const Eigen::VectorXd& d) const {
  return hamiltonian_block + dissipative_matrix(d);
}

void ConstraintSystem::validate() const {
  const auto p = n_rows(), n = n_coefficients(), m = n_rates();
  if (static_cast<Eigen::Index>(coefficient_names.size()) != n) {
    throw DimensionError("ConstraintSystem: coefficient names do not match columns");
  }
  if (static_cast<Eigen::Index>(rows.size()) != p) throw DimensionError("ConstraintSystem: row metadata size");
  if (kind == SystemKind::ehrenfest) {
    if (dissipative_block.rows() != p || dissipative_block.cols() != m || rhs.size() != p) {
      throw DimensionError("ConstraintSystem: Ehrenfest block shapes inconsistent");
    }
  } else {
    if (static_cast<Eigen::Index>(dissipative_terms.size()) != m) {
      throw DimensionError("ConstraintSystem: one dissipative matrix per rate required");
    }
    for (const auto& mk : dissipative_terms) {
      if (mk.rows() != p || mk.cols() != n) throw DimensionError("ConstraintSystem: dissipative matrix shape");
    }
  }
  if (!additional.empty()) {
    const auto q = additional.matrix.rows();
    if (additional.matrix.cols() != n || additional.static_rhs.size() != q ||
        additional.dissipative.rows() != q || additional.dissipative.cols() != m) {
      throw DimensionError("ConstraintSystem: additional block shapes inconsistent");
    }
  }
}

ConstraintSystem build_ehrenfest(ExpectationSource& source, const Ansatz& ansatz,
                                 const DissipatorAnsatz& dissipators,
                                 const std::vector<Operator>& observables,
                                 const RowSelection& rows) {
  if (observables.empty()) throw std::invalid_argument("build_ehrenfest: no observables");
  auto block = observable_rows(source, ansatz, dissipators, observables, rows);
  ConstraintSystem sys;
  sys.kind = SystemKind::ehrenfest;
  sys.coefficient_names = ansatz.names;
  sys.rate_names = rate_names(dissipators);
  sys.hamiltonian_block = std::move(block.hamiltonian);
  sys.dissipative_block = std::move(block.dissipative);
  sys.rhs = std::move(block.difference);
  sys.rows = std::move(block.rows);
  sys.validate();
  return sys;
}

ConstraintSystem build_energy(ExpectationSource& source, const Ansatz& ansatz,
                              const DissipatorAnsatz& dissipators, const RowSelection& sel) {
  check_sizes(source, ansatz, dissipators);
  Evaluator eval(source, sel);
  const std::size_t n = ansatz.size(), m = dissipators.size();
  // M^(k) column j integrates the unhalved adjoint dissipator summed over family k.
  std::vector<std::vector<Operator>> d_ops(m);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      d_ops[k].push_back(dissipators.heisenberg(k, ansatz.terms[j]) * 2.0);
      eval.need_integral(d_ops[k].back());
    }
  }
  for (const auto& h : ansatz.terms) eval.need_point(h);
  eval.fetch();

  ConstraintSystem sys;
  sys.kind = SystemKind::energy;
  sys.coefficient_names = ansatz.names;
  sys.rate_names = rate_names(dissipators);
  const auto p = static_cast<Eigen::Index>(eval.states().size() * eval.ends().size());
  sys.hamiltonian_block.setZero(p, static_cast<Eigen::Index>(n));
  sys.dissipative_terms.assign(m, Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(n)));
  Eigen::Index row = 0;
  for (int s : eval.states()) {
    for (int e : eval.ends()) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        sys.hamiltonian_block(row, col) =
            eval.point(ansatz.terms[j], s, 0) - eval.point(ansatz.terms[j], s, e);
        for (std::size_t k = 0; k < m; ++k) {
          sys.dissipative_terms[k](row, col) = eval.integral(d_ops[k][j], s, e);
        }
      }
      sys.rows.push_back({s, e, "energy"});
      ++row;
    }
  }
  sys.validate();
  return sys;
}

AdditionalBlock build_additional(ExpectationSource& source, const Ansatz& ansatz,
                                 const DissipatorAnsatz& dissipators,
                                 const std::vector<Operator>& probes, const RowSelection& rows) {
  if (probes.empty()) throw std::invalid_argument("build_additional: no probe operators");
  auto block = observable_rows(source, ansatz, dissipators, probes, rows);
  AdditionalBlock out;
  out.matrix = std::move(block.hamiltonian);
  out.static_rhs = std::move(block.difference);
  out.dissipative = std::move(block.dissipative);
  out.rows = std::move(block.rows);
  return out;
}

// --- serialization ----------------------------------------------------------

namespace {

struct BlockRef {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t offset = 0;
};

nlohmann::json rows_json(const std::vector<RowInfo>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back({{"state", r.state}, {"end", r.end_index}, {"observable", r.observable}});
  return out;
}

std::vector<RowInfo> rows_from_json(const nlohmann::json& doc) {
  std::vector<RowInfo> rows;
  for (const auto& r : doc) {
    rows.push_back({r.at("state").get<int>(), r.at("end").get<int>(), r.at("observable").get<std::string>()});
  }
  return rows;
}

}  // namespace

void save_system(const ConstraintSystem& sys, const std::string& prefix) {
  sys.validate();
  std::vector<double> data;
  nlohmann::json blocks = nlohmann::json::array();
  auto push = [&](const std::string& name, const Eigen::MatrixXd& mat) {
    blocks.push_back({{"name", name}, {"rows", mat.rows()}, {"cols", mat.cols()}, {"offset", data.size()}});
    // Column-major, as stored by Eigen.
    data.insert(data.end(), mat.data(), mat.data() + mat.size());
  };
  push("hamiltonian", sys.hamiltonian_block);
  if (sys.kind == SystemKind::ehrenfest) {
    push("dissipative", sys.dissipative_block);
    push("rhs", sys.rhs);
  } else {
    for (std::size_t k = 0; k < sys.dissipative_terms.size(); ++k) {
      push("dissipative_" + std::to_string(k), sys.dissipative_terms[k]);
    }
  }
  push("additional_matrix", sys.additional.matrix);
  push("additional_static_rhs", sys.additional.static_rhs);
  push("additional_dissipative", sys.additional.dissipative);

  nlohmann::json doc;
  doc["schema"] = 1;
  doc["kind"] = sys.kind == SystemKind::ehrenfest ? "ehrenfest" : "energy";
  doc["coefficient_names"] = sys.coefficient_names;
  doc["rate_names"] = sys.rate_names;
  doc["rows"] = rows_json(sys.rows);
  doc["additional_rows"] = rows_json(sys.additional.rows);
  doc["byte_order"] = "little";
  doc["blocks"] = blocks;
  {
    std::ofstream out(prefix + ".json");
    if (!out) throw std::runtime_error("cannot write " + prefix + ".json");
    out << doc.dump(1) << '\n';
  }
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + prefix + ".bin");
  bin.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
}

ConstraintSystem load_system(const std::string& prefix) {
  std::ifstream in(prefix + ".json");
  if (!in) throw std::runtime_error("cannot read " + prefix + ".json");
  const auto doc = nlohmann::json::parse(in);
  if (doc.value("schema", 0) != 1) throw std::invalid_argument("constraint system: unsupported schema");
  std::ifstream bin(prefix + ".bin", std::ios::binary | std::ios::ate);
  if (!bin) throw std::runtime_error("cannot read " + prefix + ".bin");
  const auto bytes = static_cast<std::size_t>(bin.tellg());
  std::vector<double> data(bytes / sizeof(double));
  bin.seekg(0);
  bin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));

  std::map<std::string, Eigen::MatrixXd> mats;
  for (const auto& b : doc.at("blocks")) {
    const auto rows = b.at("rows").get<Eigen::Index>(), cols = b.at("cols").get<Eigen::Index>();
    const auto offset = b.at("offset").get<std::size_t>();
    if (offset + static_cast<std::size_t>(rows * cols) > data.size()) {
      throw std::invalid_argument("constraint system: binary payload too short");
    }
    mats[b.at("name").get<std::string>()] = Eigen::Map<const Eigen::MatrixXd>(data.data() + offset, rows, cols);
  }
  ConstraintSystem sys;
  sys.kind = doc.at("kind").get<std::string>() == "ehrenfest" ? SystemKind::ehrenfest : SystemKind::energy;
  sys.coefficient_names = doc.at("coefficient_names").get<std::vector<std::string>>();
  sys.rate_names = doc.at("rate_names").get<std::vector<std::string>>();
  sys.rows = rows_from_json(doc.at("rows"));
  sys.hamiltonian_block = mats.at("hamiltonian");
  if (sys.kind == SystemKind::ehrenfest) {
    sys.dissipative_block = mats.at("dissipative");
    sys.rhs = mats.at("rhs").col(0);
  } else {
    for (std::size_t k = 0; k < sys.rate_names.size(); ++k) {
      sys.dissipative_terms.push_back(mats.at("dissipative_" + std::to_string(k)));
    }
  }
  sys.additional.matrix = mats.at("additional_matrix");
  const auto& st = mats.at("additional_static_rhs");
  sys.additional.static_rhs = st.size() == 0 ? Eigen::VectorXd() : Eigen::VectorXd(st.col(0));
  sys.additional.dissipative = mats.at("additional_dissipative");
  sys.additional.rows = rows_from_json(doc.at("additional_rows"));
  sys.validate();
  return sys;
}

}  // namespace hlearn
