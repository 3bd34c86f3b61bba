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
#include "hlearn/config.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "hlearn/error.hpp"

namespace hlearn {

using nlohmann::json;

namespace {

// Typed access to one JSON object; every error names the offending field.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    if (!has(key)) throw ConfigError(where(key) + ": missing required field");
    return obj_.at(key);
  }

  template <typename T>
  T get(const std::string& key) {
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        if (std::is_unsigned_v<T> && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw ConfigError(where(key) + ": expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    if (has(key)) target = get<T>(key);
  }

  template <typename T>
  void read_list(const std::string& key, std::vector<T>& target) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array");
    target.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const json wrapped = {{"item", v[i]}};
      Fields item(wrapped, where(key) + "[" + std::to_string(i) + "]");
      target.push_back(item.get<T>("item"));
    }
  }

  template <typename T, std::size_t N>
  void read_array(const std::string& key, std::array<T, N>& target) {
    std::vector<T> tmp;
    read_list(key, tmp);
    if (!has(key)) return;
    if (tmp.size() != N) throw ConfigError(where(key) + ": expected " + std::to_string(N) + " entries");
    std::copy(tmp.begin(), tmp.end(), target.begin());
  }

  Fields child(const std::string& key) { return Fields(raw(key), where(key)); }

  void check(bool ok, const std::string& key, const std::string& message) const {
    if (!ok) throw ConfigError(where(key) + ": " + message);
  }

  // Rejects keys that were never looked at.
  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(where(key) + ": unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void rethrow_at(const std::string& path, F&& body) {
  try {
    body();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ModelConfig parse_model(Fields f) {
  ModelConfig m;
  m.type = f.get<std::string>("type");
  if (m.type == "ising") {
    IsingParams& p = m.ising;
    f.read("n_sites", p.n_sites);
    f.read("b_z", p.b_z);
    f.read("b_x_ratio", p.b_x_ratio);
    f.read_array("a", p.a);
    f.read_array("b", p.b);
    f.read_array("rates", p.rates);
    f.check(p.n_sites >= 3 && p.n_sites <= 20, "n_sites", "must lie in [3, 20]");
    for (double r : p.rates) f.check(r >= 0.0, "rates", "rates must be non-negative");
  } else if (m.type == "xy") {
    XYParams& p = m.xy;
    f.read("n_sites", p.n_sites);
    f.read("j0", p.j0);
    f.read("alpha", p.alpha);
    f.read("b_z", p.b_z);
    f.read("jitter", p.jitter);
    f.read("gamma_minus", p.gamma_minus);
    f.read("gamma_z", p.gamma_z);
    f.read("gamma_0", p.gamma_0);
    f.read("seed", p.seed);
    f.check(p.n_sites >= 2 && p.n_sites <= 16, "n_sites", "must lie in [2, 16]");
    f.check(p.alpha >= 0.0 && p.alpha <= 3.0, "alpha", "must lie in [0, 3]");
    f.check(p.jitter >= 0.0 && p.jitter < 0.5, "jitter", "must lie in [0, 0.5)");
    f.check(p.gamma_minus >= 0.0, "gamma_minus", "must be non-negative");
    f.check(p.gamma_z >= 0.0, "gamma_z", "must be non-negative");
    f.check(p.gamma_0 >= 0.0, "gamma_0", "must be non-negative");
  } else if (m.type == "subsystem") {
    SubsystemParams& p = m.subsystem;
    f.read("n_blocks", p.n_blocks);
    f.read("block_size", p.block_size);
    f.read("j0", p.j0);
    f.read("alpha", p.alpha);
    f.read("jitter", p.jitter);
    f.read("seed", p.seed);
    f.check(p.n_blocks >= 1, "n_blocks", "must be positive");
    f.check(p.block_size >= 2 && p.block_size <= 10, "block_size", "must lie in [2, 10]");
    f.check(p.n_blocks * p.block_size <= 64, "n_blocks", "at most 64 sites in total");
    f.check(p.alpha >= 0.0 && p.alpha <= 3.0, "alpha", "must lie in [0, 3]");
    f.check(p.jitter >= 0.0 && p.jitter < 0.5, "jitter", "must lie in [0, 0.5)");
  } else {
    throw ConfigError(f.where("type") + ": unknown model type '" + m.type + "'");
  }
  f.finish();
  return m;
}

int model_sites(const ModelConfig& m) {
  if (m.type == "ising") return m.ising.n_sites;
  if (m.type == "xy") return m.xy.n_sites;
  return m.subsystem.n_blocks * m.subsystem.block_size;
}

ProtocolConfig parse_protocol(Fields f, int n_sites) {
  ProtocolConfig p;
  f.read("total_time", p.total_time);
  f.read("n_steps", p.n_steps);
  f.read_list("quench_ends", p.quench_ends);
  f.read("n_states", p.n_states);
  f.read("state_seed", p.state_seed);
  f.read("exact_initial", p.exact_initial);
  f.read("trace_weight", p.trace_weight);
  f.read("budget", p.budget);
  f.read("substeps", p.substeps);
  f.check(p.total_time > 0.0 && std::isfinite(p.total_time), "total_time", "must be positive");
  f.check(p.n_steps >= 2 && p.n_steps % 2 == 0, "n_steps", "must be a positive even integer");
  for (int e : p.quench_ends) {
    f.check(e > 0 && e <= p.n_steps && e % 2 == 0, "quench_ends", "entries must be even indices in (0, n_steps]");
  }
  f.check(p.n_states >= 1, "n_states", "must be positive");
  f.check(p.trace_weight > 0.0 && p.trace_weight <= 1.0, "trace_weight", "must lie in (0, 1]");
  f.check(p.budget >= 1, "budget", "must be positive");
  f.check(p.substeps >= 0, "substeps", "must be non-negative");
  if (f.has("bases")) {
    Fields b = f.child("bases");
    BasisConfig& c = p.bases;
    b.read("kind", c.kind);
    b.read("count", c.count);
    b.read("seed", c.seed);
    b.read("max_weight", c.max_weight);
    b.read_list("list", c.list);
    if (c.kind == "all") {
      b.check(n_sites <= 8, "kind", "'all' needs at most 8 sites");
    } else if (c.kind == "random") {
      b.check(c.count >= 1, "count", "must be positive");
    } else if (c.kind == "covering") {
      b.check(c.max_weight >= 1 && c.max_weight <= 4, "max_weight", "must lie in [1, 4]");
    } else if (c.kind == "list") {
      b.check(!c.list.empty(), "list", "must not be empty");
      for (const auto& s : c.list) {
        b.check(static_cast<int>(s.size()) == n_sites, "list", "basis '" + s + "' has the wrong length");
        rethrow_at(b.where("list"), [&] { (void)PauliString::from_string(s); });
      }
    } else {
      throw ConfigError(b.where("kind") + ": unknown basis kind '" + c.kind + "'");
    }
    b.finish();
  }
  f.finish();
  return p;
}

LearningConfig parse_learning(Fields f, const ModelConfig& model, const ProtocolConfig& protocol) {
  LearningConfig l;
  f.read("label", l.label);
  f.read("method", l.method);
  l.ansatz = f.get<std::string>("ansatz");
  f.read("dissipators", l.dissipators);
  f.read("dissipator_cap", l.dissipator_cap);
  f.read("observable_weight", l.observable_weight);
  f.read("probes", l.probes);
  f.read("parametrization", l.parametrization);
  f.read("beta", l.beta);
  if (f.has("alpha")) l.alpha = f.get<double>("alpha");
  f.read_list("ends", l.ends);
  if (l.ends.empty()) l.ends = protocol.quench_ends;
  f.read_list("states", l.states);
  SolverConfig& s = l.solver;
  f.read("xi", s.xi);
  f.read_list("d_max", s.d_max);
  f.read("direct_budget", s.direct_budget);
  f.read("direct_epsilon", s.direct_epsilon);
  f.read("convergence_tolerance", s.convergence_tolerance);
  f.read("polish", s.polish);
  if (l.label.empty()) l.label = l.ansatz;

  f.check(l.method == "energy" || l.method == "ehrenfest", "method", "must be 'energy' or 'ehrenfest'");
  f.check(l.observable_weight == 1 || l.observable_weight == 2, "observable_weight", "must be 1 or 2");
  f.check(l.probes.empty() || l.method == "energy", "probes", "additional rows need method 'energy'");
  f.check(l.beta >= 0.0, "beta", "must be non-negative");
  f.check(l.parametrization == "none" || l.parametrization == "homogeneous" || l.parametrization == "power_law",
          "parametrization", "must be 'none', 'homogeneous' or 'power_law'");
  f.check(l.beta == 0.0 || l.parametrization != "none", "beta", "needs a parametrization");
  f.check(!(l.beta > 0.0 && l.parametrization == "power_law" && !l.alpha), "alpha",
          "required when a power-law parametrization enters as a penalty");
  for (int e : l.ends) {
    f.check(e > 0 && e <= protocol.n_steps && e % 2 == 0, "ends", "entries must be even indices in (0, n_steps]");
  }
  for (int st : l.states) f.check(st >= 0 && st < protocol.n_states, "states", "state index out of range");

  const int n = model_sites(model);
  const int block = model.type == "subsystem" ? model.subsystem.block_size : 0;
  std::size_t n_rates = 0;
  rethrow_at(f.where("ansatz"), [&] { (void)hamiltonian_ansatz(l.ansatz, n, block); });
  rethrow_at(f.where("dissipators"),
             [&] { n_rates = dissipator_ansatz(l.dissipators, n, l.dissipator_cap).size(); });
  if (!l.probes.empty()) rethrow_at(f.where("probes"), [&] { (void)probe_set(l.probes, n); });
  rethrow_at(f.where("d_max"), [&] { s.validate(static_cast<Eigen::Index>(n_rates)); });
  f.finish();
  return l;
}

std::vector<std::int64_t> parse_budgets(Fields& f, const std::string& key) {
  const json& v = f.raw(key);
  std::vector<std::int64_t> out;
  if (v.is_array()) {
    f.read_list(key, out);
  } else {
    Fields b = f.child(key);
    const auto lo = b.get<std::int64_t>("min");
    const auto hi = b.get<std::int64_t>("max");
    int per_decade = 8;
    b.read("per_decade", per_decade);
    b.finish();
    rethrow_at(f.where(key), [&] { out = log_budgets(lo, hi, per_decade); });
  }
  f.check(!out.empty(), key, "must not be empty");
  for (std::size_t i = 0; i < out.size(); ++i) {
    f.check(out[i] >= 1, key, "entries must be positive");
    f.check(i == 0 || out[i] > out[i - 1], key, "must be strictly increasing");
  }
  return out;
}

std::vector<double> parse_betas(Fields& f, const std::string& key) {
  const json& v = f.raw(key);
  std::vector<double> out;
  if (v.is_array()) {
    f.read_list(key, out);
  } else {
    Fields b = f.child(key);
    const auto lo = b.get<double>("min");
    const auto hi = b.get<double>("max");
    int per_decade = 4;
    b.read("per_decade", per_decade);
    b.check(lo > 0.0 && hi >= lo, "min", "need 0 < min <= max");
    b.check(per_decade >= 1, "per_decade", "must be positive");
    b.finish();
    const int k0 = static_cast<int>(std::round(std::log10(lo) * per_decade));
    const int k1 = static_cast<int>(std::round(std::log10(hi) * per_decade));
    for (int k = k0; k <= k1; ++k) out.push_back(std::pow(10.0, static_cast<double>(k) / per_decade));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    f.check(out[i] >= 0.0, key, "entries must be non-negative");
    f.check(i == 0 || out[i] > out[i - 1], key, "must be strictly increasing");
  }
  return out;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  cfg.document = doc;
  Fields f(doc, "");
  const int schema = f.get<int>("schema");
  f.check(schema == kConfigSchema, "schema", "unsupported version " + std::to_string(schema));
  f.read("name", cfg.name);
  f.read("seed", cfg.seed);
  f.read("workers", cfg.workers);
  f.read("oracle", cfg.oracle);
  f.check(cfg.workers >= 0, "workers", "must be non-negative");
  cfg.model = parse_model(f.child("model"));
  rethrow_at("model", [&] { (void)build_model(cfg.model); });
  const int n = model_sites(cfg.model);
  cfg.protocol = parse_protocol(f.child("protocol"), n);
  cfg.learning = parse_learning(f.child("learning"), cfg.model, cfg.protocol);

  if (f.has("curve")) {
    Fields c = f.child("curve");
    CurveConfig curve;
    c.read("resamples", curve.resamples);
    c.read("errors", curve.errors);
    c.read("asymptote", curve.asymptote);
    c.check(curve.resamples >= 2, "resamples", "must be at least 2");
    curve.budgets = parse_budgets(c, "budgets");
    const json& targets = c.raw("targets");
    c.check(targets.is_array() && !targets.empty(), "targets", "expected a non-empty array");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      json merged = doc.at("learning");
      merged.merge_patch(targets[i]);
      if (!targets[i].contains("label")) merged.erase("label");
      const std::string path = c.where("targets") + "[" + std::to_string(i) + "]";
      curve.targets.push_back(parse_learning(Fields(merged, path), cfg.model, cfg.protocol));
      if (!labels.insert(curve.targets.back().label).second) {
        throw ConfigError(path + ".label: duplicate curve label '" + curve.targets.back().label + "'");
      }
    }
    c.finish();
    cfg.curve = std::move(curve);
  }
  if (f.has("bootstrap")) {
    Fields b = f.child("bootstrap");
    b.read("resamples", cfg.bootstrap.resamples);
    b.read("max_resamples", cfg.bootstrap.max_resamples);
    b.check(cfg.bootstrap.resamples >= 2, "resamples", "must be at least 2");
    b.check(cfg.bootstrap.max_resamples == 0 || cfg.bootstrap.max_resamples >= cfg.bootstrap.resamples,
            "max_resamples", "must be zero or at least resamples");
    b.finish();
  }
  if (f.has("sweep_beta")) {
    Fields s = f.child("sweep_beta");
    cfg.betas = parse_betas(s, "betas");
    s.finish();
  }
  f.finish();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(doc);
}

std::string config_hash(const RunConfig& cfg) {
  json doc = cfg.document;
  doc.erase("workers");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

ModelSpec build_model(const ModelConfig& cfg) {
  if (cfg.type == "ising") return ising_model(cfg.ising);
  if (cfg.type == "xy") return xy_model(cfg.xy);
  if (cfg.type == "subsystem") return subsystem_model(cfg.subsystem);
  throw ConfigError("model.type: unknown model type '" + cfg.type + "'");
}

QuenchProtocol build_protocol(const ProtocolConfig& cfg, int n_sites) {
  QuenchProtocol p;
  p.grid = TimeGrid(cfg.total_time, cfg.n_steps);
  p.quench_ends = cfg.quench_ends;
  p.states = haar_states(cfg.n_states, n_sites, cfg.state_seed);
  p.exact_initial = cfg.exact_initial;
  p.trace_weight = cfg.trace_weight;
  const BasisConfig& b = cfg.bases;
  if (b.kind == "all") {
    int total = 1;
    for (int k = 0; k < n_sites; ++k) total *= 3;
    for (int code = 0; code < total; ++code) {
      std::string letters;
      for (int k = 0, v = code; k < n_sites; ++k, v /= 3) letters += "XYZ"[v % 3];
      p.bases.push_back(PauliString::from_string(letters));
    }
  } else if (b.kind == "random") {
    p.bases = random_bases(b.count, n_sites, b.seed);
  } else if (b.kind == "covering") {
    std::vector<PauliString> ops;
    for (const Operator& op : local_observables(n_sites, std::min(b.max_weight, 2))) {
      for (const auto& [pauli, coeff] : op.terms()) ops.push_back(pauli);
    }
    if (b.max_weight > 2) {
      // Contiguous strings of every length up to max_weight.
      for (int w = 3; w <= b.max_weight; ++w) {
        for (int start = 0; start + w <= n_sites; ++start) {
          int total = 1;
          for (int k = 0; k < w; ++k) total *= 3;
          for (int code = 0; code < total; ++code) {
            std::string letters(static_cast<std::size_t>(n_sites), 'I');
            for (int k = 0, v = code; k < w; ++k, v /= 3) letters[static_cast<std::size_t>(start + k)] = "XYZ"[v % 3];
            ops.push_back(PauliString::from_string(letters));
          }
        }
      }
    }
    p.bases = group_bases(ops);
  } else {
    for (const auto& s : b.list) p.bases.push_back(PauliString::from_string(s));
  }
  p.validate();
  return p;
}

namespace {

int block_size_of(const ModelConfig& model) {
  return model.type == "subsystem" ? model.subsystem.block_size : 0;
}

struct PipelineParts {
  Ansatz ansatz;
  DissipatorAnsatz dissipators;
  std::vector<Operator> observables;
  std::vector<Operator> probes;
  std::optional<Parametrization> parametrization;
};

std::shared_ptr<PipelineParts> make_parts(const LearningConfig& cfg, const ModelConfig& model) {
  const int n = model_sites(model);
  auto parts = std::make_shared<PipelineParts>();
  parts->ansatz = hamiltonian_ansatz(cfg.ansatz, n, block_size_of(model));
  parts->dissipators = dissipator_ansatz(cfg.dissipators, n, cfg.dissipator_cap);
  if (cfg.method == "ehrenfest") parts->observables = local_observables(n, cfg.observable_weight);
  if (!cfg.probes.empty()) parts->probes = probe_set(cfg.probes, n);
  if (cfg.parametrization == "homogeneous") parts->parametrization = homogeneous_parametrization(parts->ansatz);
  if (cfg.parametrization == "power_law") parts->parametrization = power_law_parametrization(parts->ansatz);
  return parts;
}

ConstraintSystem system_from_parts(const PipelineParts& parts, const LearningConfig& cfg,
                                   ExpectationSource& source) {
  const RowSelection rows{cfg.states, cfg.ends};
  ConstraintSystem sys = cfg.method == "ehrenfest"
                             ? build_ehrenfest(source, parts.ansatz, parts.dissipators, parts.observables, rows)
                             : build_energy(source, parts.ansatz, parts.dissipators, rows);
  if (!parts.probes.empty()) {
    sys.additional = build_additional(source, parts.ansatz, parts.dissipators, parts.probes, rows);
  }
  return sys;
}

}  // namespace

ConstraintSystem build_system(const LearningConfig& cfg, const ModelConfig& model,
                              ExpectationSource& source) {
  return system_from_parts(*make_parts(cfg, model), cfg, source);
}

std::optional<Parametrization> build_parametrization(const LearningConfig& cfg, const ModelConfig& model) {
  if (cfg.parametrization == "none") return std::nullopt;
  const Ansatz a = hamiltonian_ansatz(cfg.ansatz, model_sites(model), block_size_of(model));
  if (cfg.parametrization == "homogeneous") return homogeneous_parametrization(a);
  return power_law_parametrization(a);
}

Pipeline build_pipeline(const LearningConfig& cfg, const ModelConfig& model) {
  auto parts = make_parts(cfg, model);
  return [parts, cfg](ExpectationSource& source) {
    const ConstraintSystem sys = system_from_parts(*parts, cfg, source);
    if (!parts->parametrization) return solve(sys, cfg.solver);
    const Parametrization& p = *parts->parametrization;
    if (cfg.beta > 0.0) {
      SolverConfig solver = cfg.solver;
      solver.beta = cfg.beta;
      const Eigen::VectorXd alpha =
          p.n_alpha() > 0 ? Eigen::VectorXd::Constant(p.n_alpha(), *cfg.alpha) : Eigen::VectorXd();
      return solve_regularized(sys, p.matrix(alpha), solver);
    }
    return solve_parametrized(sys, p, cfg.solver);
  };
}

Eigen::VectorXd true_coefficients(const LearningConfig& cfg, const ModelSpec& model,
                                  const ModelConfig& model_cfg) {
  return project_onto(hamiltonian_ansatz(cfg.ansatz, model.n_sites(), block_size_of(model_cfg)),
                      model.model.hamiltonian())
      .coefficients;
}

}  // namespace hlearn
