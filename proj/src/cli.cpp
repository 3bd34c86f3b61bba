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
#include "hlearn/cli.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hlearn/config.hpp"
#include "hlearn/error.hpp"

namespace hlearn {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string command;
  std::string config_path;
  std::string out_dir = ".";
  std::string dataset_path;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  bool oracle = false;
};

struct Run {
  RunConfig cfg;
  std::string hash;
  ModelSpec model;
  QuenchProtocol protocol;
  fs::path out;
  int workers = 1;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

Run prepare(const Options& opt) {
  std::ifstream in(opt.config_path);
  if (!in) throw ConfigError("--config: cannot open '" + opt.config_path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: expected an object");
  if (opt.seed) doc["seed"] = *opt.seed;
  if (opt.oracle) doc["oracle"] = true;
  Run run{parse_config(doc), {}, {}, {}, opt.out_dir, 1};
  run.hash = config_hash(run.cfg);
  run.model = build_model(run.cfg.model);
  run.protocol = build_protocol(run.cfg.protocol, run.model.n_sites());
  const int requested = opt.workers > 0 ? opt.workers : run.cfg.workers;
  run.workers = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  fs::create_directories(run.out);
  return run;
}

QuenchDataset simulate(const Run& run) {
  return simulate_dataset(run.model.model, run.protocol, run.cfg.protocol.budget, run.cfg.seed, run.workers,
                          run.cfg.protocol.substeps);
}

// Data for learning: a saved dataset, exact expectations, or a fresh simulation.
struct Source {
  std::optional<QuenchDataset> dataset;
  std::unique_ptr<ExpectationSource> source;
};

Source open_source(const Run& run, const Options& opt) {
  Source s;
  if (!opt.dataset_path.empty()) {
    if (run.cfg.oracle) throw ConfigError("--dataset: cannot be combined with oracle mode");
    try {
      s.dataset = load_dataset(opt.dataset_path);
    } catch (const std::exception& e) {
      throw ConfigError("--dataset: " + std::string(e.what()));
    }
    if (s.dataset->n_sites != run.model.n_sites()) throw ConfigError("--dataset: site count differs from model");
  } else if (run.cfg.oracle) {
    s.source = std::make_unique<OracleSource>(run.model.model, run.protocol.states, run.protocol.grid,
                                              run.cfg.protocol.substeps, run.workers);
    return s;
  } else {
    s.dataset = simulate(run);
  }
  s.source = std::make_unique<DatasetSource>(*s.dataset);
  return s;
}

json diagnostics(const Run& run, const LearningConfig& learning, const LearningResult& result) {
  json d = json::object();
  const Eigen::VectorXd truth = true_coefficients(learning, run.model, run.cfg.model);
  if (truth.norm() > 0.0) {
    d["sin_theta"] = sin_theta(result.c_rec, truth);
    d["relative_error"] = relative_error(result.coefficients(), truth);
  }
  const auto rates = run.model.true_rates.find(learning.dissipators);
  if (rates != run.model.true_rates.end()) {
    d["true_rates"] = std::vector<double>(rates->second.data(), rates->second.data() + rates->second.size());
  }
  return d;
}

int cmd_simulate(const Run& run, std::ostream& out) {
  if (run.cfg.oracle) throw ConfigError("oracle: simulate draws shots and has no oracle mode");
  const QuenchDataset ds = simulate(run);
  json doc = dataset_to_json(ds);
  doc["config_hash"] = run.hash;
  write_file(run.out / "dataset.json", doc.dump() + "\n");
  std::vector<PauliString> ops;
  for (int k = 0; k < ds.n_sites; ++k) {
    for (PauliLetter l : {PauliLetter::X, PauliLetter::Y, PauliLetter::Z}) ops.push_back(PauliString::single(ds.n_sites, k, l));
  }
  write_file(run.out / "estimates.csv", "# config_hash=" + run.hash + "\n" + estimates_csv(ds, ops));
  out << "simulate: " << ds.total_runs() << " runs in " << ds.settings.size() << " settings -> "
      << (run.out / "dataset.json").string() << '\n';
  return kExitOk;
}

int cmd_learn(const Run& run, const Options& opt, std::ostream& out) {
  Source src = open_source(run, opt);
  const LearningResult result = build_pipeline(run.cfg.learning, run.cfg.model)(*src.source);
  json doc = result_to_json(result);
  doc["config_hash"] = run.hash;
  doc["label"] = run.cfg.learning.label;
  doc["method"] = run.cfg.learning.method;
  doc["figure_of_merit"] = figure_of_merit(result);
  doc["diagnostics"] = diagnostics(run, run.cfg.learning, result);
  write_file(run.out / "result.json", doc.dump(2) + "\n");
  out << "learn: ratio " << figure_of_merit(result) << (result.converged ? "" : " (not converged)") << " -> "
      << (run.out / "result.json").string() << '\n';
  return result.converged ? kExitOk : kExitNotConverged;
}

int cmd_curve(const Run& run, std::ostream& out) {
  if (!run.cfg.curve) throw ConfigError("curve: missing section");
  const CurveConfig& c = *run.cfg.curve;
  std::vector<CurveTarget> targets;
  for (const LearningConfig& t : c.targets) {
    CurveTarget target{t.label, build_pipeline(t, run.cfg.model), std::nullopt};
    const Eigen::VectorXd truth = true_coefficients(t, run.model, run.cfg.model);
    if (truth.norm() > 0.0) target.truth = truth;
    targets.push_back(std::move(target));
  }
  CurveOptions options;
  options.seed = run.cfg.seed;
  options.bootstrap.n_resamples = c.resamples;
  options.bootstrap.seed = run.cfg.seed ^ 0xC0FFEEULL;
  options.bootstrap.workers = run.workers;
  options.with_errors = c.errors;
  options.with_asymptote = c.asymptote;
  options.workers = run.workers;
  options.substeps = run.cfg.protocol.substeps;
  const auto curves = learning_curve(run.model.model, run.protocol, targets, c.budgets, options);
  bool converged = true;
  for (const LearningCurve& curve : curves) {
    converged = converged && curve.converged();
    const fs::path path = run.out / ("curve_" + curve.name + ".csv");
    write_file(path, curve_csv(curve, {{"config_hash", run.hash}, {"converged", curve.converged() ? "1" : "0"}}));
    out << "curve: " << curve.points.size() << " points -> " << path.string() << '\n';
  }
  return converged ? kExitOk : kExitNotConverged;
}

int cmd_bootstrap(const Run& run, const Options& opt, std::ostream& out) {
  if (run.cfg.oracle) throw ConfigError("oracle: bootstrap needs shot data");
  Source src = open_source(run, opt);
  const Pipeline pipeline = build_pipeline(run.cfg.learning, run.cfg.model);
  const LearningResult base = pipeline(*src.source);
  const Statistic stat = [&](const QuenchDataset& d) {
    DatasetSource s(d);
    const LearningResult r = pipeline(s);
    const Eigen::VectorXd& c = r.coefficients();
    Eigen::VectorXd v(1 + c.size() + r.d_rec.size());
    v << figure_of_merit(r), c, r.d_rec;
    return v;
  };
  BootstrapPlan plan;
  plan.n_resamples = run.cfg.bootstrap.resamples;
  plan.seed = run.cfg.seed ^ 0xB007ULL;
  plan.workers = run.workers;
  BootstrapSummary summary;
  int r = plan.n_resamples;
  if (run.cfg.bootstrap.max_resamples > 0) {
    const ResampleChoice choice = choose_resamples(*src.dataset, stat, plan, run.cfg.bootstrap.max_resamples);
    summary = choice.summary;
    r = choice.n_resamples;
  } else {
    summary = bootstrap(*src.dataset, stat, plan);
  }
  std::vector<std::string> names{"ratio"};
  for (const auto& n : base.coefficient_names) names.push_back("c:" + n);
  for (const auto& n : base.rate_names) names.push_back("d:" + n);
  std::ostringstream csv;
  csv.precision(17);
  csv << "# config_hash=" << run.hash << "\n# resamples=" << r << "\n";
  csv << "quantity,estimate,stddev,lower,upper\n";
  for (Eigen::Index i = 0; i < summary.estimate.size(); ++i) {
    csv << names[static_cast<std::size_t>(i)] << ',' << summary.estimate(i) << ',' << summary.stddev(i) << ','
        << summary.lower(i) << ',' << summary.upper(i) << '\n';
  }
  write_file(run.out / "bootstrap.csv", csv.str());
  out << "bootstrap: " << r << " resamples -> " << (run.out / "bootstrap.csv").string() << '\n';
  return base.converged ? kExitOk : kExitNotConverged;
}

int cmd_sweep_beta(const Run& run, const Options& opt, std::ostream& out) {
  const LearningConfig& l = run.cfg.learning;
  if (run.cfg.betas.empty()) throw ConfigError("sweep_beta: missing section");
  if (l.method != "energy") throw ConfigError("learning.method: sweep-beta needs 'energy'");
  const auto param = build_parametrization(l, run.cfg.model);
  if (!param) throw ConfigError("learning.parametrization: sweep-beta needs a parametrization");
  Source src = open_source(run, opt);
  const LearningResult result = build_pipeline(l, run.cfg.model)(*src.source);
  Eigen::VectorXd alpha;
  if (param->n_alpha() > 0) {
    if (l.alpha) alpha = Eigen::VectorXd::Constant(param->n_alpha(), *l.alpha);
    else if (result.alpha_rec) alpha = *result.alpha_rec;
    else throw ConfigError("learning.alpha: required to fix the parametrization");
  }
  const ConstraintSystem sys = build_system(l, run.cfg.model, *src.source);
  const auto sweep = sweep_beta(sys, param->matrix(alpha), result.d_rec, run.cfg.betas);
  std::ostringstream csv;
  csv.precision(17);
  csv << "# config_hash=" << run.hash << "\nbeta,index,value,image_weight,cost\n";
  for (const BetaSpectrum& row : sweep) {
    for (Eigen::Index i = 0; i < row.values.size(); ++i) {
      csv << row.beta << ',' << i << ',' << row.values(i) << ',' << row.image_weight(i) << ',' << row.cost << '\n';
    }
  }
  write_file(run.out / "sweep_beta.csv", csv.str());
  out << "sweep-beta: " << sweep.size() << " values -> " << (run.out / "sweep_beta.csv").string() << '\n';
  return result.converged ? kExitOk : kExitNotConverged;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hamiltonian and Liouvillian learning from simulated quench data"};
  app.require_subcommand(1, 1);
  Options opt;
  std::uint64_t seed = 0;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "draw shots and write dataset.json"},
      {"learn", "reconstruct the generator and write result.json"},
      {"curve", "learning curves over a nested run schedule"},
      {"bootstrap", "error bars from shot resampling"},
      {"sweep-beta", "spectrum of the penalized system over a beta schedule"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "run config (JSON)")->required();
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", opt.workers, "worker threads (default: config, then all cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--oracle", opt.oracle, "exact expectations instead of shots");
    if (std::string(name) != "simulate" && std::string(name) != "curve") {
      sub->add_option("--dataset", opt.dataset_path, "learn from a saved dataset");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream diag;
    const int code = app.exit(e, out, diag);
    err << diag.str();
    return code == 0 ? kExitOk : kExitInvalidConfig;
  }
  opt.command = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed") > 0) opt.seed = seed;

  try {
    const Run run = prepare(opt);
    if (opt.command == "simulate") return cmd_simulate(run, out);
    if (opt.command == "learn") return cmd_learn(run, opt, out);
    if (opt.command == "curve") return cmd_curve(run, out);
    if (opt.command == "bootstrap") return cmd_bootstrap(run, opt, out);
    return cmd_sweep_beta(run, opt, out);
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const MissingDataError& e) {
    err << "invalid config: measurement bases do not cover the constraints: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
}

}  // namespace hlearn
