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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hlearn/constraints.hpp"
#include "hlearn/experiment.hpp"
#include "hlearn/models.hpp"
#include "hlearn/solver.hpp"
#include "hlearn/stats.hpp"

namespace hlearn {

inline constexpr int kConfigSchema = 1;

struct ModelConfig {
  std::string type;  // ising | xy | subsystem
  IsingParams ising;
  XYParams xy;
  SubsystemParams subsystem;
};

struct BasisConfig {
  std::string kind = "all";  // all | random | covering | list
  int count = 0;
  std::uint64_t seed = 0;
  int max_weight = 2;
  std::vector<std::string> list;
};

struct ProtocolConfig {
  double total_time = 1.0;
  int n_steps = 64;
  std::vector<int> quench_ends;
  int n_states = 12;
  std::uint64_t state_seed = 0;
  BasisConfig bases;
  bool exact_initial = true;
  double trace_weight = 1.0;
  std::int64_t budget = 100000;
  int substeps = 0;
};

struct LearningConfig {
  std::string label;
  std::string method = "energy";  // energy | ehrenfest
  std::string ansatz;
  std::string dissipators = "none";
  int dissipator_cap = -1;  // negative means no cap
  int observable_weight = 1;
  std::string probes;  // empty means no additional rows
  std::string parametrization = "none";  // none | homogeneous | power_law
  /// Penalty strength; zero with a parametrization enforces it exactly.
  double beta = 0.0;
  /// Power-law exponent fixing G when the parametrization enters as a penalty.
  std::optional<double> alpha;
  /// Defaults to the protocol's quench ends.
  std::vector<int> ends;
  std::vector<int> states;
  SolverConfig solver;
};

struct CurveConfig {
  std::vector<LearningConfig> targets;
  std::vector<std::int64_t> budgets;
  int resamples = kResamplesIsing;
  bool errors = true;
  bool asymptote = true;
};

struct BootstrapConfig {
  int resamples = kResamplesIsing;
  /// When set, r doubles until the error bars settle or this count is reached.
  int max_resamples = 0;
};

struct RunConfig {
  std::string name;
  std::uint64_t seed = 0;
  /// Zero means one per available core.
  int workers = 0;
  bool oracle = false;
  ModelConfig model;
  ProtocolConfig protocol;
  LearningConfig learning;
  std::optional<CurveConfig> curve;
  BootstrapConfig bootstrap;
  std::vector<double> betas;
  /// Document the run was parsed from, with command-line overrides applied.
  nlohmann::json document;
};

/// Parses and validates a config document; ConfigError messages start with the field path.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// FNV-1a 64 of the canonical document without the worker count, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

ModelSpec build_model(const ModelConfig& cfg);
QuenchProtocol build_protocol(const ProtocolConfig& cfg, int n_sites);
/// Constraint rows (and additional rows, when probes are set) described by cfg.
ConstraintSystem build_system(const LearningConfig& cfg, const ModelConfig& model,
                              ExpectationSource& source);
/// Parametrization named by cfg, if any.
std::optional<Parametrization> build_parametrization(const LearningConfig& cfg, const ModelConfig& model);
/// The learning method described by cfg.
Pipeline build_pipeline(const LearningConfig& cfg, const ModelConfig& model);
/// True coefficients in the ansatz of cfg (least-squares projection of the model Hamiltonian).
Eigen::VectorXd true_coefficients(const LearningConfig& cfg, const ModelSpec& model,
                                  const ModelConfig& model_cfg);

}  // namespace hlearn
