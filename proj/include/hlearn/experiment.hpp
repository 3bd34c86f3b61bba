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

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hlearn/dynamics.hpp"
#include "hlearn/pauli.hpp"

namespace hlearn {

/// Product of single-site pure states given by unit Bloch vectors.
class ProductState {
 public:
  ProductState() = default;
  explicit ProductState(std::vector<std::array<double, 3>> bloch);

  /// Independent Haar-random site states.
  static ProductState haar_random(int n_sites, std::uint64_t seed);
  /// All sites in the +1 eigenstate of the given letter.
  static ProductState uniform(int n_sites, PauliLetter letter);

  int n_sites() const { return static_cast<int>(bloch_.size()); }
  const std::vector<std::array<double, 3>>& bloch() const { return bloch_; }

  /// <P> = product of Bloch components over the support of P.
  double expectation(const PauliString& p) const;
  DensityMatrix density() const;
  DensityMatrix density(const std::vector<int>& sites) const;

 private:
  std::vector<std::array<double, 3>> bloch_;
};

/// Reproducible list of Haar-random product states.
std::vector<ProductState> haar_states(int n_states, int n_sites, std::uint64_t seed);

struct MeasurementSetting {
  int state_id = 0;
  PauliString basis;
  int time_index = 0;
  int shots = 1;
};

/// Outcome words: bit k set means site k read -1.
using ShotWords = std::vector<std::uint64_t>;

/// Shot-limited quench data; the only input the learning methods see besides the states.
struct QuenchDataset {
  int n_sites = 0;
  TimeGrid grid;
  std::vector<ProductState> states;
  /// When set, t = 0 expectations come from the prepared states rather than shots.
  bool exact_initial = true;
  std::vector<MeasurementSetting> settings;
  std::vector<ShotWords> records;

  std::int64_t total_runs() const;
  /// Copy keeping the first counts[i] shots of setting i.
  QuenchDataset prefix(const std::vector<int>& counts) const;
  /// Throws std::invalid_argument when shot counts and records disagree.
  void validate() const;
};

/// True when the basis letter equals the operator letter on every site the operator acts on.
bool compatible(const PauliString& op, const PauliString& basis);

struct Estimate {
  double mean = 0.0;
  std::int64_t n_shots = 0;
};

/// Pooled sign average over every compatible setting; MissingDataError when none exists.
Estimate estimate(const QuenchDataset& dataset, const PauliString& op, int state_id,
                  int time_index);

/// Greedy cover by full-weight bases; deterministic (ops ordered by weight, then letters).
std::vector<PauliString> group_bases(const std::vector<PauliString>& ops);

/// I.i.d. uniform letters from {X, Y, Z}.
std::vector<PauliString> random_bases(int n_bases, int n_sites, std::uint64_t seed);

/// Every operator of weight 1..max_weight whose letters agree with the basis.
std::vector<PauliString> contained_operators(const PauliString& basis, int max_weight);

/// Settings of a quench experiment and how a run budget is split across them.
struct QuenchProtocol {
  TimeGrid grid;
  /// Even time indices at which quench constraints are imposed.
  std::vector<int> quench_ends;
  std::vector<ProductState> states;
  std::vector<PauliString> bases;
  bool exact_initial = true;
  /// Shots at a non-end time relative to an end time.
  double trace_weight = 1.0;

  /// Unit-shot settings in canonical order (state, time, basis).
  std::vector<MeasurementSetting> settings() const;
  /// Shots per setting for a total budget: max(1, floor(budget * w / sum w)).
  std::vector<int> allocate(std::int64_t budget) const;
  void validate() const;
};

/// Shot words for one setting drawn from the exact outcome distribution.
ShotWords sample_setting(const LindbladModel& model, const ProductState& state,
                         const MeasurementSetting& setting, const TimeGrid& grid,
                         std::uint64_t seed, int substeps = 0);

/// Simulates the whole protocol at the given budget. Setting i draws from a stream seeded by
/// (seed, i), so a larger budget extends every record of a smaller one.
QuenchDataset simulate_dataset(const LindbladModel& model, const QuenchProtocol& protocol,
                               std::int64_t budget, std::uint64_t seed, int workers = 1,
                               int substeps = 0);

/// Per-setting seed derived from the run seed and the setting index.
std::uint64_t setting_seed(std::uint64_t seed, std::uint64_t index);

nlohmann::json dataset_to_json(const QuenchDataset& dataset);
QuenchDataset dataset_from_json(const nlohmann::json& doc);
void save_dataset(const QuenchDataset& dataset, const std::string& path);
QuenchDataset load_dataset(const std::string& path);

/// Expectation values of Pauli strings per (state, time index), from data or exact dynamics.
class ExpectationSource {
 public:
  virtual ~ExpectationSource() = default;

  virtual int n_sites() const = 0;
  virtual int n_states() const = 0;
  virtual const TimeGrid& grid() const = 0;

  /// Makes the listed operators available at the listed times; MissingDataError lists the
  /// operators that cannot be estimated. Empty times means every grid point.
  virtual void require(const std::vector<PauliString>& ops, const std::vector<int>& times = {}) = 0;
  virtual double value(const PauliString& p, int state, int time_index) = 0;

  double value(const Operator& op, int state, int time_index);
  /// Simpson integral of <op> from t_0 to t_end.
  double integral(const Operator& op, int state, int end_index);
};

/// Exact expectations from noiseless evolution of each independent block.
class OracleSource final : public ExpectationSource {
 public:
  OracleSource(LindbladModel model, std::vector<ProductState> states, TimeGrid grid,
               int substeps = 0, int workers = 1);

  int n_sites() const override { return model_.n_sites(); }
  int n_states() const override { return static_cast<int>(states_.size()); }
  const TimeGrid& grid() const override { return grid_; }
  void require(const std::vector<PauliString>& ops, const std::vector<int>& times = {}) override;
  double value(const PauliString& p, int state, int time_index) override;
  using ExpectationSource::value;

 private:
  LindbladModel model_;
  std::vector<ProductState> states_;
  TimeGrid grid_;
  int substeps_ = 0;
  int workers_ = 1;
  std::vector<std::vector<int>> blocks_;
  std::vector<LindbladModel> block_models_;
  std::vector<int> block_of_site_;
  // Per block: restricted string -> values indexed [state * n_points + time].
  std::vector<std::unordered_map<PauliString, std::vector<double>>> cache_;
};

/// Shot-based estimates pooled over compatible settings.
class DatasetSource final : public ExpectationSource {
 public:
  explicit DatasetSource(const QuenchDataset& dataset);

  int n_sites() const override { return dataset_->n_sites; }
  int n_states() const override { return static_cast<int>(dataset_->states.size()); }
  const TimeGrid& grid() const override { return dataset_->grid; }
  void require(const std::vector<PauliString>& ops, const std::vector<int>& times = {}) override;
  double value(const PauliString& p, int state, int time_index) override;
  using ExpectationSource::value;

  Estimate estimate(const PauliString& p, int state, int time_index);

 private:
  struct SettingView {
    PauliString basis;
    std::int64_t shots = 0;
    std::vector<double> parity;  // signed counts for every support mask when small
    const ShotWords* words = nullptr;
  };
  const QuenchDataset* dataset_;
  std::vector<std::vector<SettingView>> by_slot_;  // [state * n_points + time]
  std::unordered_map<PauliString, std::vector<double>> cache_;
};

/// CSV rows "op,state,time_index,time,mean,n_shots".
std::string estimates_csv(const QuenchDataset& dataset, const std::vector<PauliString>& ops);

}  // namespace hlearn
