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

#include "hlearn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hlearn/error.hpp"
#include "internal.hpp"

namespace hlearn {

using detail::parallel_for;
using detail::splitmix64;
using detail::unit_uniform;

namespace {

constexpr int kParityTableMaxSites = 12;

std::uint64_t mask_of(const std::vector<int>& sites) {
  std::uint64_t m = 0;
  for (int s : sites) m |= std::uint64_t{1} << s;
  return m;
}

// Applies u (2x2) on `site` from the left and u^dag from the right.
void rotate_site(Eigen::MatrixXcd& rho, int site, const Eigen::Matrix2cd& u) {
  const Eigen::Index dim = rho.rows();
  const Eigen::Index bit = Eigen::Index{1} << site;
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (i & bit) continue;
    const Eigen::Index j = i | bit;
    for (Eigen::Index c = 0; c < dim; ++c) {
      const cplx a = rho(i, c), b = rho(j, c);
      rho(i, c) = u(0, 0) * a + u(0, 1) * b;
      rho(j, c) = u(1, 0) * a + u(1, 1) * b;
    }
  }
  const Eigen::Matrix2cd ud = u.adjoint();
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (i & bit) continue;
    const Eigen::Index j = i | bit;
    for (Eigen::Index r = 0; r < dim; ++r) {
      const cplx a = rho(r, i), b = rho(r, j);
      rho(r, i) = a * ud(0, 0) + b * ud(1, 0);
      rho(r, j) = a * ud(0, 1) + b * ud(1, 1);
    }
  }
}

const Eigen::Matrix2cd& basis_rotation(PauliLetter letter) {
  static const Eigen::Matrix2cd kIdentity = Eigen::Matrix2cd::Identity();
  static const Eigen::Matrix2cd kX = [] {
    Eigen::Matrix2cd h;
    h << 1, 1, 1, -1;
    return Eigen::Matrix2cd(h / std::sqrt(2.0));
  }();
  static const Eigen::Matrix2cd kY = [] {
    Eigen::Matrix2cd sdag;
    sdag << 1, 0, 0, cplx(0, -1);
    return Eigen::Matrix2cd(kX * sdag);
  }();
  switch (letter) {
    case PauliLetter::X: return kX;
    case PauliLetter::Y: return kY;
    default: return kIdentity;
  }
}

// Cumulative outcome distribution of `rho` measured in `basis` (block-local letters).
std::vector<double> outcome_cdf(const Eigen::MatrixXcd& rho, const PauliString& basis) {
  Eigen::MatrixXcd r = rho;
  for (int k = 0; k < basis.n_sites(); ++k) {
    const auto letter = basis.letter(k);
    if (letter == PauliLetter::X || letter == PauliLetter::Y) {
      rotate_site(r, k, basis_rotation(letter));
    }
  }
  std::vector<double> cdf(static_cast<std::size_t>(r.rows()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    acc += std::max(0.0, r(i, i).real());
    cdf[static_cast<std::size_t>(i)] = acc;
  }
  for (auto& c : cdf) c /= acc;
  return cdf;
}

std::uint64_t deposit(std::uint64_t local, const std::vector<int>& sites) {
  std::uint64_t word = 0;
  for (std::size_t k = 0; k < sites.size(); ++k) {
    if ((local >> k) & 1U) word |= std::uint64_t{1} << sites[k];
  }
  return word;
}

void draw_block(const std::vector<double>& cdf, const std::vector<int>& sites,
                std::uint64_t stream_seed, int shots, ShotWords& words) {
  std::mt19937_64 rng(stream_seed);
  for (int s = 0; s < shots; ++s) {
    const double u = unit_uniform(rng);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    const auto local = static_cast<std::uint64_t>(it - cdf.begin());
    words[static_cast<std::size_t>(s)] |= deposit(local, sites);
  }
}

}  // namespace

// --- ProductState -----------------------------------------------------------

ProductState::ProductState(std::vector<std::array<double, 3>> bloch) : bloch_(std::move(bloch)) {
  if (bloch_.empty() || bloch_.size() > 64) {
    throw DimensionError("ProductState: need 1..64 sites");
  }
  for (const auto& r : bloch_) {
    const double norm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    if (std::abs(norm - 1.0) > 1e-12) {
      throw std::invalid_argument("ProductState: Bloch vectors must have unit norm");
    }
  }
}

ProductState ProductState::haar_random(int n_sites, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::array<double, 3>> bloch;
  for (int k = 0; k < n_sites; ++k) {
    const double z = 2.0 * unit_uniform(rng) - 1.0;
    const double phi = 2.0 * std::numbers::pi * unit_uniform(rng);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    std::array<double, 3> r{rho * std::cos(phi), rho * std::sin(phi), z};
    const double norm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    for (auto& c : r) c /= norm;
    bloch.push_back(r);
  }
  return ProductState(std::move(bloch));
}

ProductState ProductState::uniform(int n_sites, PauliLetter letter) {
  std::array<double, 3> r{0, 0, 0};
  switch (letter) {
    case PauliLetter::X: r[0] = 1; break;
    case PauliLetter::Y: r[1] = 1; break;
    default: r[2] = 1; break;
  }
  return ProductState(std::vector<std::array<double, 3>>(static_cast<std::size_t>(n_sites), r));
}

double ProductState::expectation(const PauliString& p) const {
  if (p.n_sites() != n_sites()) throw DimensionError("ProductState::expectation: size mismatch");
  double v = 1.0;
  std::uint64_t supp = p.support();
  while (supp != 0) {
    const int k = std::countr_zero(supp);
    supp &= supp - 1;
    const auto& r = bloch_[static_cast<std::size_t>(k)];
    switch (p.letter(k)) {
      case PauliLetter::X: v *= r[0]; break;
      case PauliLetter::Y: v *= r[1]; break;
      case PauliLetter::Z: v *= r[2]; break;
      default: break;
    }
  }
  return v;
}

DensityMatrix ProductState::density(const std::vector<int>& sites) const {
  std::vector<Eigen::Matrix2cd> mats;
  for (int s : sites) mats.push_back(bloch_to_density(bloch_.at(static_cast<std::size_t>(s))));
  return DensityMatrix::product(mats);
}

DensityMatrix ProductState::density() const {
  std::vector<int> all(bloch_.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
  return density(all);
}

std::vector<ProductState> haar_states(int n_states, int n_sites, std::uint64_t seed) {
  std::vector<ProductState> states;
  for (int s = 0; s < n_states; ++s) {
    states.push_back(ProductState::haar_random(n_sites, splitmix64(seed + 0x51ED270B0A3C6E5FULL * (s + 1))));
  }
  return states;
}

// --- dataset ----------------------------------------------------------------

std::int64_t QuenchDataset::total_runs() const {
  std::int64_t total = 0;
  for (const auto& s : settings) total += s.shots;
  return total;
}

void QuenchDataset::validate() const {
  if (records.size() != settings.size()) {
    throw std::invalid_argument("dataset: one record list per setting required");
  }
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const auto& s = settings[i];
    if (s.shots < 1 || static_cast<std::size_t>(s.shots) != records[i].size()) {
      throw std::invalid_argument("dataset: setting " + std::to_string(i) +
                                  " shot count does not match its record");
    }
    if (s.state_id < 0 || s.state_id >= static_cast<int>(states.size())) {
      throw std::invalid_argument("dataset: setting " + std::to_string(i) + " has unknown state");
    }
    if (s.time_index < 0 || s.time_index > grid.n_steps()) {
      throw std::invalid_argument("dataset: setting " + std::to_string(i) + " time out of grid");
    }
    if (s.basis.n_sites() != n_sites || s.basis.weight() != n_sites) {
      throw std::invalid_argument("dataset: setting " + std::to_string(i) +
                                  " basis must assign X, Y or Z to every site");
    }
  }
}

QuenchDataset QuenchDataset::prefix(const std::vector<int>& counts) const {
  if (counts.size() != settings.size()) throw DimensionError("dataset prefix: count size mismatch");
  QuenchDataset out = *this;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (counts[i] < 1 || counts[i] > settings[i].shots) {
      throw std::invalid_argument("dataset prefix: counts must lie in [1, shots]");
    }
    out.settings[i].shots = counts[i];
    out.records[i].resize(static_cast<std::size_t>(counts[i]));
  }
  return out;
}

bool compatible(const PauliString& op, const PauliString& basis) {
  const std::uint64_t supp = op.support();
  return ((op.x_bits() ^ basis.x_bits()) & supp) == 0 && ((op.z_bits() ^ basis.z_bits()) & supp) == 0;
}

Estimate estimate(const QuenchDataset& dataset, const PauliString& op, int state_id,
                  int time_index) {
  if (op.n_sites() != dataset.n_sites) throw DimensionError("estimate: operator size mismatch");
  if (dataset.exact_initial && time_index == 0) {
    return {dataset.states.at(static_cast<std::size_t>(state_id)).expectation(op), 0};
  }
  const std::uint64_t supp = op.support();
  std::int64_t sum = 0, n = 0;
  for (std::size_t i = 0; i < dataset.settings.size(); ++i) {
    const auto& s = dataset.settings[i];
    if (s.state_id != state_id || s.time_index != time_index || !compatible(op, s.basis)) continue;
    for (auto w : dataset.records[i]) sum += (std::popcount(w & supp) & 1) ? -1 : 1;
    n += s.shots;
  }
  if (n == 0) {
    throw MissingDataError("no setting measures " + op.to_string() + " at state " +
                               std::to_string(state_id) + ", time index " +
                               std::to_string(time_index),
                           {op.to_string()});
  }
  return {static_cast<double>(sum) / static_cast<double>(n), n};
}

// --- bases ------------------------------------------------------------------

std::vector<PauliString> group_bases(const std::vector<PauliString>& ops) {
  if (ops.empty()) throw std::invalid_argument("group_bases: empty operator list");
  const int n = ops.front().n_sites();
  std::vector<PauliString> pending;
  for (const auto& p : ops) {
    if (p.n_sites() != n) throw DimensionError("group_bases: operators differ in size");
    if (!p.is_identity()) pending.push_back(p);
  }
  std::sort(pending.begin(), pending.end(), [](const PauliString& a, const PauliString& b) {
    if (a.weight() != b.weight()) return a.weight() > b.weight();
    return a.to_string() < b.to_string();
  });
  pending.erase(std::unique(pending.begin(), pending.end()), pending.end());

  std::vector<PauliString> bases;
  while (!pending.empty()) {
    PauliString partial(n);
    for (const auto& p : pending) {
      // Merge when consistent with every letter fixed so far.
      const std::uint64_t overlap = p.support() & partial.support();
      if (((p.x_bits() ^ partial.x_bits()) & overlap) != 0 ||
          ((p.z_bits() ^ partial.z_bits()) & overlap) != 0) {
        continue;
      }
      partial = PauliString(n, partial.x_bits() | p.x_bits(), partial.z_bits() | p.z_bits());
    }
    const std::uint64_t free_sites = ~partial.support() & (n >= 64 ? ~0ULL : ((1ULL << n) - 1));
    PauliString basis(n, partial.x_bits(), partial.z_bits() | free_sites);
    bases.push_back(basis);
    std::erase_if(pending, [&](const PauliString& p) { return compatible(p, basis); });
  }
  return bases;
}

std::vector<PauliString> random_bases(int n_bases, int n_sites, std::uint64_t seed) {
  static constexpr PauliLetter kLetters[3] = {PauliLetter::X, PauliLetter::Y, PauliLetter::Z};
  std::mt19937_64 rng(seed);
  std::vector<PauliString> bases;
  bases.reserve(static_cast<std::size_t>(n_bases));
  for (int b = 0; b < n_bases; ++b) {
    PauliString p(n_sites);
    for (int k = 0; k < n_sites; ++k) {
      // Rejection keeps the three letters exactly equiprobable.
      std::uint64_t r;
      do {
        r = rng();
      } while (r >= 0xFFFFFFFFFFFFFFFFULL - (0xFFFFFFFFFFFFFFFFULL % 3));
      p.set_letter(k, kLetters[r % 3]);
    }
    bases.push_back(p);
  }
  return bases;
}

std::vector<PauliString> contained_operators(const PauliString& basis, int max_weight) {
  const int n = basis.n_sites();
  std::vector<PauliString> out;
  std::vector<int> pick;
  auto recurse = [&](auto&& self, int start) -> void {
    if (!pick.empty()) {
      PauliString p(n);
      for (int s : pick) p.set_letter(s, basis.letter(s));
      out.push_back(p);
    }
    if (static_cast<int>(pick.size()) == max_weight) return;
    for (int s = start; s < n; ++s) {
      if (basis.letter(s) == PauliLetter::I) continue;
      pick.push_back(s);
      self(self, s + 1);
      pick.pop_back();
    }
  };
  recurse(recurse, 0);
  return out;
}

// --- protocol and simulation ------------------------------------------------

void QuenchProtocol::validate() const {
  if (states.empty()) throw std::invalid_argument("protocol: no initial states");
  if (bases.empty()) throw std::invalid_argument("protocol: no measurement bases");
  const int n = states.front().n_sites();
  for (const auto& s : states) {
    if (s.n_sites() != n) throw DimensionError("protocol: states differ in size");
  }
  for (const auto& b : bases) {
    if (b.n_sites() != n || b.weight() != n) {
      throw std::invalid_argument("protocol: bases must assign X, Y or Z to every site");
    }
  }
  for (int e : quench_ends) {
    if (e <= 0 || e > grid.n_steps() || e % 2 != 0) {
      throw std::invalid_argument("protocol: quench end indices must be even and inside the grid");
    }
  }
  if (!(trace_weight >= 0.0)) throw std::invalid_argument("protocol: trace_weight must be >= 0");
}

std::vector<MeasurementSetting> QuenchProtocol::settings() const {
  const int last = quench_ends.empty() ? grid.n_steps()
                                       : *std::max_element(quench_ends.begin(), quench_ends.end());
  std::vector<MeasurementSetting> out;
  for (int s = 0; s < static_cast<int>(states.size()); ++s) {
    for (int m = exact_initial ? 1 : 0; m <= last; ++m) {
      for (const auto& b : bases) out.push_back({s, b, m, 1});
    }
  }
  return out;
}

std::vector<int> QuenchProtocol::allocate(std::int64_t budget) const {
  const auto list = settings();
  std::vector<double> weight(list.size());
  const std::set<int> ends(quench_ends.begin(), quench_ends.end());
  double total = 0.0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    weight[i] = (ends.empty() || ends.count(list[i].time_index)) ? 1.0 : trace_weight;
    total += weight[i];
  }
  std::vector<int> shots(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    const double share = std::floor(static_cast<double>(budget) * weight[i] / total);
    shots[i] = std::max(1, static_cast<int>(std::min(share, 2.0e9)));
  }
  return shots;
}

std::uint64_t setting_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0xD1B54A32D192ED03ULL));
}

namespace {

// Samples every listed setting of one initial state, block by block.
void sample_state(const LindbladModel& model, const ProductState& state, const TimeGrid& grid,
                  const std::vector<MeasurementSetting>& settings,
                  const std::vector<std::size_t>& indices,
                  const std::vector<std::uint64_t>& stream_seeds, int substeps,
                  std::vector<ShotWords>& records) {
  const auto blocks = model.independent_blocks();
  std::vector<std::vector<std::size_t>> at_time(static_cast<std::size_t>(grid.n_points()));
  int last_time = 0;
  for (auto i : indices) {
    at_time[static_cast<std::size_t>(settings[i].time_index)].push_back(i);
    last_time = std::max(last_time, settings[i].time_index);
    records[i].assign(static_cast<std::size_t>(settings[i].shots), 0);
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& sites = blocks[b];
    const LindbladModel block_model = model.restrict_to(sites);
    evolve_visit(block_model, state.density(sites), grid, substeps,
                 [&](int m, const Eigen::MatrixXcd& rho) {
                   if (m > last_time) return;
                   std::unordered_map<PauliString, std::vector<double>> cdfs;
                   for (auto i : at_time[static_cast<std::size_t>(m)]) {
                     const PauliString local = settings[i].basis.restrict_to(sites);
                     auto it = cdfs.find(local);
                     if (it == cdfs.end()) it = cdfs.emplace(local, outcome_cdf(rho, local)).first;
                     draw_block(it->second, sites, setting_seed(stream_seeds[i], b),
                                settings[i].shots, records[i]);
                   }
                 });
  }
}

}  // namespace

ShotWords sample_setting(const LindbladModel& model, const ProductState& state,
                         const MeasurementSetting& setting, const TimeGrid& grid,
                         std::uint64_t seed, int substeps) {
  if (state.n_sites() != model.n_sites() || setting.basis.n_sites() != model.n_sites()) {
    throw DimensionError("sample_setting: model, state and basis sizes differ");
  }
  if (setting.basis.weight() != model.n_sites()) {
    throw std::invalid_argument("sample_setting: basis must assign X, Y or Z to every site");
  }
  if (setting.time_index < 0 || setting.time_index > grid.n_steps()) {
    throw std::invalid_argument("sample_setting: time index outside the grid");
  }
  if (setting.shots < 1) throw std::invalid_argument("sample_setting: shots must be >= 1");
  std::vector<ShotWords> records(1);
  sample_state(model, state, grid, {setting}, {0}, {seed}, substeps, records);
  return records[0];
}

QuenchDataset simulate_dataset(const LindbladModel& model, const QuenchProtocol& protocol,
                               std::int64_t budget, std::uint64_t seed, int workers,
                               int substeps) {
  protocol.validate();
  if (protocol.states.front().n_sites() != model.n_sites()) {
    throw DimensionError("simulate_dataset: protocol and model sizes differ");
  }
  QuenchDataset ds;
  ds.n_sites = model.n_sites();
  ds.grid = protocol.grid;
  ds.states = protocol.states;
  ds.exact_initial = protocol.exact_initial;
  ds.settings = protocol.settings();
  const auto shots = protocol.allocate(budget);
  std::vector<std::uint64_t> seeds(ds.settings.size());
  for (std::size_t i = 0; i < ds.settings.size(); ++i) {
    ds.settings[i].shots = shots[i];
    seeds[i] = setting_seed(seed, i);
  }
  ds.records.resize(ds.settings.size());
  std::vector<std::vector<std::size_t>> by_state(protocol.states.size());
  for (std::size_t i = 0; i < ds.settings.size(); ++i) {
    by_state[static_cast<std::size_t>(ds.settings[i].state_id)].push_back(i);
  }
  parallel_for(static_cast<int>(by_state.size()), workers, [&](int s) {
    sample_state(model, protocol.states[static_cast<std::size_t>(s)], protocol.grid, ds.settings,
                 by_state[static_cast<std::size_t>(s)], seeds, substeps, ds.records);
  });
  return ds;
}

// --- serialization ----------------------------------------------------------

nlohmann::json dataset_to_json(const QuenchDataset& dataset) {
  using nlohmann::json;
  json doc;
  doc["schema"] = 1;
  doc["kind"] = "quench_dataset";
  doc["n_sites"] = dataset.n_sites;
  doc["grid"] = {{"total_time", dataset.grid.total_time()}, {"n_steps", dataset.grid.n_steps()}};
  doc["exact_initial"] = dataset.exact_initial;
  json states = json::array();
  for (const auto& s : dataset.states) states.push_back(s.bloch());
  doc["states"] = std::move(states);
  json settings = json::array();
  for (std::size_t i = 0; i < dataset.settings.size(); ++i) {
    const auto& s = dataset.settings[i];
    json runs = json::array();
    const auto& words = dataset.records[i];
    for (std::size_t k = 0; k < words.size();) {
      std::size_t end = k + 1;
      while (end < words.size() && words[end] == words[k]) ++end;
      runs.push_back({words[k], end - k});
      k = end;
    }
    settings.push_back({{"state", s.state_id},
                        {"basis", s.basis.to_string()},
                        {"time", s.time_index},
                        {"shots", s.shots},
                        {"words", std::move(runs)}});
  }
  doc["settings"] = std::move(settings);
  return doc;
}

QuenchDataset dataset_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", 0) != 1) throw std::invalid_argument("dataset: unsupported schema");
  QuenchDataset ds;
  ds.n_sites = doc.at("n_sites").get<int>();
  ds.grid = TimeGrid(doc.at("grid").at("total_time").get<double>(),
                     doc.at("grid").at("n_steps").get<int>());
  ds.exact_initial = doc.at("exact_initial").get<bool>();
  for (const auto& s : doc.at("states")) {
    ds.states.emplace_back(s.get<std::vector<std::array<double, 3>>>());
  }
  for (const auto& s : doc.at("settings")) {
    MeasurementSetting setting;
    setting.state_id = s.at("state").get<int>();
    setting.basis = PauliString::from_string(s.at("basis").get<std::string>());
    setting.time_index = s.at("time").get<int>();
    setting.shots = s.at("shots").get<int>();
    ShotWords words;
    for (const auto& run : s.at("words")) {
      const auto w = run.at(0).get<std::uint64_t>();
      const auto count = run.at(1).get<std::size_t>();
      words.insert(words.end(), count, w);
    }
    ds.settings.push_back(setting);
    ds.records.push_back(std::move(words));
  }
  ds.validate();
  return ds;
}

void save_dataset(const QuenchDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << dataset_to_json(dataset).dump() << '\n';
}

QuenchDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return dataset_from_json(nlohmann::json::parse(in));
}

// --- expectation sources ----------------------------------------------------

double ExpectationSource::value(const Operator& op, int state, int time_index) {
  double v = 0.0;
  for (const auto& [p, c] : op.terms()) {
    v += c.real() * (p.is_identity() ? 1.0 : value(p, state, time_index));
  }
  return v;
}

double ExpectationSource::integral(const Operator& op, int state, int end_index) {
  const auto w = simpson_weights(end_index, grid().dt());
  double acc = 0.0;
  for (int m = 0; m <= end_index; ++m) acc += w[static_cast<std::size_t>(m)] * value(op, state, m);
  return acc;
}

OracleSource::OracleSource(LindbladModel model, std::vector<ProductState> states, TimeGrid grid,
                           int substeps, int workers)
    : model_(std::move(model)),
      states_(std::move(states)),
      grid_(grid),
      substeps_(substeps),
      workers_(workers) {
  for (const auto& s : states_) {
    if (s.n_sites() != model_.n_sites()) throw DimensionError("OracleSource: state size mismatch");
  }
  blocks_ = model_.independent_blocks();
  block_of_site_.assign(static_cast<std::size_t>(model_.n_sites()), 0);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (int s : blocks_[b]) block_of_site_[static_cast<std::size_t>(s)] = static_cast<int>(b);
    block_models_.push_back(model_.restrict_to(blocks_[b]));
  }
  cache_.resize(blocks_.size());
}

void OracleSource::require(const std::vector<PauliString>& ops, const std::vector<int>&) {
  const auto n_points = static_cast<std::size_t>(grid_.n_points());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::uint64_t mask = mask_of(blocks_[b]);
    std::vector<PauliString> fresh;
    for (const auto& p : ops) {
      if (p.n_sites() != n_sites()) throw DimensionError("OracleSource: operator size mismatch");
      if ((p.support() & mask) == 0) continue;
      PauliString local = blocks_.size() == 1 ? p : p.restrict_to(blocks_[b]);
      if (cache_[b].count(local)) continue;
      cache_[b].emplace(local, std::vector<double>(states_.size() * n_points, 0.0));
      fresh.push_back(local);
    }
    if (fresh.empty()) continue;
    std::vector<std::vector<double>*> slots;
    for (const auto& p : fresh) slots.push_back(&cache_[b].at(p));
    parallel_for(n_states(), workers_, [&](int s) {
      evolve_visit(block_models_[b], states_[static_cast<std::size_t>(s)].density(blocks_[b]),
                   grid_, substeps_, [&](int m, const Eigen::MatrixXcd& rho) {
                     const std::size_t at = static_cast<std::size_t>(s) * n_points +
                                            static_cast<std::size_t>(m);
                     for (std::size_t k = 0; k < fresh.size(); ++k) {
                       (*slots[k])[at] = pauli_trace(fresh[k], rho).real();
                     }
                   });
    });
  }
}

double OracleSource::value(const PauliString& p, int state, int time_index) {
  if (p.is_identity()) return 1.0;
  const std::size_t at = static_cast<std::size_t>(state) * static_cast<std::size_t>(grid_.n_points()) +
                         static_cast<std::size_t>(time_index);
  if (blocks_.size() == 1) {
    auto it = cache_[0].find(p);
    if (it == cache_[0].end()) {
      require({p});
      it = cache_[0].find(p);
    }
    return it->second[at];
  }
  double v = 1.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if ((p.support() & mask_of(blocks_[b])) == 0) continue;
    const PauliString local = p.restrict_to(blocks_[b]);
    auto it = cache_[b].find(local);
    if (it == cache_[b].end()) {
      require({p});
      it = cache_[b].find(local);
    }
    v *= it->second[at];
  }
  return v;
}

DatasetSource::DatasetSource(const QuenchDataset& dataset) : dataset_(&dataset) {
  dataset.validate();
  const int n = dataset.n_sites;
  const auto n_points = static_cast<std::size_t>(dataset.grid.n_points());
  by_slot_.resize(dataset.states.size() * n_points);
  for (std::size_t i = 0; i < dataset.settings.size(); ++i) {
    const auto& s = dataset.settings[i];
    SettingView view;
    view.basis = s.basis;
    view.shots = s.shots;
    view.words = &dataset.records[i];
    if (n <= kParityTableMaxSites) {
      // Walsh-Hadamard transform of the outcome histogram: entry S is the signed count of
      // the parity over the sites in S.
      std::vector<double> table(std::size_t{1} << n, 0.0);
      for (auto w : dataset.records[i]) table[w] += 1.0;
      for (std::size_t len = 1; len < table.size(); len <<= 1) {
        for (std::size_t i0 = 0; i0 < table.size(); i0 += len << 1) {
          for (std::size_t j = i0; j < i0 + len; ++j) {
            const double a = table[j], b = table[j + len];
            table[j] = a + b;
            table[j + len] = a - b;
          }
        }
      }
      view.parity = std::move(table);
    }
    by_slot_[static_cast<std::size_t>(s.state_id) * n_points + static_cast<std::size_t>(s.time_index)]
        .push_back(std::move(view));
  }
}

Estimate DatasetSource::estimate(const PauliString& p, int state, int time_index) {
  if (p.n_sites() != dataset_->n_sites) throw DimensionError("estimate: operator size mismatch");
  if (dataset_->exact_initial && time_index == 0) {
    return {dataset_->states.at(static_cast<std::size_t>(state)).expectation(p), 0};
  }
  const auto& views = by_slot_.at(static_cast<std::size_t>(state) *
                                      static_cast<std::size_t>(dataset_->grid.n_points()) +
                                  static_cast<std::size_t>(time_index));
  const std::uint64_t supp = p.support();
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& v : views) {
    if (!compatible(p, v.basis)) continue;
    if (!v.parity.empty()) {
      sum += v.parity[supp];
    } else {
      std::int64_t acc = 0;
      for (auto w : *v.words) acc += (std::popcount(w & supp) & 1) ? -1 : 1;
      sum += static_cast<double>(acc);
    }
    n += v.shots;
  }
  if (n == 0) {
    throw MissingDataError("no setting measures " + p.to_string() + " at state " +
                               std::to_string(state) + ", time index " + std::to_string(time_index),
                           {p.to_string()});
  }
  return {sum / static_cast<double>(n), n};
}

void DatasetSource::require(const std::vector<PauliString>& ops, const std::vector<int>& times) {
  std::vector<int> ts = times;
  if (ts.empty()) {
    for (int m = 0; m <= dataset_->grid.n_steps(); ++m) ts.push_back(m);
  }
  std::vector<std::string> uncovered;
  for (const auto& p : ops) {
    if (p.is_identity()) continue;
    bool missing = false;
    for (int s = 0; s < n_states() && !missing; ++s) {
      for (int m : ts) {
        if (dataset_->exact_initial && m == 0) continue;
        const auto& views = by_slot_[static_cast<std::size_t>(s) *
                                         static_cast<std::size_t>(dataset_->grid.n_points()) +
                                     static_cast<std::size_t>(m)];
        if (std::none_of(views.begin(), views.end(),
                         [&](const SettingView& v) { return compatible(p, v.basis); })) {
          missing = true;
          break;
        }
      }
    }
    if (missing) uncovered.push_back(p.to_string());
  }
  if (!uncovered.empty()) {
    std::string msg = "dataset cannot estimate " + std::to_string(uncovered.size()) +
                      " operator(s), e.g. " + uncovered.front();
    throw MissingDataError(msg, uncovered);
  }
}

double DatasetSource::value(const PauliString& p, int state, int time_index) {
  if (p.is_identity()) return 1.0;
  const auto n_points = static_cast<std::size_t>(dataset_->grid.n_points());
  auto it = cache_.find(p);
  if (it == cache_.end()) {
    it = cache_.emplace(p, std::vector<double>(dataset_->states.size() * n_points,
                                               std::numeric_limits<double>::quiet_NaN()))
             .first;
  }
  double& slot = it->second[static_cast<std::size_t>(state) * n_points +
                            static_cast<std::size_t>(time_index)];
  if (std::isnan(slot)) slot = estimate(p, state, time_index).mean;
  return slot;
}

std::string estimates_csv(const QuenchDataset& dataset, const std::vector<PauliString>& ops) {
  DatasetSource source(dataset);
  std::ostringstream out;
  out.precision(17);
  out << "op,state,time_index,time,mean,n_shots\n";
  for (const auto& p : ops) {
    for (int s = 0; s < static_cast<int>(dataset.states.size()); ++s) {
      for (int m = 0; m <= dataset.grid.n_steps(); ++m) {
        try {
          const auto e = source.estimate(p, s, m);
          out << p.to_string() << ',' << s << ',' << m << ',' << dataset.grid.time(m) << ','
              << e.mean << ',' << e.n_shots << '\n';
        } catch (const MissingDataError&) {
        }
      }
    }
  }
  return out.str();
}

}  // namespace hlearn
