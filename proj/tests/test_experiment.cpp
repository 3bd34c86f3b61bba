#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dense_oracle.hpp"
#include "hlearn/error.hpp"
#include "hlearn/experiment.hpp"

namespace hlearn {
namespace {

PauliString ps(const char* s) { return PauliString::from_string(s); }

LindbladModel idle_model(int n) { return LindbladModel(Operator(n), {}); }

LindbladModel driven_model() {
  Operator h(ps("XXI"), 0.9);
  h.add_term(ps("IYY"), 0.6);
  h.add_term(ps("ZII"), 0.4);
  h.add_term(ps("IIX"), 0.3);
  auto sm = Operator::sigma_minus(3, 1);
  return LindbladModel(h, {{sm, sm, 0.2}, {Operator(ps("IIZ")), Operator(ps("IIZ")), 0.1}});
}

QuenchDataset single_setting_dataset(const ProductState& state, const PauliString& basis,
                                     int shots, std::uint64_t seed,
                                     const LindbladModel& model) {
  QuenchDataset ds;
  ds.n_sites = state.n_sites();
  ds.grid = TimeGrid(1.0, 2);
  ds.states = {state};
  ds.settings = {{0, basis, 2, shots}};
  ds.records = {sample_setting(model, state, ds.settings[0], ds.grid, seed)};
  return ds;
}

TEST(ProductState, ValidatesAndEvaluates) {
  EXPECT_THROW(ProductState({{1, 1, 0}}), std::invalid_argument);
  auto s = ProductState::haar_random(4, 5);
  for (const auto& r : s.bloch()) {
    EXPECT_NEAR(std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]), 1.0, 1e-12);
  }
  const auto p = ps("XIZY");
  EXPECT_NEAR(s.expectation(p), expectation(p, s.density()), 1e-14);
  EXPECT_EQ(haar_states(3, 4, 9)[2].bloch(), haar_states(3, 4, 9)[2].bloch());
}

TEST(SampleSetting, GroundStateInZBasisGivesAllPlus) {
  auto state = ProductState::uniform(4, PauliLetter::Z);
  MeasurementSetting setting{0, ps("ZZZZ"), 1, 50};
  auto words = sample_setting(idle_model(4), state, setting, TimeGrid(1.0, 2), 3);
  ASSERT_EQ(words.size(), 50U);
  for (auto w : words) EXPECT_EQ(w, 0U);
}

TEST(SampleSetting, PlusStateInZBasisIsUnbiased) {
  auto state = ProductState::uniform(1, PauliLetter::X);
  auto ds = single_setting_dataset(state, ps("Z"), 10000, 4, idle_model(1));
  EXPECT_LE(std::abs(estimate(ds, ps("Z"), 0, 2).mean), 4.0 / std::sqrt(1e4));
  EXPECT_NEAR(estimate(single_setting_dataset(state, ps("X"), 100, 4, idle_model(1)), ps("X"), 0, 2)
                  .mean,
              1.0, 1e-15);
}

TEST(SampleSetting, RejectsPartialBasis) {
  auto state = ProductState::uniform(2, PauliLetter::Z);
  MeasurementSetting setting{0, ps("ZI"), 1, 5};
  EXPECT_THROW(sample_setting(idle_model(2), state, setting, TimeGrid(1.0, 2), 1),
               std::invalid_argument);
  setting.basis = ps("ZZ");
  setting.time_index = 7;
  EXPECT_THROW(sample_setting(idle_model(2), state, setting, TimeGrid(1.0, 2), 1),
               std::invalid_argument);
}

TEST(Estimate, SubstringsShareShots) {
  auto state = ProductState::uniform(2, PauliLetter::Z);
  auto ds = single_setting_dataset(state, ps("XX"), 400, 6, idle_model(2));
  auto e1 = estimate(ds, ps("XI"), 0, 2);
  auto e2 = estimate(ds, ps("IX"), 0, 2);
  auto e12 = estimate(ds, ps("XX"), 0, 2);
  EXPECT_EQ(e1.n_shots, 400);
  EXPECT_EQ(e2.n_shots, 400);
  EXPECT_EQ(e12.n_shots, 400);
  // Same words: the pair parity is the product of the single-site signs shot by shot.
  double direct = 0;
  for (auto w : ds.records[0]) direct += ((w & 1) ? -1.0 : 1.0) * ((w & 2) ? -1.0 : 1.0);
  EXPECT_DOUBLE_EQ(e12.mean, direct / 400.0);
}

TEST(Estimate, ExamplesAndMissingData) {
  auto state = ProductState::uniform(3, PauliLetter::Z);
  auto ds = single_setting_dataset(state, ps("ZZZ"), 20, 7, idle_model(3));
  EXPECT_DOUBLE_EQ(estimate(ds, ps("ZII"), 0, 2).mean, 1.0);
  try {
    estimate(ds, ps("XYI"), 0, 2);
    FAIL() << "expected MissingDataError";
  } catch (const MissingDataError& e) {
    EXPECT_EQ(e.uncovered(), std::vector<std::string>{"XYI"});
  }
}

TEST(Estimate, PoolsCompatibleSettings) {
  auto state = ProductState::haar_random(2, 8);
  QuenchDataset ds;
  ds.n_sites = 2;
  ds.grid = TimeGrid(1.0, 2);
  ds.states = {state};
  ds.settings = {{0, ps("XX"), 1, 300}, {0, ps("XY"), 1, 500}, {0, ps("ZZ"), 1, 100}};
  for (std::size_t i = 0; i < ds.settings.size(); ++i) {
    ds.records.push_back(sample_setting(idle_model(2), state, ds.settings[i], ds.grid, 10 + i));
  }
  double sum = 0;
  for (int i = 0; i < 2; ++i) {
    for (auto w : ds.records[static_cast<std::size_t>(i)]) sum += (w & 1) ? -1.0 : 1.0;
  }
  auto e = estimate(ds, ps("XI"), 0, 1);
  EXPECT_EQ(e.n_shots, 800);
  EXPECT_DOUBLE_EQ(e.mean, sum / 800.0);
  DatasetSource source(ds);
  EXPECT_DOUBLE_EQ(source.estimate(ps("XI"), 0, 1).mean, e.mean);
  EXPECT_DOUBLE_EQ(source.value(ps("IY"), 0, 1), estimate(ds, ps("IY"), 0, 1).mean);
}

TEST(Estimate, ExactInitialUsesPreparedState) {
  auto state = ProductState::haar_random(3, 12);
  QuenchDataset ds;
  ds.n_sites = 3;
  ds.grid = TimeGrid(1.0, 2);
  ds.states = {state};
  auto e = estimate(ds, ps("XYZ"), 0, 0);
  EXPECT_EQ(e.n_shots, 0);
  EXPECT_DOUBLE_EQ(e.mean, state.expectation(ps("XYZ")));
}

std::vector<PauliString> nearest_neighbour_ops(int n) {
  const std::string letters = "XYZ";
  std::vector<PauliString> ops;
  for (int k = 0; k + 1 < n; ++k) {
    for (char a : letters) {
      for (char b : letters) {
        std::string s(static_cast<std::size_t>(n), 'I');
        s[static_cast<std::size_t>(k)] = a;
        s[static_cast<std::size_t>(k) + 1] = b;
        ops.push_back(ps(s.c_str()));
      }
    }
  }
  for (int k = 0; k < n; ++k) {
    for (char a : letters) {
      std::string s(static_cast<std::size_t>(n), 'I');
      s[static_cast<std::size_t>(k)] = a;
      ops.push_back(ps(s.c_str()));
    }
  }
  return ops;
}

TEST(GroupBases, AllNearestNeighbourPairsNeedNineBases) {
  for (int n : {4, 5, 6}) {
    auto ops = nearest_neighbour_ops(n);
    auto bases = group_bases(ops);
    EXPECT_EQ(bases.size(), 9U);
    std::set<std::string> words;
    for (const auto& b : bases) words.insert(b.to_string());
    EXPECT_TRUE(words.count(std::string(static_cast<std::size_t>(n), 'X')));
    EXPECT_TRUE(words.count(std::string(static_cast<std::size_t>(n), 'Y')));
    EXPECT_TRUE(words.count(std::string(static_cast<std::size_t>(n), 'Z')));
    for (const auto& op : ops) {
      EXPECT_TRUE(std::any_of(bases.begin(), bases.end(),
                              [&](const PauliString& b) { return compatible(op, b); }));
    }
  }
}

TEST(GroupBases, FieldsAndZzNeedTwo) {
  std::vector<PauliString> ops{ps("ZZIII"), ps("IZZII"), ps("IIZZI"), ps("IIIZZ")};
  for (int k = 0; k < 5; ++k) {
    ops.push_back(PauliString::single(5, k, PauliLetter::X));
    ops.push_back(PauliString::single(5, k, PauliLetter::Z));
  }
  auto bases = group_bases(ops);
  ASSERT_EQ(bases.size(), 2U);
  EXPECT_EQ(bases[0].to_string(), "ZZZZZ");
  EXPECT_EQ(bases[1].to_string(), "XXXXX");
  EXPECT_EQ(group_bases({ps("ZZ")}).size(), 1U);
}

TEST(RandomBases, ReproducibleAndUniform) {
  EXPECT_EQ(random_bases(1, 8, 42), random_bases(1, 8, 42));
  auto bases = random_bases(2000, 10, 43);
  ASSERT_EQ(bases.size(), 2000U);
  double counts[3] = {0, 0, 0};
  for (const auto& b : bases) {
    EXPECT_EQ(b.weight(), 10);
    for (int k = 0; k < 10; ++k) counts[static_cast<int>(b.letter(k)) - 1] += 1;
  }
  for (double c : counts) EXPECT_NEAR(c / 20000.0, 1.0 / 3.0, 0.02);
  for (const auto& b : bases) {
    auto ops = contained_operators(b, 2);
    EXPECT_EQ(ops.size(), 10U + 45U);
    for (const auto& op : ops) EXPECT_TRUE(compatible(op, b));
  }
}

TEST(Simulation, DeterministicAndNested) {
  auto model = driven_model();
  QuenchProtocol protocol;
  protocol.grid = TimeGrid(1.0, 4);
  protocol.quench_ends = {2, 4};
  protocol.states = haar_states(2, 3, 1);
  protocol.bases = {ps("XXX"), ps("ZYZ")};
  protocol.trace_weight = 0.25;
  auto a = simulate_dataset(model, protocol, 2000, 99);
  auto b = simulate_dataset(model, protocol, 2000, 99, 2);
  EXPECT_EQ(a.records, b.records);
  auto big = simulate_dataset(model, protocol, 8000, 99);
  for (std::size_t i = 0; i < a.settings.size(); ++i) {
    ASSERT_LE(a.records[i].size(), big.records[i].size());
    EXPECT_TRUE(std::equal(a.records[i].begin(), a.records[i].end(), big.records[i].begin()));
  }
  std::vector<int> counts;
  for (const auto& s : a.settings) counts.push_back(s.shots);
  EXPECT_EQ(big.prefix(counts).records, a.records);
  // End times carry full weight, intermediate ones a quarter.
  EXPECT_EQ(a.settings[1].time_index, 1);
  EXPECT_EQ(a.settings[1].shots * 4, a.settings[2].shots);
}

TEST(Simulation, UnbiasedAtManyShots) {
  auto model = driven_model();
  QuenchProtocol protocol;
  protocol.grid = TimeGrid(0.8, 2);
  protocol.states = haar_states(1, 3, 2);
  protocol.bases = {ps("XYZ"), ps("ZZX")};
  auto ds = simulate_dataset(model, protocol, 4000000, 5);
  auto states = evolve(model, protocol.states[0].density(), protocol.grid);
  for (const char* op : {"XII", "IYI", "XYI", "XYZ", "ZZI", "IZX", "ZIX"}) {
    const double exact = expectation(ps(op), states[2]);
    auto e = estimate(ds, ps(op), 0, 2);
    EXPECT_GE(e.n_shots, 1000000);
    EXPECT_LE(std::abs(e.mean - exact), 5e-3) << op;
  }
}

TEST(Simulation, SharedShotsGiveCorrelatedEstimates) {
  auto state = ProductState::haar_random(2, 77);
  auto model = idle_model(2);
  const int shots = 200, reps = 600;
  std::vector<double> m1, m12;
  for (int r = 0; r < reps; ++r) {
    auto ds = single_setting_dataset(state, ps("XX"), shots, 1000 + r, model);
    m1.push_back(estimate(ds, ps("XI"), 0, 2).mean);
    m12.push_back(estimate(ds, ps("XX"), 0, 2).mean);
  }
  double a = 0, b = 0, cov = 0;
  for (int r = 0; r < reps; ++r) {
    a += m1[static_cast<std::size_t>(r)];
    b += m12[static_cast<std::size_t>(r)];
  }
  a /= reps;
  b /= reps;
  for (int r = 0; r < reps; ++r) {
    cov += (m1[static_cast<std::size_t>(r)] - a) * (m12[static_cast<std::size_t>(r)] - b);
  }
  cov /= reps - 1;
  // Per-shot covariance of s1 and s1*s2 is <X2> - <X1><X1 X2>.
  const double x1 = state.expectation(ps("XI")), x2 = state.expectation(ps("IX"));
  const double expected = (x2 - x1 * x1 * x2) / shots;
  EXPECT_GT(std::abs(expected), 1e-4);
  EXPECT_NEAR(cov, expected, 0.25 * std::abs(expected));
}

TEST(Dataset, JsonRoundTrip) {
  QuenchProtocol protocol;
  protocol.grid = TimeGrid(0.5, 2);
  protocol.states = haar_states(2, 3, 3);
  protocol.bases = {ps("XYZ")};
  auto ds = simulate_dataset(driven_model(), protocol, 300, 17);
  auto back = dataset_from_json(nlohmann::json::parse(dataset_to_json(ds).dump()));
  EXPECT_EQ(back.records, ds.records);
  EXPECT_EQ(back.states[1].bloch(), ds.states[1].bloch());
  EXPECT_EQ(back.grid, ds.grid);
  EXPECT_EQ(back.total_runs(), ds.total_runs());
  auto doc = dataset_to_json(ds);
  doc["settings"][0]["shots"] = 999;
  EXPECT_THROW(dataset_from_json(doc), std::invalid_argument);
  auto csv = estimates_csv(ds, {ps("XII")});
  EXPECT_NE(csv.find("op,state,time_index,time,mean,n_shots"), std::string::npos);
  EXPECT_NE(csv.find("XII,1,2,"), std::string::npos);
}

TEST(Sources, DatasetRequireReportsUncovered) {
  QuenchProtocol protocol;
  protocol.grid = TimeGrid(0.5, 2);
  protocol.states = haar_states(1, 3, 3);
  protocol.bases = {ps("XXX"), ps("ZZZ")};
  auto ds = simulate_dataset(driven_model(), protocol, 300, 17);
  DatasetSource source(ds);
  EXPECT_NO_THROW(source.require({ps("XXI"), ps("ZIZ")}));
  try {
    source.require({ps("XXI"), ps("XZI"), ps("YII")});
    FAIL() << "expected MissingDataError";
  } catch (const MissingDataError& e) {
    EXPECT_EQ(e.uncovered(), (std::vector<std::string>{"XZI", "YII"}));
  }
}

TEST(Sources, OracleMatchesDenseEvolution) {
  auto model = driven_model();
  auto states = haar_states(2, 3, 21);
  TimeGrid grid(1.0, 8);
  OracleSource oracle(model, states, grid, 0, 2);
  oracle.require({ps("XYZ"), ps("ZII")});
  auto evolved = evolve(model, states[1].density(), grid);
  for (int m = 0; m <= 8; ++m) {
    EXPECT_NEAR(oracle.value(ps("XYZ"), 1, m), expectation(ps("XYZ"), evolved[static_cast<std::size_t>(m)]), 1e-12);
    EXPECT_NEAR(oracle.value(ps("IYX"), 1, m), expectation(ps("IYX"), evolved[static_cast<std::size_t>(m)]), 1e-12);
  }
  Operator op(ps("ZII"), 2.0);
  op.add_term(ps("III"), 0.5);
  std::vector<double> samples;
  for (int m = 0; m <= 8; ++m) samples.push_back(2.0 * expectation(ps("ZII"), evolved[static_cast<std::size_t>(m)]) + 0.5);
  EXPECT_NEAR(oracle.integral(op, 1, 8), simpson(samples, grid.dt()), 1e-12);
}

TEST(Sources, OracleFactorizesOverBlocks) {
  Operator h(ps("XXII"), 1.0);
  h.add_term(ps("IIYY"), 0.8);
  h.add_term(ps("IIZI"), 0.3);
  LindbladModel model(h, {});
  auto states = haar_states(1, 4, 4);
  TimeGrid grid(1.0, 4);
  OracleSource oracle(model, states, grid);
  auto evolved = evolve(model, states[0].density(), grid, 50);
  for (int m = 0; m <= 4; ++m) {
    EXPECT_NEAR(oracle.value(ps("ZYXZ"), 0, m), expectation(ps("ZYXZ"), evolved[static_cast<std::size_t>(m)]), 1e-7);
  }
}

}  // namespace
}  // namespace hlearn
