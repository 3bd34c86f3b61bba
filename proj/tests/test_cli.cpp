#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "hlearn/cli.hpp"
#include "hlearn/config.hpp"
#include "hlearn/error.hpp"

namespace hlearn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json small_config() {
  return json::parse(R"({
    "schema": 1,
    "name": "small",
    "seed": 3,
    "workers": 1,
    "model": {"type": "ising", "n_sites": 3},
    "protocol": {"total_time": 1.0, "n_steps": 8, "quench_ends": [4, 8], "n_states": 8,
                 "state_seed": 2, "bases": {"kind": "all"}, "budget": 60000},
    "learning": {"method": "energy", "ansatz": "A5", "dissipators": "D_loc", "probes": "sites",
                 "xi": 1000.0, "d_max": [0.2], "direct_budget": 100},
    "curve": {"budgets": [20000, 60000], "resamples": 3,
              "targets": [{"ansatz": "A2", "dissipators": "none", "probes": null, "xi": 0.0},
                          {"method": "ehrenfest", "probes": null, "xi": 0.0, "label": "ehr"}]},
    "bootstrap": {"resamples": 4},
    "sweep_beta": {"betas": [0.0, 1.0, 100.0]}
  })");
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hlearn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const json& doc, const std::string& name = "config.json") {
    const fs::path p = dir_ / name;
    std::ofstream(p) << doc.dump();
    return p.string();
  }

  int run(std::vector<std::string> args) {
    std::vector<const char*> argv{"hlearn"};
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(Cli, SimulateWritesDataset) {
  const std::string cfg = write_config(small_config());
  const std::string out = (dir_ / "sim").string();
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out", out}), kExitOk) << err_.str();
  const json ds = json::parse(slurp(fs::path(out) / "dataset.json"));
  EXPECT_EQ(ds.at("schema"), 1);
  EXPECT_EQ(ds.at("config_hash").get<std::string>().size(), 16u);
  EXPECT_EQ(slurp(fs::path(out) / "estimates.csv").rfind("# config_hash=", 0), 0u);
}

TEST_F(Cli, MalformedConfigNamesField) {
  json doc = small_config();
  doc["protocol"]["n_steps"] = "many";
  EXPECT_EQ(run({"learn", "--config", write_config(doc), "--out", dir_.string()}), kExitInvalidConfig);
  EXPECT_NE(err_.str().find("protocol.n_steps"), std::string::npos) << err_.str();

  doc = small_config();
  doc["learning"]["ansazt"] = "A5";
  EXPECT_EQ(run({"learn", "--config", write_config(doc), "--out", dir_.string()}), kExitInvalidConfig);
  EXPECT_NE(err_.str().find("learning.ansazt"), std::string::npos) << err_.str();

  doc = small_config();
  doc["curve"]["targets"][1]["ansatz"] = "A7";
  EXPECT_EQ(run({"curve", "--config", write_config(doc), "--out", dir_.string()}), kExitInvalidConfig);
  EXPECT_NE(err_.str().find("curve.targets[1].ansatz"), std::string::npos) << err_.str();

  doc = small_config();
  doc["protocol"]["quench_ends"] = {3};
  EXPECT_EQ(run({"learn", "--config", write_config(doc), "--out", dir_.string()}), kExitInvalidConfig);
  EXPECT_NE(err_.str().find("protocol.quench_ends"), std::string::npos) << err_.str();

  std::ofstream(dir_ / "broken.json") << "{\"schema\": 1,";
  EXPECT_EQ(run({"learn", "--config", (dir_ / "broken.json").string()}), kExitInvalidConfig);
  EXPECT_EQ(run({"learn"}), kExitInvalidConfig);
  EXPECT_EQ(run({"frobnicate", "--config", "x"}), kExitInvalidConfig);
}

TEST_F(Cli, BasesMustCoverConstraints) {
  json doc = small_config();
  doc["protocol"]["bases"] = {{"kind", "list"}, {"list", {"ZZZ"}}};
  EXPECT_EQ(run({"learn", "--config", write_config(doc), "--out", dir_.string()}), kExitInvalidConfig);
  EXPECT_NE(err_.str().find("XII"), std::string::npos) << err_.str();
}

TEST_F(Cli, LearnWritesResult) {
  const std::string cfg = write_config(small_config());
  ASSERT_EQ(run({"learn", "--config", cfg, "--out", dir_.string(), "--oracle"}), kExitOk) << err_.str();
  const json r = json::parse(slurp(dir_ / "result.json"));
  for (const char* key : {"c_rec", "d_rec", "ratio", "spectrum", "config_hash", "diagnostics"}) {
    EXPECT_TRUE(r.contains(key)) << key;
  }
  EXPECT_EQ(r.at("d_rec").size(), 3u);
  // Eight Simpson steps limit the angle to about 1e-3.
  EXPECT_LT(r.at("diagnostics").at("sin_theta").get<double>(), 1e-2);
}

TEST_F(Cli, SimulateThenLearnMatchesInMemory) {
  const std::string cfg = write_config(small_config());
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out", a.string()}), kExitOk) << err_.str();
  ASSERT_EQ(run({"learn", "--config", cfg, "--out", a.string(), "--dataset", (a / "dataset.json").string()}), kExitOk)
      << err_.str();
  ASSERT_EQ(run({"learn", "--config", cfg, "--out", b.string()}), kExitOk) << err_.str();
  EXPECT_EQ(slurp(a / "result.json"), slurp(b / "result.json"));
}

TEST_F(Cli, RerunReproducesFilesAndSeedChangesHash) {
  const std::string cfg = write_config(small_config());
  const fs::path a = dir_ / "a", b = dir_ / "b", c = dir_ / "c";
  ASSERT_EQ(run({"learn", "--config", cfg, "--out", a.string()}), kExitOk);
  ASSERT_EQ(run({"learn", "--config", cfg, "--out", b.string(), "--workers", "2"}), kExitOk);
  ASSERT_EQ(run({"learn", "--config", cfg, "--out", c.string(), "--seed", "99"}), kExitOk);
  EXPECT_EQ(slurp(a / "result.json"), slurp(b / "result.json"));
  const json ra = json::parse(slurp(a / "result.json")), rc = json::parse(slurp(c / "result.json"));
  EXPECT_NE(ra.at("config_hash"), rc.at("config_hash"));
  EXPECT_NE(ra.at("ratio"), rc.at("ratio"));
}

TEST_F(Cli, CurveEmitsOneCsvPerTarget) {
  const std::string cfg = write_config(small_config());
  ASSERT_EQ(run({"curve", "--config", cfg, "--out", dir_.string()}), kExitOk) << err_.str();
  for (const char* name : {"curve_A2.csv", "curve_ehr.csv"}) {
    const std::string csv = slurp(dir_ / name);
    EXPECT_NE(csv.find("# config_hash="), std::string::npos);
    EXPECT_NE(csv.find("# asymptote="), std::string::npos);
    EXPECT_NE(csv.find("n_runs,ratio,ratio_err,sin_theta,delta_add\n"), std::string::npos);
    std::istringstream lines(csv);
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) rows += (!line.empty() && line[0] != '#' && line[0] != 'n');
    EXPECT_EQ(rows, 2) << name;
  }
}

TEST_F(Cli, BootstrapAndSweepTables) {
  json doc = small_config();
  doc["learning"]["parametrization"] = "homogeneous";
  const std::string cfg = write_config(doc);
  ASSERT_EQ(run({"bootstrap", "--config", cfg, "--out", dir_.string()}), kExitOk) << err_.str();
  const std::string boot = slurp(dir_ / "bootstrap.csv");
  EXPECT_NE(boot.find("quantity,estimate,stddev,lower,upper\nratio,"), std::string::npos);
  EXPECT_NE(boot.find("d:minus,"), std::string::npos);
  ASSERT_EQ(run({"sweep-beta", "--config", cfg, "--out", dir_.string(), "--oracle"}), kExitOk) << err_.str();
  const std::string sweep = slurp(dir_ / "sweep_beta.csv");
  EXPECT_NE(sweep.find("beta,index,value,image_weight,cost\n"), std::string::npos);
  EXPECT_NE(sweep.find("\n100,"), std::string::npos);

  doc["learning"]["parametrization"] = "none";
  EXPECT_EQ(run({"sweep-beta", "--config", write_config(doc), "--out", dir_.string()}), kExitInvalidConfig);
  EXPECT_NE(err_.str().find("learning.parametrization"), std::string::npos);
}

TEST_F(Cli, ThinSettingsCannotBeBootstrapped) {
  json doc = small_config();
  doc["protocol"]["budget"] = 100;
  EXPECT_EQ(run({"bootstrap", "--config", write_config(doc), "--out", dir_.string()}), kExitInvalidConfig);
  EXPECT_NE(err_.str().find("fewer than two shots"), std::string::npos) << err_.str();
}

TEST_F(Cli, NonConvergenceStillWritesFlaggedResult) {
  json doc = small_config();
  doc["learning"]["direct_budget"] = 5;
  doc["learning"]["convergence_tolerance"] = 1e-12;
  doc["learning"]["polish"] = false;
  ASSERT_EQ(run({"learn", "--config", write_config(doc), "--out", dir_.string(), "--oracle"}), kExitNotConverged)
      << err_.str();
  const json r = json::parse(slurp(dir_ / "result.json"));
  EXPECT_FALSE(r.at("converged").get<bool>());
}

TEST(Config, BundledConfigsParse) {
  for (const char* name : {"ising_ansatz_ladder.json", "xy_collective_ehrenfest.json", "subsystem_scaling.json", "xy_energy_penalty.json",
                           "xy_collective_probes.json"}) {
    const RunConfig cfg = load_config(std::string(HLEARN_SOURCE_DIR) + "/configs/" + name);
    EXPECT_FALSE(cfg.name.empty()) << name;
    EXPECT_EQ(config_hash(cfg).size(), 16u);
  }
}

TEST(Config, HashIgnoresWorkersOnly) {
  json doc = small_config();
  const std::string h = config_hash(parse_config(doc));
  doc["workers"] = 4;
  EXPECT_EQ(config_hash(parse_config(doc)), h);
  doc["seed"] = 4;
  EXPECT_NE(config_hash(parse_config(doc)), h);
}

TEST(Config, CurveTargetsInheritLearning) {
  const RunConfig cfg = parse_config(small_config());
  ASSERT_TRUE(cfg.curve.has_value());
  const auto& t = cfg.curve->targets;
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].label, "A2");
  EXPECT_TRUE(t[0].probes.empty());
  EXPECT_EQ(t[1].label, "ehr");
  EXPECT_EQ(t[1].ansatz, "A5");
  EXPECT_EQ(t[1].dissipators, "D_loc");
  EXPECT_EQ(t[1].ends, (std::vector<int>{4, 8}));
}

TEST(Config, LogSpacedSchedules) {
  json doc = small_config();
  doc["curve"]["budgets"] = {{"min", 100}, {"max", 10000}, {"per_decade", 2}};
  doc["sweep_beta"]["betas"] = {{"min", 0.01}, {"max", 100.0}};
  const RunConfig cfg = parse_config(doc);
  EXPECT_EQ(cfg.curve->budgets, (std::vector<std::int64_t>{100, 316, 1000, 3162, 10000}));
  ASSERT_EQ(cfg.betas.size(), 17u);
  EXPECT_DOUBLE_EQ(cfg.betas.front(), 0.01);
  EXPECT_DOUBLE_EQ(cfg.betas.back(), 100.0);
  doc["curve"]["budgets"] = {100, 100};
  EXPECT_THROW(parse_config(doc), ConfigError);
}

}  // namespace
}  // namespace hlearn
