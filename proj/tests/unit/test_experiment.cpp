#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dbo/experiment.hpp"

using namespace dbo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("dbo_experiment_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_quad() {
  return json::parse(R"({
    "name": "small", "seed": 3, "replicates": 2, "output": "out",
    "measures": ["strongly_convex", "nonconvex"],
    "problem": {"family": "quad", "d1": 2, "d2": 2, "reg": 0.5},
    "graph": {"type": "cycle", "n": 4},
    "run": {"alpha": 0.05, "beta": 0.2, "U": 2, "M": 5, "K": 10}
  })");
}

}  // namespace

TEST(Config, DefaultsFillEveryKey) {
  const ExperimentConfig cfg = parse_config(json::object());
  EXPECT_EQ(cfg.name, "experiment");
  EXPECT_EQ(cfg.replicates, 1);
  EXPECT_EQ(cfg.run.K, 100);
  EXPECT_DOUBLE_EQ(cfg.run.beta, 0.1);
  EXPECT_EQ(cfg.raw.at("graph").at("type"), "random");
  EXPECT_TRUE(cfg.raw.at("graph").at("seed").is_null());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(json{{"run", {{"alpah", 0.1}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"run", 3}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"measures", {"sideways"}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"run", {{"exec", "gpu"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"run", {{"alpha", "fast"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"replicates", 0}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"problem", {{"family", "cubic"}}}}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, OverridesWinAndParseJson) {
  json doc = small_quad();
  apply_overrides(doc, {"run.beta=0.3", "name=renamed", "graph.n=6", "measures=[\"convex\"]"});
  const ExperimentConfig cfg = parse_config(doc);
  EXPECT_DOUBLE_EQ(cfg.run.beta, 0.3);
  EXPECT_EQ(cfg.name, "renamed");
  EXPECT_EQ(cfg.raw.at("graph").at("n"), 6);
  ASSERT_EQ(cfg.measures.size(), 1u);
  EXPECT_EQ(cfg.measures[0], Measure::convex);
}

TEST(Config, EpochsScaleIterations) {
  json doc = small_quad();
  doc["run"]["epochs"] = 4;
  doc["run"]["iterations_per_epoch"] = 3;
  EXPECT_EQ(parse_config(doc).run.K, 12);
}

TEST(Config, RelativePathsResolveAgainstConfigFile) {
  const fs::path dir = scratch("relative");
  std::ofstream(dir / "ring.edges") << "3\n0 1\n1 2\n0 2\n";
  json doc = small_quad();
  doc["graph"]["edge_list"] = "ring.edges";
  std::ofstream(dir / "cfg.json") << doc.dump();
  const ExperimentConfig cfg = load_config((dir / "cfg.json").string());
  EXPECT_EQ(fs::path(cfg.raw.at("graph").at("edge_list").get<std::string>()), (dir / "ring.edges").lexically_normal());
  EXPECT_EQ(build_instance(cfg, 0).graph.size(), 3);

  doc["graph"]["edge_list"] = "missing.edges";
  std::ofstream(dir / "bad.json") << doc.dump();
  EXPECT_THROW(load_config((dir / "bad.json").string()), ConfigError);
}

TEST(Instance, DisconnectedEdgeListIsAConfigError) {
  const ExperimentConfig cfg = load_config(DBO_SOURCE_DIR "/tests/data/disconnected.json");
  EXPECT_THROW(build_instance(cfg, 0), ConfigError);
  std::ostringstream log;
  EXPECT_EQ(cmd_validate(cfg, log), exit_code::failure);
  EXPECT_NE(log.str().find("FAIL connected"), std::string::npos);
}

TEST(Instance, ReplicatesDrawIndependentSeeds) {
  const ExperimentConfig cfg = parse_config(small_quad());
  const Instance a = build_instance(cfg, 0), b = build_instance(cfg, 1), a2 = build_instance(cfg, 0);
  EXPECT_NE(a.data_seed, b.data_seed);
  EXPECT_NE(a.run_seed, b.run_seed);
  EXPECT_EQ(a.data_seed, a2.data_seed);
  EXPECT_EQ(a.problem.quadratic()->x_star(), a2.problem.quadratic()->x_star());
}

TEST(Seeds, DeriveSeedAndHash) {
  EXPECT_EQ(derive_seed(1, 0, 0), derive_seed(1, 0, 0));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
  EXPECT_EQ(fnv1a(""), 14695981039346656037ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

TEST(OutputRoot, FlagThenEnvironmentThenCwd) {
  ::unsetenv("DBO_OUTPUT_ROOT");
  EXPECT_EQ(output_root(std::nullopt), ".");
  ::setenv("DBO_OUTPUT_ROOT", "/tmp/from_env", 1);
  EXPECT_EQ(output_root(std::nullopt), "/tmp/from_env");
  EXPECT_EQ(output_root(std::string("/tmp/flag")), "/tmp/flag");
  ::unsetenv("DBO_OUTPUT_ROOT");
}

TEST(Run, WritesArtifactsAndIsDeterministic) {
  const ExperimentConfig cfg = parse_config(small_quad());
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  std::ostringstream log;
  ASSERT_EQ(cmd_run(cfg, a.string(), log), exit_code::ok) << log.str();
  ASSERT_EQ(cmd_run(cfg, b.string(), log), exit_code::ok) << log.str();
  for (const char* rep : {"rep_000", "rep_001"}) {
    const fs::path ma = a / "out" / rep / "metrics.csv";
    ASSERT_TRUE(fs::exists(ma));
    EXPECT_TRUE(fs::exists(a / "out" / rep / "trajectory.jsonl"));
    EXPECT_EQ(slurp(ma), slurp(b / "out" / rep / "metrics.csv"));
  }
  EXPECT_EQ(slurp(a / "out" / "manifest.json"), slurp(b / "out" / "manifest.json"));
  EXPECT_TRUE(fs::exists(a / "registry.csv"));

  const json manifest = json::parse(slurp(a / "out" / "manifest.json"));
  EXPECT_EQ(manifest.at("replicates").size(), 2u);
  EXPECT_EQ(manifest.at("config").at("run").at("K"), 10);

  std::istringstream rows(slurp(a / "out" / "rep_000" / "metrics.csv"));
  std::string line;
  int count = 0;
  while (std::getline(rows, line)) ++count;
  EXPECT_EQ(count, 1 + 11);
}

TEST(Run, SingleAgent) {
  json doc = small_quad();
  doc["graph"] = {{"type", "complete"}, {"n", 1}};
  doc["replicates"] = 1;
  const fs::path root = scratch("single");
  std::ostringstream log;
  ASSERT_EQ(cmd_run(parse_config(doc), root.string(), log), exit_code::ok) << log.str();
  const json manifest = json::parse(slurp(root / "out" / "manifest.json"));
  EXPECT_EQ(manifest.at("replicates")[0].at("msgs_d1"), 0);
  EXPECT_EQ(manifest.at("replicates")[0].at("edges"), 0);
}

TEST(Run, DivergenceMapsToExitCode) {
  json doc = small_quad();
  doc["run"]["alpha"] = 50.0;
  doc["run"]["K"] = 200;
  doc["run"]["divergence_limit"] = 1e3;
  doc["run"]["init_scale"] = 1.0;
  std::ostringstream log;
  EXPECT_EQ(cmd_run(parse_config(doc), scratch("diverge").string(), log), exit_code::divergence);
  EXPECT_NE(log.str().find("diverged"), std::string::npos);
}

TEST(Run, HyperparameterRunReportsTrainingAndTestMetrics) {
  const json doc = json::parse(R"({
    "name": "ho", "seed": 1, "output": "ho",
    "problem": {"family": "ho", "loss": "linear", "ridge": 0.1,
                "data": {"dim": 2, "noise": 0.1, "samples_per_agent": 20, "test_samples": 50}},
    "graph": {"type": "path", "n": 3},
    "run": {"alpha": 0.05, "beta": 0.005, "U": 2, "M": 5, "K": 5}
  })");
  const fs::path root = scratch("ho");
  std::ostringstream log;
  ASSERT_EQ(cmd_run(parse_config(doc), root.string(), log), exit_code::ok) << log.str();
  EXPECT_NE(log.str().find("test_mse="), std::string::npos);
  const HoDataset saved = read_dataset_csv_file((root / "ho" / "rep_000" / "dataset.csv").string());
  const Instance inst = build_instance(parse_config(doc), 0);
  ASSERT_EQ(saved.agents.size(), 3u);
  EXPECT_EQ(saved.agents[1].train.features, inst.data->agents[1].train.features);
  EXPECT_EQ(saved.test.labels, inst.data->test.labels);
}

TEST(Sweep, WritesPerValueDirectoriesAndPenaltyGap) {
  json doc = small_quad();
  doc["replicates"] = 1;
  doc["sweep"] = {{"param", "beta"}, {"values", {0.05, 0.2}}};
  const fs::path root = scratch("sweep");
  std::ostringstream log;
  ASSERT_EQ(cmd_sweep(parse_config(doc), root.string(), log), exit_code::ok) << log.str();
  EXPECT_TRUE(fs::exists(root / "out" / "sweep_summary.csv"));
  EXPECT_TRUE(fs::exists(root / "out" / "beta_0.05" / "rep_000" / "penalty_gap.csv"));
  EXPECT_TRUE(fs::exists(root / "out" / "beta_0.2" / "rep_000" / "metrics.csv"));
  EXPECT_NE(log.str().find("log-log slope"), std::string::npos);

  doc["sweep"]["values"] = json::array();
  EXPECT_THROW(cmd_sweep(parse_config(doc), root.string(), log), ConfigError);
  doc["sweep"] = {{"param", "reg"}, {"values", {1.0}}};
  EXPECT_THROW(cmd_sweep(parse_config(doc), root.string(), log), ConfigError);
}

TEST(Validate, PassesAndWarnsAboveStepCap) {
  std::ostringstream ok;
  EXPECT_EQ(cmd_validate(parse_config(small_quad()), ok), exit_code::ok) << ok.str();
  EXPECT_NE(ok.str().find("validation passed"), std::string::npos);
  EXPECT_EQ(ok.str().find("warning: beta="), std::string::npos);

  json doc = small_quad();
  doc["run"]["beta"] = 50.0;
  std::ostringstream warn;
  EXPECT_EQ(cmd_validate(parse_config(doc), warn), exit_code::ok);
  EXPECT_NE(warn.str().find("warning: beta="), std::string::npos);
}

TEST(Complexity, PrintsTableAndCounter) {
  std::ostringstream log;
  EXPECT_EQ(cmd_complexity({10, 100, 100, 1e-2, 0.5}, 10, 2, 5, log), exit_code::ok);
  EXPECT_NE(log.str().find("DAGM"), std::string::npos);
  EXPECT_NE(log.str().find("= 8000"), std::string::npos);
}
