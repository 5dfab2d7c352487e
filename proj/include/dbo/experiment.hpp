#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbo/diagnostics.hpp"

namespace dbo {

/// Malformed or inconsistent configuration; maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int divergence = 3;
}  // namespace exit_code

/// Parsed experiment description. Defaults come first, then the file, then
/// `--set key.path=value` overrides, so later sources win.
struct ExperimentConfig {
  nlohmann::json raw;  // fully resolved document, defaults included

  std::string name;
  std::uint64_t seed = 0;
  int replicates = 1;
  std::string output;
  std::vector<Measure> measures;
  RunConfig run;
  int iterations_per_epoch = 1;
};

/// Built-in defaults for every key.
nlohmann::json default_config();

/// Applies "a.b.c=value" overrides; value is parsed as JSON when possible,
/// otherwise kept as a string.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

/// Resolves defaults, file contents and overrides. Relative data paths are
/// taken relative to the config file. Throws ConfigError.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(nlohmann::json doc, const std::string& base_dir = ".");

/// Everything one replicate needs.
struct Instance {
  Graph graph;
  MixingMatrix W;
  BilevelProblem problem;
  std::optional<HoDataset> data;
  std::optional<Vec> truth;
  std::uint64_t dataset_hash = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t graph_seed = 0;
  std::uint64_t run_seed = 0;
};

/// Disconnected graphs and invalid weights throw ConfigError.
Instance build_instance(const ExperimentConfig& cfg, int replicate);

std::uint64_t fnv1a(const std::string& bytes);
/// Deterministic per-replicate seed derivation.
std::uint64_t derive_seed(std::uint64_t base, int replicate, int stream);

/// Output root: the explicit flag, else $DBO_OUTPUT_ROOT, else ".".
std::string output_root(const std::optional<std::string>& flag);

/// Training cost (mean per-sample training loss averaged over agents) and
/// test MSE (linear loss only) for the inner blocks y.
std::optional<double> training_cost(const Instance& inst, const ExperimentConfig& cfg, const BlockVector& y);
std::optional<double> test_mse(const Instance& inst, const ExperimentConfig& cfg, const BlockVector& y);

struct ReplicateResult {
  Trajectory trajectory;
  std::vector<MetricsRecord> metrics;
  std::optional<double> f_star;
};

ReplicateResult run_replicate(const ExperimentConfig& cfg, const Instance& inst, const std::string& cache_dir);

int cmd_run(const ExperimentConfig& cfg, const std::string& root, std::ostream& log);
int cmd_validate(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& root, std::ostream& log);
int cmd_complexity(const ComplexityParams& params, std::optional<std::int64_t> K, std::optional<std::int64_t> U,
                   std::optional<std::int64_t> M, std::ostream& log);

}  // namespace dbo
