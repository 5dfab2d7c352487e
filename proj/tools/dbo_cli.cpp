#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dbo/experiment.hpp"

namespace {

struct ConfigFlags {
  std::string path;
  std::vector<std::string> overrides;
  std::optional<int> replicates;
  std::optional<int> K;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> exec;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("config", f.path, "JSON experiment config")->required();
  cmd->add_option("--set", f.overrides, "override a config key, e.g. --set run.beta=0.01 (repeatable)");
  cmd->add_option("--replicates", f.replicates, "number of replicates");
  cmd->add_option("-K,--outer-iterations", f.K, "outer iterations");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--output", f.output, "output directory below the output root");
  cmd->add_option("--exec", f.exec, "serial or parallel agent loops");
}

dbo::ExperimentConfig resolve(const ConfigFlags& f) {
  std::vector<std::string> ov = f.overrides;
  if (f.replicates) ov.push_back("replicates=" + std::to_string(*f.replicates));
  if (f.K) ov.push_back("run.K=" + std::to_string(*f.K));
  if (f.seed) ov.push_back("seed=" + std::to_string(*f.seed));
  if (f.output) ov.push_back("output=\"" + *f.output + "\"");
  if (f.exec) ov.push_back("run.exec=\"" + *f.exec + "\"");
  return dbo::load_config(f.path, ov);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized bilevel optimization experiments"};
  app.require_subcommand(1);
  std::optional<std::string> root_flag;
  app.add_option("--output-root", root_flag, "root directory for artifacts (default $DBO_OUTPUT_ROOT or .)");

  ConfigFlags run_flags, validate_flags, sweep_flags;
  auto* run = app.add_subcommand("run", "run every replicate and write trajectories, metrics and a manifest");
  add_config_flags(run, run_flags);
  auto* validate = app.add_subcommand("validate", "check mixing matrix, problem constants and step sizes");
  add_config_flags(validate, validate_flags);
  auto* sweep = app.add_subcommand("sweep", "repeat the run over sweep.values of sweep.param");
  add_config_flags(sweep, sweep_flags);

  dbo::ComplexityParams cp;
  std::optional<std::int64_t> K, U, M;
  auto* complexity = app.add_subcommand("complexity", "evaluate the communication-complexity formulas");
  complexity->add_option("--n", cp.n, "agents")->required();
  complexity->add_option("--d1", cp.d1, "outer dimension")->required();
  complexity->add_option("--d2", cp.d2, "inner dimension")->required();
  complexity->add_option("--eps", cp.eps, "target accuracy")->required();
  complexity->add_option("--sigma", cp.sigma, "mixing rate of the network")->required();
  complexity->add_option("--K", K, "outer iterations for the counter prediction");
  complexity->add_option("--U", U, "Neumann order for the counter prediction");
  complexity->add_option("--M", M, "inner iterations for the counter prediction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dbo::exit_code::config;
  }

  try {
    const std::string root = dbo::output_root(root_flag);
    if (run->parsed()) return dbo::cmd_run(resolve(run_flags), root, std::cout);
    if (validate->parsed()) return dbo::cmd_validate(resolve(validate_flags), std::cout);
    if (sweep->parsed()) return dbo::cmd_sweep(resolve(sweep_flags), root, std::cout);
    if (complexity->parsed()) {
      try {
        return dbo::cmd_complexity(cp, K, U, M, std::cout);
      } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return dbo::exit_code::config;
      }
    }
  } catch (const dbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return dbo::exit_code::config;
  } catch (const dbo::DivergenceError& e) {
    std::cerr << "diverged at outer iteration " << e.iteration() << ": " << e.what() << '\n';
    return dbo::exit_code::divergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return dbo::exit_code::failure;
  }
  return dbo::exit_code::failure;
}
