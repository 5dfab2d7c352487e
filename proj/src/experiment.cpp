#include "dbo/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "dbo/oracle.hpp"

#ifndef DBO_VERSION
#define DBO_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace dbo {

json default_config() {
  return json::parse(R"({
    "name": "experiment",
    "seed": 0,
    "replicates": 1,
    "output": "results",
    "measures": [],
    "weights": "metropolis",
    "problem": {
      "family": "quad",
      "d1": 3, "d2": 3, "reg": 0.1, "a_scale": 1.0,
      "loss": "linear", "ridge": 0.0,
      "data": {
        "source": "synthetic", "dim": 2, "noise": 0.25, "samples_per_agent": 100, "test_samples": 1000,
        "path": "", "label_column": "label"
      }
    },
    "graph": {"type": "random", "n": 10, "r": 0.5, "seed": null, "edge_list": ""},
    "run": {
      "alpha": 0.01, "beta": 0.1, "U": 2, "M": 10, "K": 100, "epochs": null, "iterations_per_epoch": 1,
      "schedule": "fixed", "multiplier": 1.0, "init_scale": 0.0, "exec": "serial", "divergence_limit": 1e8
    },
    "sweep": {"param": "beta", "values": []},
    "validate": {"constant_trials": 200}
  })");
}

namespace {

void check_keys(const json& doc, const json& defaults, const std::string& path) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const json& def = defaults.at(it.key());
    if (def.is_object()) {
      if (!it.value().is_object()) throw ConfigError("config key '" + key + "' must be an object");
      check_keys(it.value(), def, key);
    }
  }
}

template <class T>
T get(const json& doc, const std::string& dotted) {
  const json* node = &doc;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->contains(part)) throw ConfigError("missing config key '" + dotted + "'");
    node = &node->at(part);
  }
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + dotted + "' has the wrong type: " + node->dump());
  }
}

bool is_set(const json& doc, const std::string& a, const std::string& b) {
  return doc.contains(a) && doc.at(a).contains(b) && !doc.at(a).at(b).is_null();
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

Graph build_graph(const ExperimentConfig& cfg, int replicate, std::uint64_t& graph_seed) {
  const json& g = cfg.raw.at("graph");
  const std::string edge_list = get<std::string>(cfg.raw, "graph.edge_list");
  graph_seed = is_set(cfg.raw, "graph", "seed") ? get<std::uint64_t>(cfg.raw, "graph.seed")
                                                 : derive_seed(cfg.seed, replicate, 2);
  try {
    if (!edge_list.empty()) return read_edge_list_file(edge_list);
    const std::string type = g.at("type").get<std::string>();
    const int n = get<int>(cfg.raw, "graph.n");
    if (n < 1) throw ConfigError("graph.n must be positive");
    if (type == "random") return random_connected_graph(n, get<double>(cfg.raw, "graph.r"), graph_seed);
    if (type == "path") return path_graph(n);
    if (type == "cycle") return cycle_graph(n);
    if (type == "complete") return complete_graph(n);
    if (type == "star") return star_graph(n);
    throw ConfigError("unknown graph.type '" + type + "' (expected random, path, cycle, complete, star)");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
}

MixingMatrix build_weights(const ExperimentConfig& cfg, const Graph& g) {
  const std::string scheme = get<std::string>(cfg.raw, "weights");
  try {
    if (scheme == "metropolis") return metropolis_weights(g);
    if (scheme == "max_degree") return max_degree_weights(g);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("weights: ") + e.what());
  }
  throw ConfigError("unknown weights scheme '" + scheme + "' (expected metropolis, max_degree)");
}

bool is_ho(const ExperimentConfig& cfg) { return get<std::string>(cfg.raw, "problem.family") == "ho"; }

Loss config_loss(const ExperimentConfig& cfg) {
  try {
    return parse_loss(get<std::string>(cfg.raw, "problem.loss"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not of the form key=value");
    const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;
    }
    json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = value;
  }
}

ExperimentConfig parse_config(json doc, const std::string& base_dir) {
  const json defaults = default_config();
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(doc, defaults, "");
  json raw = defaults;
  raw.merge_patch(doc);
  // merge_patch drops explicit nulls; restore the optional slots
  if (!raw["graph"].contains("seed")) raw["graph"]["seed"] = nullptr;
  if (!raw["run"].contains("epochs")) raw["run"]["epochs"] = nullptr;

  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base_dir) / p).lexically_normal().string();
  };
  raw["graph"]["edge_list"] = resolve(raw["graph"]["edge_list"].get<std::string>());
  raw["problem"]["data"]["path"] = resolve(raw["problem"]["data"]["path"].get<std::string>());

  ExperimentConfig cfg;
  cfg.raw = raw;
  cfg.name = get<std::string>(raw, "name");
  cfg.seed = get<std::uint64_t>(raw, "seed");
  cfg.replicates = get<int>(raw, "replicates");
  if (cfg.replicates < 1) throw ConfigError("replicates must be at least 1");
  cfg.output = get<std::string>(raw, "output");
  for (const auto& m : get<std::vector<std::string>>(raw, "measures")) {
    try {
      cfg.measures.push_back(parse_measure(m));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  const std::string family = get<std::string>(raw, "problem.family");
  if (family != "quad" && family != "ho") throw ConfigError("problem.family must be 'quad' or 'ho'");
  if (family == "ho") {
    cfg.run.keep_states = true;
    const std::string source = get<std::string>(raw, "problem.data.source");
    if (source != "synthetic" && source != "csv") throw ConfigError("problem.data.source must be 'synthetic' or 'csv'");
    if (source == "csv" && !fs::exists(get<std::string>(raw, "problem.data.path"))) {
      throw ConfigError("dataset file '" + get<std::string>(raw, "problem.data.path") + "' does not exist");
    }
    config_loss(cfg);
  }
  const std::string edge_list = get<std::string>(raw, "graph.edge_list");
  if (!edge_list.empty() && !fs::exists(edge_list)) throw ConfigError("edge list '" + edge_list + "' does not exist");

  RunConfig& r = cfg.run;
  r.alpha = get<double>(raw, "run.alpha");
  r.beta = get<double>(raw, "run.beta");
  r.U = get<int>(raw, "run.U");
  r.M = get<int>(raw, "run.M");
  cfg.iterations_per_epoch = get<int>(raw, "run.iterations_per_epoch");
  if (cfg.iterations_per_epoch < 1) throw ConfigError("run.iterations_per_epoch must be at least 1");
  r.K = is_set(raw, "run", "epochs") ? get<int>(raw, "run.epochs") * cfg.iterations_per_epoch : get<int>(raw, "run.K");
  r.schedule_multiplier = get<double>(raw, "run.multiplier");
  r.init_scale = get<double>(raw, "run.init_scale");
  r.divergence_limit = get<double>(raw, "run.divergence_limit");
  try {
    r.schedule = parse_schedule(get<std::string>(raw, "run.schedule"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::string exec = get<std::string>(raw, "run.exec");
  if (exec == "serial") r.exec = Exec::serial;
  else if (exec == "parallel") r.exec = Exec::parallel;
  else throw ConfigError("run.exec must be 'serial' or 'parallel'");
  try {
    r.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("run: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config '" + path + "': " + e.what());
  }
  apply_overrides(doc, overrides);
  return parse_config(std::move(doc), fs::path(path).parent_path().string());
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, int replicate, int stream) {
  // splitmix64 finalizer over the combined inputs
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (std::uint64_t(replicate) * 8 + std::uint64_t(stream) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string output_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("DBO_OUTPUT_ROOT"); env && *env) return env;
  return ".";
}

Instance build_instance(const ExperimentConfig& cfg, int replicate) {
  std::uint64_t graph_seed = 0;
  Graph g = build_graph(cfg, replicate, graph_seed);
  if (!g.connected()) throw ConfigError("graph is disconnected; every agent must be reachable");
  MixingMatrix W = build_weights(cfg, g);
  const int n = g.size();
  const std::uint64_t data_seed = derive_seed(cfg.seed, replicate, 1);

  try {
    if (!is_ho(cfg)) {
      const int d1 = get<int>(cfg.raw, "problem.d1"), d2 = get<int>(cfg.raw, "problem.d2");
      const double reg = get<double>(cfg.raw, "problem.reg"), a_scale = get<double>(cfg.raw, "problem.a_scale");
      BilevelProblem p = random_quad_bilevel(n, d1, d2, reg, data_seed, a_scale);
      std::ostringstream key;
      key << std::setprecision(17) << "quad|" << n << '|' << d1 << '|' << d2 << '|' << reg << '|' << a_scale << '|'
          << data_seed;
      return Instance{std::move(g), std::move(W), std::move(p), std::nullopt, std::nullopt, fnv1a(key.str()),
                      data_seed, graph_seed, derive_seed(cfg.seed, replicate, 3)};
    }
    HoDataset data;
    std::optional<Vec> truth;
    if (get<std::string>(cfg.raw, "problem.data.source") == "synthetic") {
      auto syn = synthetic_regression_data(n, get<int>(cfg.raw, "problem.data.dim"),
                                           get<double>(cfg.raw, "problem.data.noise"),
                                           get<int>(cfg.raw, "problem.data.samples_per_agent"), data_seed,
                                           get<int>(cfg.raw, "problem.data.test_samples"));
      data = std::move(syn.data);
      truth = std::move(syn.truth);
    } else {
      data = read_dataset_csv_file(get<std::string>(cfg.raw, "problem.data.path"),
                                   get<std::string>(cfg.raw, "problem.data.label_column"));
      if (int(data.agents.size()) != n) {
        throw ConfigError("dataset has " + std::to_string(data.agents.size()) + " agents but the graph has " +
                          std::to_string(n));
      }
    }
    std::ostringstream bytes;
    write_dataset_csv(bytes, data);
    BilevelProblem p = ho_problem(config_loss(cfg), data, get<double>(cfg.raw, "problem.ridge"));
    return Instance{std::move(g), std::move(W), std::move(p), std::move(data), std::move(truth),
                    fnv1a(bytes.str()), data_seed, graph_seed, derive_seed(cfg.seed, replicate, 3)};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
}

std::optional<double> training_cost(const Instance& inst, const ExperimentConfig& cfg, const BlockVector& y) {
  if (!inst.data) return std::nullopt;
  const Loss loss = config_loss(cfg);
  double total = 0.0;
  for (int i = 0; i < y.blocks(); ++i) {
    const Samples& s = inst.data->agents[i].train;
    total += loss_value(loss, s, y.block(i), inst.data->num_classes) / double(s.count());
  }
  return total / y.blocks();
}

std::optional<double> test_mse(const Instance& inst, const ExperimentConfig& cfg, const BlockVector& y) {
  if (!inst.data || config_loss(cfg) != Loss::linear || inst.data->test.count() == 0) return std::nullopt;
  double total = 0.0;
  for (int i = 0; i < y.blocks(); ++i) total += mean_squared_error(inst.data->test, y.block(i));
  return total / y.blocks();
}

namespace {

std::optional<double> cached_f_star(const Instance& inst, const std::string& cache_dir) {
  if (auto cf = closed_form_f_star(inst.problem)) return cf;
  const fs::path file = fs::path(cache_dir) / ("fstar_" + hex(inst.dataset_hash) + ".json");
  if (fs::exists(file)) {
    std::ifstream in(file);
    return json::parse(in).at("f_star").get<double>();
  }
  const auto res = oracle::centralized_bilevel_gd(inst.problem, 200000, 1e-10);
  fs::create_directories(cache_dir);
  std::ofstream out(file);
  out << json{{"f_star", res.f}, {"x_star", std::vector<double>(res.x.data(), res.x.data() + res.x.size())}}.dump(2)
      << '\n';
  return res.f;
}

struct RunOutcome {
  int status = exit_code::ok;
  json manifest_replicates = json::array();
};

RunOutcome run_all(const ExperimentConfig& cfg, const fs::path& dir, const fs::path& root, std::ostream& log,
                   const std::function<void(const ExperimentConfig&, const Instance&, const ReplicateResult&,
                                            const fs::path&)>& extra = {}) {
  RunOutcome outcome;
  fs::create_directories(dir);
  const std::uint64_t config_hash = fnv1a(cfg.raw.dump());
  const fs::path registry = root / "registry.csv";
  const bool fresh = !fs::exists(registry);
  std::ofstream reg(registry, std::ios::app);
  reg << std::setprecision(17);
  if (fresh) {
    reg << "name,config_hash,replicate,K,U,M,alpha,beta,final_consensus_err,final_sc_gap,final_train_cost,"
           "final_test_mse,msgs_d1,msgs_d2,scalars\n";
  }

  for (int r = 0; r < cfg.replicates; ++r) {
    const Instance inst = build_instance(cfg, r);
    const fs::path rep_dir = dir / ("rep_" + std::string(r < 10 ? "00" : r < 100 ? "0" : "") + std::to_string(r));
    fs::create_directories(rep_dir);
    ReplicateResult res;
    try {
      res = run_replicate(cfg, inst, (root / "cache").string());
    } catch (const DivergenceError& e) {
      log << "replicate " << r << ": diverged at outer iteration " << e.iteration() << ": " << e.what() << '\n';
      outcome.status = exit_code::divergence;
      return outcome;
    }
    {
      std::ofstream tj(rep_dir / "trajectory.jsonl");
      res.trajectory.write_jsonl(tj);
      std::ofstream mc(rep_dir / "metrics.csv");
      write_metrics_csv(mc, res.metrics);
      if (inst.data) {
        std::ofstream ds(rep_dir / "dataset.csv");
        write_dataset_csv(ds, *inst.data);
      }
    }
    const auto& last = res.metrics.back();
    const auto& tr = res.trajectory;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    outcome.manifest_replicates.push_back({{"replicate", r},
                                           {"data_seed", inst.data_seed},
                                           {"graph_seed", inst.graph_seed},
                                           {"run_seed", inst.run_seed},
                                           {"dataset_hash", hex(inst.dataset_hash)},
                                           {"agents", inst.graph.size()},
                                           {"edges", inst.graph.edge_count()},
                                           {"sigma", spectral_gap(inst.W)},
                                           {"f_star", opt(res.f_star)},
                                           {"alpha", tr.alpha},
                                           {"beta", tr.beta},
                                           {"U", tr.U},
                                           {"M", tr.M},
                                           {"K", tr.K},
                                           {"msgs_d1", tr.counters.msgs_d1},
                                           {"msgs_d2", tr.counters.msgs_d2},
                                           {"scalars", tr.counters.scalars}});
    auto cell = [&](const std::optional<double>& v) {
      reg << ',';
      if (v) reg << *v;
    };
    reg << cfg.name << ',' << hex(config_hash) << ',' << r << ',' << tr.K << ',' << tr.U << ',' << tr.M << ','
        << tr.alpha << ',' << tr.beta << ',' << last.consensus_err;
    cell(last.sc_gap);
    cell(last.train_cost);
    cell(last.test_mse);
    reg << ',' << tr.counters.msgs_d1 << ',' << tr.counters.msgs_d2 << ',' << tr.counters.scalars << '\n';

    log << "replicate " << r << ": K=" << tr.K << " alpha=" << tr.alpha << " beta=" << tr.beta << " U=" << tr.U
        << " M=" << tr.M << " consensus_err=" << last.consensus_err;
    if (last.sc_gap) log << " sc_gap=" << *last.sc_gap;
    if (last.train_cost) log << " train_cost=" << *last.train_cost;
    if (last.test_mse) log << " test_mse=" << *last.test_mse;
    log << '\n';
    if (extra) extra(cfg, inst, res, rep_dir);
  }

  json manifest{{"name", cfg.name},
                {"version", DBO_VERSION},
                {"config_hash", hex(config_hash)},
                {"config", cfg.raw},
                {"seed", cfg.seed},
                {"replicates", outcome.manifest_replicates}};
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
  return outcome;
}

}  // namespace

ReplicateResult run_replicate(const ExperimentConfig& cfg, const Instance& inst, const std::string& cache_dir) {
  ReplicateResult res;
  RunConfig rc = cfg.run;
  rc.seed = inst.run_seed;
  const bool needs_f_star =
      std::any_of(cfg.measures.begin(), cfg.measures.end(), [](Measure m) { return m != Measure::nonconvex; });
  if (needs_f_star) res.f_star = cached_f_star(inst, cache_dir);
  res.trajectory = dagm_run(inst.problem, inst.W, rc);
  auto recs = metrics_records(inst.problem, res.trajectory, cfg.measures, res.f_star);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const auto& snap = res.trajectory.snapshots[k];
    if (snap.state) {
      recs[k].train_cost = training_cost(inst, cfg, snap.state->y);
      recs[k].test_mse = test_mse(inst, cfg, snap.state->y);
    }
  }
  for (const auto& r : recs) {
    if (r.k % cfg.iterations_per_epoch == 0) res.metrics.push_back(r);
  }
  return res;
}

int cmd_run(const ExperimentConfig& cfg, const std::string& root, std::ostream& log) {
  const fs::path dir = fs::path(root) / cfg.output;
  log << "run '" << cfg.name << "' -> " << dir.string() << '\n';
  return run_all(cfg, dir, root, log).status;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& root, std::ostream& log) {
  const std::string param = get<std::string>(cfg.raw, "sweep.param");
  const auto values = get<std::vector<double>>(cfg.raw, "sweep.values");
  if (values.empty()) throw ConfigError("sweep.values is empty");
  if (param != "beta" && param != "alpha" && param != "U" && param != "M" && param != "K") {
    throw ConfigError("sweep.param must be one of beta, alpha, U, M, K");
  }
  const fs::path base = fs::path(root) / cfg.output;
  fs::create_directories(base);
  std::ofstream summary(base / "sweep_summary.csv");
  summary << std::setprecision(17) << param << ",final_penalty_gap,final_sc_gap,final_consensus_err\n";
  std::vector<double> xs, gaps;
  int status = exit_code::ok;
  for (double v : values) {
    ExperimentConfig c = cfg;
    std::ostringstream tag;
    tag << param << '_' << v;
    if (param == "beta") c.run.beta = v;
    if (param == "alpha") c.run.alpha = v;
    if (param == "U") c.run.U = int(v);
    if (param == "M") c.run.M = int(v);
    if (param == "K") c.run.K = int(v);
    c.raw["run"][param] = param == "alpha" || param == "beta" ? json(v) : json(int(v));
    try {
      c.run.check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("sweep value: ") + e.what());
    }
    std::optional<double> final_gap, final_sc, final_cons;
    auto extra = [&](const ExperimentConfig& ec, const Instance& inst, const ReplicateResult& res,
                     const fs::path& rep_dir) {
      if (rep_dir.filename() != "rep_000") return;
      const bool small = inst.W.size() <= oracle::max_agents;
      std::ofstream pg(rep_dir / "penalty_gap.csv");
      pg << std::setprecision(17) << "k,penalty_gap\n";
      const auto& snaps = res.trajectory.snapshots;
      for (std::size_t k = 0; k < snaps.size(); ++k) {
        if (!snaps[k].state || (!small && k + 1 != snaps.size())) continue;
        const double gap = penalty_gap(inst.problem, inst.W, ec.run.beta, snaps[k].state->x);
        pg << snaps[k].k << ',' << gap << '\n';
        if (k + 1 == snaps.size()) final_gap = gap;
      }
      final_sc = res.metrics.back().sc_gap;
      final_cons = res.metrics.back().consensus_err;
    };
    log << "sweep " << tag.str() << '\n';
    c.run.keep_states = true;
    const int st = run_all(c, base / tag.str(), root, log, extra).status;
    if (st != exit_code::ok) status = st;
    summary << v;
    for (const auto& cell : {final_gap, final_sc, final_cons}) {
      summary << ',';
      if (cell) summary << *cell;
    }
    summary << '\n';
    if (final_gap && *final_gap > 0.0) {
      xs.push_back(v);
      gaps.push_back(*final_gap);
    }
  }
  if (param == "beta" && xs.size() >= 2) {
    log << "penalty gap log-log slope vs beta: " << loglog_slope(xs, gaps) << '\n';
  }
  return status;
}

int cmd_validate(const ExperimentConfig& cfg, std::ostream& log) {
  bool hard_fail = false;
  auto mark = [&](bool ok) {
    if (!ok) hard_fail = true;
    return ok ? "PASS" : "FAIL";
  };
  std::uint64_t graph_seed = 0;
  const Graph g = build_graph(cfg, 0, graph_seed);
  log << "graph: n=" << g.size() << " edges=" << g.edge_count() << '\n';
  log << "  " << mark(g.connected()) << " connected\n";
  if (!g.connected()) return exit_code::failure;

  const Instance inst = build_instance(cfg, 0);
  const ValidationReport rep = validate_mixing(inst.W, inst.graph);
  log << "mixing matrix (" << get<std::string>(cfg.raw, "weights") << "):\n";
  log << "  " << mark(rep.nonnegative) << " nonnegative\n";
  log << "  " << mark(rep.symmetric) << " symmetric\n";
  log << "  " << mark(rep.doubly_stochastic) << " doubly stochastic (max deviation " << rep.max_sum_deviation << ")\n";
  log << "  " << mark(rep.sparsity) << " zero off the edge set\n";
  log << "  " << mark(rep.null_space) << " eigenvalue 1 simple (lambda2 = " << rep.lambda2 << ")\n";
  log << "  " << mark(rep.self_weights) << " self weights in (0,1): theta=" << rep.theta << " Theta=" << rep.Theta
      << '\n';
  for (const auto& m : rep.messages) log << "    " << m << '\n';

  const ConstantsReport cr = verify_constants(inst.problem, get<int>(cfg.raw, "validate.constant_trials"),
                                              derive_seed(cfg.seed, 0, 4));
  log << "problem constants (" << cr.trials << " sampled pairs):\n";
  for (const auto& c : cr.checks) {
    log << "  " << mark(!c.violated) << ' ' << c.name << " declared=" << c.declared << " observed=" << c.observed
        << '\n';
  }

  const TheoryTable t = theory_constants(inst.problem.constants(), inst.W, cfg.run.beta, cfg.run.alpha, cfg.run.U);
  log << "theory constants at alpha=" << cfg.run.alpha << " beta=" << cfg.run.beta << " U=" << cfg.run.U << ":\n";
  for (const auto& [name, value] : t.rows()) {
    log << "  " << std::left << std::setw(26) << name << std::right;
    if (value) log << *value;
    else log << "unknown";
    log << '\n';
  }
  if (t.beta_above_cap) log << "warning: beta=" << cfg.run.beta << " exceeds the inner step cap beta_bar=" << t.beta_bar << '\n';
  if (t.rho_at_least_one) {
    log << "warning: Neumann contraction bound rho=" << t.rho << " is not below 1; the truncated series has no error guarantee\n";
  }
  log << (hard_fail ? "validation FAILED\n" : "validation passed\n");
  return hard_fail ? exit_code::failure : exit_code::ok;
}

int cmd_complexity(const ComplexityParams& params, std::optional<std::int64_t> K, std::optional<std::int64_t> U,
                   std::optional<std::int64_t> M, std::ostream& log) {
  const ComplexityTable t = complexity_table(params);
  log << std::setprecision(10);
  log << "communication complexity at n=" << params.n << " d1=" << params.d1 << " d2=" << params.d2
      << " eps=" << params.eps << " sigma=" << params.sigma << '\n';
  log << "  DAGM   " << t.dagm << '\n';
  log << "  DGBO   " << t.dgbo << '\n';
  log << "  DGTBO  " << t.dgtbo << '\n';
  if (K && U && M) {
    log << "counter prediction K((U+1)d1 + M d2) = "
        << counter_prediction(*K, *U, *M, std::int64_t(params.d1), std::int64_t(params.d2)) << '\n';
  }
  return exit_code::ok;
}

}  // namespace dbo
