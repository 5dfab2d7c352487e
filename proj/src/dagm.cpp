#include "dbo/dagm.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dbo {

Schedule parse_schedule(const std::string& name) {
  if (name == "fixed") return Schedule::fixed;
  if (name == "theorem_strongly_convex") return Schedule::theorem_strongly_convex;
  if (name == "theorem_convex") return Schedule::theorem_convex;
  if (name == "theorem_nonconvex") return Schedule::theorem_nonconvex;
  throw std::invalid_argument("unknown schedule '" + name +
                              "' (expected fixed, theorem_strongly_convex, theorem_convex, theorem_nonconvex)");
}

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::fixed: return "fixed";
    case Schedule::theorem_strongly_convex: return "theorem_strongly_convex";
    case Schedule::theorem_convex: return "theorem_convex";
    case Schedule::theorem_nonconvex: return "theorem_nonconvex";
  }
  return "unknown";
}

void RunConfig::check() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be positive and finite");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be positive and finite");
  if (U < 0) throw std::invalid_argument("U must be nonnegative");
  if (M < 1) throw std::invalid_argument("M must be at least 1");
  if (K < 0) throw std::invalid_argument("K must be nonnegative");
  if (!(schedule_multiplier > 0.0)) throw std::invalid_argument("schedule multiplier must be positive");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("init_scale must be nonnegative");
  if (!(divergence_limit > 0.0)) throw std::invalid_argument("divergence limit must be positive");
}

void Trajectory::write_jsonl(std::ostream& out) const {
  for (const auto& s : snapshots) {
    nlohmann::json rec;
    rec["k"] = s.k;
    rec["x_bar"] = std::vector<double>(s.x_bar.data(), s.x_bar.data() + s.x_bar.size());
    rec["consensus_err"] = s.consensus_err;
    rec["hypergrad_norm"] = s.hypergrad_norm ? nlohmann::json(*s.hypergrad_norm) : nlohmann::json(nullptr);
    rec["msgs_d1"] = s.msgs_d1;
    rec["msgs_d2"] = s.msgs_d2;
    rec["scalars"] = s.scalars;
    rec["wall_ms"] = s.wall_ms;
    out << rec.dump() << '\n';
  }
}

BlockVector inner_loop(const BilevelProblem& p, const MixingMatrix& W, double beta, const BlockVector& x,
                       const BlockVector& y0, int M, Exec exec) {
  if (M < 1) throw std::invalid_argument("inner_loop: M must be at least 1");
  if (!(beta > 0.0)) throw std::invalid_argument("inner_loop: beta must be positive");
  p.require_agents(W.size());
  if (!y0.same_shape(BlockVector(W.size(), p.d2())) || !x.same_shape(BlockVector(W.size(), p.d1()))) {
    throw std::invalid_argument("inner_loop: state shape mismatch");
  }
  BlockVector y = y0, next(W.size(), p.d2());
  for (int t = 0; t < M; ++t) {
    for_each_agent(exec, W.size(), [&](int i) {
      next.block(i) = y.block(i) - penalty_block(W, y, i) - beta * p.local(i).grad_g_y(x.block(i), y.block(i));
    });
    std::swap(y, next);
  }
  return y;
}

BlockVector hypergradient(const BilevelProblem& p, const MixingMatrix& W, double alpha, double beta,
                          const BlockVector& x, const BlockVector& y, const BlockVector& h, Exec exec) {
  if (!(alpha > 0.0)) throw std::invalid_argument("hypergradient: alpha must be positive");
  p.require_agents(W.size());
  BlockVector d(W.size(), p.d1());
  for_each_agent(exec, W.size(), [&](int i) {
    const auto& f = p.local(i);
    d.block(i) = penalty_block(W, x, i) / alpha + f.grad_f_x(x.block(i), y.block(i)) +
                 beta * (f.jac_g_xy(x.block(i), y.block(i)) * h.block(i));
  });
  return d;
}

namespace {

int order_from_log(double rho, double log_arg, double scale) {
  if (rho == 0.0) return 0;
  const double v = std::ceil(scale * log_arg / std::log(1.0 / rho));
  return int(std::abs(v));
}

Snapshot snapshot(int k, const StackedState& s, bool keep, const CommCounters& c, double wall_ms) {
  Snapshot snap;
  snap.k = k;
  if (keep) snap.state = s;
  snap.x_bar = s.x.mean();
  snap.consensus_err = s.x.consensus_error();
  snap.msgs_d1 = c.msgs_d1;
  snap.msgs_d2 = c.msgs_d2;
  snap.scalars = c.scalars;
  snap.wall_ms = wall_ms;
  return snap;
}

bool all_finite(const BlockVector& v) { return v.data().allFinite(); }

}  // namespace

int neumann_order(double rho, double arg, double scale) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::domain_error("neumann_order needs 0 <= rho < 1");
  if (!(arg > 0.0)) throw std::domain_error("neumann_order needs a positive argument");
  return order_from_log(rho, std::log(arg), scale);
}

ScheduleParams schedule_params(const ProblemConstants& k, const MixingMatrix& W, int K, Schedule mode,
                               const ScheduleOptions& opts) {
  if (K < 1) throw std::invalid_argument("schedule_params: K must be positive");
  const int n = W.size();
  const InnerStepCap cap = inner_step_cap(k, W);
  ScheduleParams sp;
  sp.beta_bar = cap.beta_bar;
  sp.b_g = cap.b_g;
  sp.beta = mode == Schedule::fixed ? opts.beta_cap : std::min(cap.beta_bar, opts.beta_cap);
  if (sp.beta > cap.beta_bar) {
    std::ostringstream os;
    os << "beta=" << sp.beta << " exceeds the inner step cap beta_bar=" << cap.beta_bar;
    sp.notes.push_back(os.str());
  }
  sp.rho = rho_bound(W.theta(), W.Theta(), sp.beta, k.mu_g);
  sp.rho_below_one = sp.rho < 1.0;
  if (!sp.rho_below_one) {
    std::ostringstream os;
    os << "Neumann contraction bound rho=" << sp.rho << " >= 1 at beta=" << sp.beta << "; shrink beta or raise self-weights";
    sp.notes.push_back(os.str());
  }
  sp.L_F = outer_smoothness(k, W).L_F;
  const double denom = 2.0 * (1.0 - W.Theta()) + sp.beta * k.mu_g;
  if (sp.rho_below_one) {
    if (k.C_gxy && k.C_fy) sp.eta = sp.beta * double(n) * n * *k.C_gxy * *k.C_fy / (denom * (1.0 - sp.rho));
    else if ((k.C_gxy && *k.C_gxy == 0.0) || (k.C_fy && *k.C_fy == 0.0)) sp.eta = 0.0;
  }

  if (mode == Schedule::fixed) {
    sp.alpha = opts.alpha_cap;
    sp.U = opts.fallback_U;
    sp.M = opts.fallback_M;
    return sp;
  }

  const double alpha_div = mode == Schedule::theorem_strongly_convex ? 2.0 : mode == Schedule::theorem_convex ? 1.0 : 8.0;
  if (sp.L_F && *sp.L_F > 0.0) {
    sp.alpha = std::min(opts.alpha_cap, 1.0 / (alpha_div * *sp.L_F));
  } else {
    sp.alpha = opts.alpha_cap;
    sp.notes.push_back("outer smoothness constant unknown; alpha taken from the configured value");
  }

  const double c = opts.multiplier;
  if (!sp.rho_below_one || !sp.eta) {
    sp.U = opts.fallback_U;
    sp.notes.push_back("Neumann order rule needs rho < 1 and known C_gxy, C_fy; U taken from the configured value");
  } else if (*sp.eta == 0.0) {
    sp.U = 0;
  } else {
    const double log_eta = std::log(*sp.eta), log_K = std::log(double(K));
    std::optional<double> log_arg;
    double scale = 0.5;
    switch (mode) {
      case Schedule::theorem_strongly_convex: {
        // K-th iterate form of the per-iteration rule
        const double contraction = 1.0 - sp.beta * sp.b_g;
        if (contraction > 0.0) log_arg = log_K + 2.0 * log_eta - double(K + 1) * std::log(contraction);
        break;
      }
      case Schedule::theorem_convex:
        log_arg = log_K + log_eta;
        scale = 1.0;
        break;
      default:
        log_arg = log_K + 2.0 * log_eta;
        break;
    }
    if (log_arg) {
      sp.U = int(std::ceil(c * order_from_log(sp.rho, *log_arg, scale)));
    } else {
      sp.U = opts.fallback_U;
      sp.notes.push_back("1 - beta*b_g is not positive; U taken from the configured value");
    }
  }

  double m = 1.0;
  switch (mode) {
    case Schedule::theorem_strongly_convex:
      m = std::max(double(K + 1), std::ceil(std::log(sp.alpha) / sp.beta));
      break;
    case Schedule::theorem_convex:
      m = std::ceil(double(K) * sp.alpha / sp.beta);
      break;
    default:
      m = std::ceil((1.0 + sp.alpha * sp.alpha) / sp.beta);
      break;
  }
  sp.M = std::max(1, int(std::ceil(c * m)));
  return sp;
}

Trajectory dagm_run(const BilevelProblem& p, const MixingMatrix& W, RunConfig cfg) {
  cfg.check();
  p.require_agents(W.size());
  const int n = W.size(), d1 = p.d1(), d2 = p.d2();

  if (cfg.schedule != Schedule::fixed) {
    ScheduleOptions opts;
    opts.alpha_cap = cfg.alpha;
    opts.beta_cap = cfg.beta;
    opts.multiplier = cfg.schedule_multiplier;
    opts.fallback_U = cfg.U;
    opts.fallback_M = cfg.M;
    const ScheduleParams sp = schedule_params(p.constants(), W, std::max(cfg.K, 1), cfg.schedule, opts);
    cfg.alpha = sp.alpha;
    cfg.beta = sp.beta;
    cfg.U = sp.U;
    cfg.M = sp.M;
  }

  StackedState s{BlockVector(n, d1), BlockVector(n, d2)};
  if (cfg.x0) {
    if (!cfg.x0->same_shape(s.x)) throw std::invalid_argument("x0 has the wrong shape");
    s.x = *cfg.x0;
  }
  if (cfg.y0) {
    if (!cfg.y0->same_shape(s.y)) throw std::invalid_argument("y0 has the wrong shape");
    s.y = *cfg.y0;
  } else if (cfg.init_scale > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, cfg.init_scale);
    for (Eigen::Index c = 0; c < s.y.size(); ++c) s.y.data()(c) = normal(rng);
  }

  Trajectory traj;
  traj.alpha = cfg.alpha;
  traj.beta = cfg.beta;
  traj.U = cfg.U;
  traj.M = cfg.M;
  traj.K = cfg.K;
  traj.counters.node_d1.assign(n, 0);
  traj.counters.node_d2.assign(n, 0);

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  traj.snapshots.push_back(snapshot(0, s, cfg.keep_states, traj.counters, elapsed()));

  for (int k = 0; k < cfg.K; ++k) {
    s.y = inner_loop(p, W, cfg.beta, s.x, s.y, cfg.M, cfg.exec);
    const HessianSplit split = hessian_split(p, W, cfg.beta, s, cfg.exec);
    const BlockVector h = dihgp(split, outer_inner_gradient(p, s, cfg.exec), cfg.U, cfg.exec, false).h;
    const BlockVector d = hypergradient(p, W, cfg.alpha, cfg.beta, s.x, s.y, h, cfg.exec);
    s.x.data() -= cfg.alpha * d.data();

    auto& c = traj.counters;
    for (int i = 0; i < n; ++i) {
      const std::int64_t deg = W.neighbors(i).size();
      c.node_d1[i] += (cfg.U + 1) * deg;
      c.node_d2[i] += std::int64_t(cfg.M) * deg;
      c.msgs_d1 += (cfg.U + 1) * deg;
      c.msgs_d2 += std::int64_t(cfg.M) * deg;
      c.scalars += deg * (d1 + std::int64_t(cfg.U) * d2 + std::int64_t(cfg.M) * d2);
    }

    if (!all_finite(s.x) || !all_finite(s.y) || !all_finite(h)) {
      throw DivergenceError(k + 1, "non-finite iterate at outer iteration " + std::to_string(k + 1));
    }
    if (s.x.norm() > cfg.divergence_limit) {
      throw DivergenceError(k + 1, "outer iterate norm exceeded " + std::to_string(cfg.divergence_limit) +
                                       " at outer iteration " + std::to_string(k + 1));
    }
    Snapshot snap = snapshot(k + 1, s, cfg.keep_states, c, elapsed());
    snap.hypergrad_norm = d.norm();
    traj.snapshots.push_back(std::move(snap));
  }
  traj.final_state = s;
  return traj;
}

}  // namespace dbo
