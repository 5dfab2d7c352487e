#include "dbo/diagnostics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "dbo/oracle.hpp"

namespace dbo {

Measure parse_measure(const std::string& name) {
  if (name == "strongly_convex") return Measure::strongly_convex;
  if (name == "convex") return Measure::convex;
  if (name == "nonconvex") return Measure::nonconvex;
  throw std::invalid_argument("unknown measure '" + name + "' (expected strongly_convex, convex, nonconvex)");
}

std::string to_string(Measure m) {
  switch (m) {
    case Measure::strongly_convex: return "strongly_convex";
    case Measure::convex: return "convex";
    case Measure::nonconvex: return "nonconvex";
  }
  return "unknown";
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{"k",       "sc_gap",  "cvx_gap",    "ncvx_grad_sq", "consensus_err",
                                             "msgs_d1", "msgs_d2", "train_cost", "test_mse"};
  return cols;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
  const auto& cols = metrics_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  const auto old = out.precision(17);
  auto opt = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  for (const auto& r : records) {
    out << r.k;
    opt(r.sc_gap);
    opt(r.cvx_gap);
    opt(r.ncvx_grad_sq);
    out << ',' << r.consensus_err << ',' << r.msgs_d1 << ',' << r.msgs_d2;
    opt(r.train_cost);
    opt(r.test_mse);
    out << '\n';
  }
  out.precision(old);
}

std::optional<double> closed_form_f_star(const BilevelProblem& p) {
  if (p.quadratic()) return p.quadratic()->f_star();
  return std::nullopt;
}

namespace {

double require_f_star(const BilevelProblem& p, std::optional<double> f_star, Measure mode) {
  if (f_star) return *f_star;
  if (auto cf = closed_form_f_star(p)) return *cf;
  throw std::invalid_argument("measure '" + to_string(mode) + "' needs f*, which this problem does not provide");
}

}  // namespace

std::vector<double> stationarity(const BilevelProblem& p, const Trajectory& traj, Measure mode,
                                 std::optional<double> f_star) {
  std::vector<double> out;
  out.reserve(traj.snapshots.size());
  switch (mode) {
    case Measure::strongly_convex: {
      const double fs = require_f_star(p, f_star, mode);
      for (const auto& s : traj.snapshots) out.push_back(oracle::outer_objective(p, s.x_bar) - fs);
      break;
    }
    case Measure::convex: {
      const double fs = require_f_star(p, f_star, mode);
      Vec sum = Vec::Zero(p.d1());
      for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        const auto& s = traj.snapshots[k];
        if (k == 0) {
          out.push_back(oracle::outer_objective(p, s.x_bar) - fs);
          continue;
        }
        sum += s.x_bar;
        out.push_back(oracle::outer_objective(p, sum / double(k)) - fs);
      }
      break;
    }
    case Measure::nonconvex: {
      double acc = 0.0;
      for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        acc += oracle::bilevel_gradient(p, traj.snapshots[k].x_bar).squaredNorm();
        out.push_back(acc / double(k + 1));
      }
      break;
    }
  }
  return out;
}

std::vector<MetricsRecord> metrics_records(const BilevelProblem& p, const Trajectory& traj,
                                           const std::vector<Measure>& measures, std::optional<double> f_star) {
  std::vector<MetricsRecord> recs(traj.snapshots.size());
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const auto& s = traj.snapshots[k];
    recs[k].k = s.k;
    recs[k].consensus_err = s.consensus_err;
    recs[k].msgs_d1 = s.msgs_d1;
    recs[k].msgs_d2 = s.msgs_d2;
  }
  for (Measure m : measures) {
    const auto series = stationarity(p, traj, m, f_star);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      switch (m) {
        case Measure::strongly_convex: recs[k].sc_gap = series[k]; break;
        case Measure::convex: recs[k].cvx_gap = series[k]; break;
        case Measure::nonconvex: recs[k].ncvx_grad_sq = series[k]; break;
      }
    }
  }
  return recs;
}

double penalty_gap(const BilevelProblem& p, const MixingMatrix& W, double beta, const BlockVector& x) {
  if (!(beta > 0.0)) throw std::invalid_argument("penalty_gap: beta must be positive");
  const Vec y_star = oracle::constrained_inner_solution(p, x);
  BlockVector y_pen;
  if (W.size() <= oracle::max_agents && std::max(p.d1(), p.d2()) <= oracle::max_dim) {
    y_pen = oracle::penalized_inner_solution(p, W, beta, x);
  } else {
    // DGD to a fixed point; the contraction factor is at most 1 − β b_g
    y_pen = BlockVector::replicate(W.size(), y_star);
    const int chunk = std::max(10, int(std::ceil(1.0 / beta)));
    for (int round = 0;; ++round) {
      BlockVector next = inner_loop(p, W, beta, x, y_pen, chunk);
      const double change = (next.data() - y_pen.data()).norm();
      y_pen = std::move(next);
      if (change <= 1e-13 * (1.0 + y_pen.norm())) break;
      if (round > 100000) throw std::runtime_error("penalty_gap: inner DGD did not converge");
    }
  }
  return (BlockVector::replicate(W.size(), y_star).data() - y_pen.data()).norm();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope needs two or more paired points");
  const auto m = Eigen::Index(x.size());
  Vec lx(m), ly(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("loglog_slope needs positive values");
    lx(i) = std::log(x[i]);
    ly(i) = std::log(y[i]);
  }
  const Vec cx = lx.array() - lx.mean();
  const Vec cy = ly.array() - ly.mean();
  return cx.dot(cy) / cx.squaredNorm();
}

PenaltyGapScan penalty_gap_scan(const BilevelProblem& p, const MixingMatrix& W, const BlockVector& x,
                                const std::vector<double>& betas) {
  PenaltyGapScan scan;
  scan.betas = betas;
  for (double b : betas) scan.gaps.push_back(penalty_gap(p, W, b, x));
  scan.slope = loglog_slope(scan.betas, scan.gaps);
  return scan;
}

std::vector<std::pair<std::string, std::optional<double>>> TheoryTable::rows() const {
  return {{"sigma", sigma},
          {"theta", theta},
          {"Theta", Theta},
          {"lambda_min_nonzero(I-W)", lambda_min_nonzero},
          {"lambda_max(I-W)", lambda_max},
          {"b_g", b_g},
          {"beta_bar", beta_bar},
          {"rho", rho},
          {"lambda", lambda},
          {"Lambda", Lambda},
          {"mu_G", mu_G},
          {"C", C},
          {"L_F", L_F},
          {"varrho", varrho},
          {"mu_F", mu_F},
          {"nu", nu}};
}

TheoryTable theory_constants(const ProblemConstants& k, const MixingMatrix& W, double beta, double alpha, int U) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("theory_constants: steps must be positive");
  TheoryTable t;
  t.sigma = spectral_gap(W);
  t.theta = W.theta();
  t.Theta = W.Theta();
  const InnerStepCap cap = inner_step_cap(k, W);
  t.lambda_min_nonzero = cap.lambda_min_nonzero;
  t.lambda_max = cap.lambda_max;
  t.b_g = cap.b_g;
  t.beta_bar = cap.beta_bar;
  const NeumannBounds nb = neumann_bounds(t.theta, t.Theta, beta, k.mu_g, k.C_gyy, U);
  t.rho = nb.rho;
  t.lambda = nb.lambda;
  t.Lambda = nb.Lambda;
  const OuterSmoothness os = outer_smoothness(k, W);
  t.mu_G = os.mu_G;
  t.C = os.C;
  t.L_F = os.L_F;
  t.varrho = os.varrho;
  if (k.mu_f) {
    t.mu_F = *k.mu_f + (1.0 - t.sigma) / (2.0 * alpha);
    t.nu = std::min(alpha * *t.mu_F, beta * t.b_g);
  }
  t.rho_at_least_one = t.rho >= 1.0;
  t.beta_above_cap = beta > t.beta_bar;
  return t;
}

ComplexityTable complexity_table(const ComplexityParams& c) {
  if (!(c.n > 0) || !(c.d1 > 0) || !(c.d2 > 0)) throw std::invalid_argument("n, d1 and d2 must be positive");
  if (!(c.eps > 0) || !(c.eps < 1)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (!(c.sigma >= 0) || !(c.sigma < 1)) throw std::invalid_argument("sigma must lie in [0, 1)");
  const double gap2 = (1.0 - c.sigma) * (1.0 - c.sigma);
  const double L = std::log(1.0 / c.eps);
  ComplexityTable t;
  t.dagm = ((c.d1 + c.d2) * L + c.d1) / (c.n * c.eps * gap2);
  t.dgbo = (c.d2 * c.d2 * L + c.d1 * c.d2) / (c.eps * gap2);
  t.dgtbo = (c.d1 * c.d2 * L + c.d1) / (c.eps * gap2);
  return t;
}

std::int64_t counter_prediction(std::int64_t K, std::int64_t U, std::int64_t M, std::int64_t d1, std::int64_t d2) {
  if (K < 0 || U < 0 || M < 0 || d1 < 0 || d2 < 0) throw std::invalid_argument("counter_prediction: negative input");
  return K * ((U + 1) * d1 + M * d2);
}

}  // namespace dbo
