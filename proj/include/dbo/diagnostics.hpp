#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dbo/dagm.hpp"

namespace dbo {

enum class Measure { strongly_convex, convex, nonconvex };

Measure parse_measure(const std::string& name);
std::string to_string(Measure m);

/// Per-outer-iteration metrics. Optional fields are left empty when the
/// measure was not requested or cannot be computed.
struct MetricsRecord {
  int k = 0;
  std::optional<double> sc_gap;
  std::optional<double> cvx_gap;
  std::optional<double> ncvx_grad_sq;
  double consensus_err = 0.0;
  std::int64_t msgs_d1 = 0;
  std::int64_t msgs_d2 = 0;
  std::optional<double> train_cost;
  std::optional<double> test_mse;
};

/// Fixed column order of the metrics CSV.
const std::vector<std::string>& metrics_columns();
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records);

/// f* from the closed form when the problem has one, otherwise empty.
std::optional<double> closed_form_f_star(const BilevelProblem& p);

/// Stationarity series over the snapshots, using centralized inner solves at
/// the block averages x̄_k:
///   strongly_convex: f̄(x̄_k) − f*
///   convex:          f̄(x̂_k) − f*, x̂_k the running mean of x̄_1..x̄_k
///   nonconvex:       running mean of ‖∇f̄(x̄_j)‖² over j ≤ k
/// Throws std::invalid_argument when f* is required and unavailable.
std::vector<double> stationarity(const BilevelProblem& p, const Trajectory& traj, Measure mode,
                                 std::optional<double> f_star = std::nullopt);

/// Fills k, consensus error, counters and the requested measures.
std::vector<MetricsRecord> metrics_records(const BilevelProblem& p, const Trajectory& traj,
                                           const std::vector<Measure>& measures,
                                           std::optional<double> f_star = std::nullopt);

/// ‖1 ⊗ y*(x) − y̌*(x)‖: consensus-constrained optimum against the penalized
/// one. The penalized optimum comes from a dense Newton solve when small
/// enough, otherwise from a long run of the inner DGD.
double penalty_gap(const BilevelProblem& p, const MixingMatrix& W, double beta, const BlockVector& x);

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct PenaltyGapScan {
  std::vector<double> betas;
  std::vector<double> gaps;
  double slope = 0.0;
};
PenaltyGapScan penalty_gap_scan(const BilevelProblem& p, const MixingMatrix& W, const BlockVector& x,
                                const std::vector<double>& betas);

/// Every theory formula evaluated at (α, β, U). Unknown inputs leave the
/// dependent rows empty.
struct TheoryTable {
  double sigma = 0.0;
  double theta = 0.0;
  double Theta = 0.0;
  double rho = 0.0;
  double lambda = 0.0;
  double Lambda = 0.0;
  double b_g = 0.0;
  double beta_bar = 0.0;
  double lambda_min_nonzero = 0.0;
  double lambda_max = 0.0;
  double mu_G = 0.0;
  std::optional<double> C;
  std::optional<double> L_F;
  std::optional<double> varrho;
  std::optional<double> mu_F;
  std::optional<double> nu;
  bool rho_at_least_one = false;
  bool beta_above_cap = false;

  std::vector<std::pair<std::string, std::optional<double>>> rows() const;
};
TheoryTable theory_constants(const ProblemConstants& k, const MixingMatrix& W, double beta, double alpha, int U);

/// Communication-complexity rows for reaching an ε-stationary point
/// (natural logarithms).
struct ComplexityParams {
  double n = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double eps = 0.0;
  double sigma = 0.0;
};
struct ComplexityTable {
  double dagm = 0.0;
  double dgbo = 0.0;
  double dgtbo = 0.0;
};
/// Throws std::invalid_argument on nonpositive n, d1, d2, ε, ε ≥ 1, or σ outside [0, 1).
ComplexityTable complexity_table(const ComplexityParams& c);

/// K((U+1)d1 + M d2): transmitted scalars per directed edge.
std::int64_t counter_prediction(std::int64_t K, std::int64_t U, std::int64_t M, std::int64_t d1, std::int64_t d2);

}  // namespace dbo
