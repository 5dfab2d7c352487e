#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbo/dihgp.hpp"
#include "dbo/penalty.hpp"

namespace dbo {

enum class Schedule { fixed, theorem_strongly_convex, theorem_convex, theorem_nonconvex };

Schedule parse_schedule(const std::string& name);
std::string to_string(Schedule s);

struct RunConfig {
  double alpha = 0.01;
  double beta = 0.1;
  int U = 2;
  int M = 10;
  int K = 100;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::fixed;
  /// Big-O multiplier applied to the theorem M and U rules.
  double schedule_multiplier = 1.0;
  Exec exec = Exec::serial;
  /// Default x_0 = 0. y_0 = 0 unless `init_scale` > 0, in which case
  /// y_0 ~ N(0, init_scale²) drawn from `seed`.
  std::optional<BlockVector> x0;
  std::optional<BlockVector> y0;
  double init_scale = 0.0;
  double divergence_limit = 1e8;
  /// Keep every StackedState in the trajectory (off for large runs).
  bool keep_states = true;

  /// Throws std::invalid_argument unless steps are positive and counts valid.
  void check() const;
};

/// Exact message counters. `msgs_d1` counts the outer-phase vectors (one x
/// exchange plus U rounds of h), `msgs_d2` the inner DGD vectors of y;
/// `scalars` counts transmitted floating-point numbers with true widths.
struct CommCounters {
  std::int64_t msgs_d1 = 0;
  std::int64_t msgs_d2 = 0;
  std::int64_t scalars = 0;
  std::vector<std::int64_t> node_d1;
  std::vector<std::int64_t> node_d2;
};

struct Snapshot {
  int k = 0;
  std::optional<StackedState> state;
  Vec x_bar;
  double consensus_err = 0.0;
  std::optional<double> hypergrad_norm;  // of the direction that produced this iterate
  std::int64_t msgs_d1 = 0;
  std::int64_t msgs_d2 = 0;
  std::int64_t scalars = 0;
  double wall_ms = 0.0;
};

struct Trajectory {
  double alpha = 0.0;
  double beta = 0.0;
  int U = 0;
  int M = 0;
  int K = 0;
  std::vector<Snapshot> snapshots;  // K + 1 entries
  CommCounters counters;
  StackedState final_state;

  /// One JSON object per snapshot; `wall_ms` is the only nondeterministic field.
  void write_jsonl(std::ostream& out) const;
};

/// Thrown when an iterate becomes non-finite or ‖x_k‖ exceeds the limit.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// M rounds of y ← y − β[(1/β)(I − W ⊗ I)y + ∇_y g(x, y)].
BlockVector inner_loop(const BilevelProblem& p, const MixingMatrix& W, double beta, const BlockVector& x,
                       const BlockVector& y0, int M, Exec exec = Exec::serial);

/// Block i: (1/α)[(1−w_ii)x_i − Σ_j w_ij x_j] + ∇_x f_i + β ∇²_{xy} g_i h_i.
BlockVector hypergradient(const BilevelProblem& p, const MixingMatrix& W, double alpha, double beta,
                          const BlockVector& x, const BlockVector& y, const BlockVector& h, Exec exec = Exec::serial);

/// Alternating inner DGD, Neumann hypergradient and outer step, with warm
/// started inner iterates. Non-fixed schedules replace α, β, U and M with
/// schedule_params output before the run.
Trajectory dagm_run(const BilevelProblem& p, const MixingMatrix& W, RunConfig cfg);

struct ScheduleOptions {
  /// Upper limit on β below β̄, and on α below the theorem cap.
  double beta_cap = 1.0;
  double alpha_cap = 1.0;
  double multiplier = 1.0;
  /// Used when η, L_F or ρ < 1 are unavailable.
  int fallback_U = 2;
  int fallback_M = 10;
};

struct ScheduleParams {
  double alpha = 0.0;
  double beta = 0.0;
  int U = 0;
  int M = 0;
  double beta_bar = 0.0;
  double b_g = 0.0;
  double rho = 0.0;
  bool rho_below_one = false;
  std::optional<double> L_F;
  std::optional<double> eta;
  std::vector<std::string> notes;
};

ScheduleParams schedule_params(const ProblemConstants& k, const MixingMatrix& W, int K, Schedule mode,
                               const ScheduleOptions& opts = {});

/// |⌈ scale · log_{1/ρ}(arg) ⌉| for ρ in (0, 1); 0 when ρ = 0.
int neumann_order(double rho, double arg, double scale = 1.0);

}  // namespace dbo
