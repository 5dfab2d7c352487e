#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dbo/penalty.hpp"

namespace dbo {

/// Iterates h_(0..U) of the Neumann recursion and the neighbor messages each
/// exchange round used.
struct DihgpTrace {
  std::vector<BlockVector> iterates;
  std::vector<std::int64_t> messages_per_round;  // one entry per exchange round (U of them)

  std::int64_t total_messages() const;
  /// One JSON object per iterate: round, per-node h norms, messages received.
  void write_jsonl(std::ostream& out) const;
};

struct DihgpResult {
  BlockVector h;
  DihgpTrace trace;
};

/// p_i = ∇_y f_i(x_i, y_i), stacked.
BlockVector outer_inner_gradient(const BilevelProblem& p, const StackedState& s, Exec exec = Exec::serial);

/// Truncated Neumann estimate of −H⁻¹p using only neighbor exchanges:
/// D_ii h_(0),i = −p_i, then h_(s+1),i = D_ii⁻¹(Σ_{j∈N_i∪{i}} B_ij h_(s),j − p_i).
/// With record = false only h_(U) is kept.
DihgpResult dihgp(const HessianSplit& split, const BlockVector& grad_y_f, int U, Exec exec = Exec::serial,
                  bool record = true);

DihgpResult dihgp(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s, int U,
                  Exec exec = Exec::serial, bool record = true);

/// Error of h_(U) against the exact −H⁻¹p from a dense solve, and the
/// geometric envelope ρ^{U+1}‖p‖ / ((2(1−Θ)+βμ_g)(1−ρ)). Rejects ρ ≥ 1.
struct DihgpError {
  double abs_err = 0.0;
  double bound = 0.0;
  double rho = 0.0;
};
DihgpError dihgp_error(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s, int U);

}  // namespace dbo
