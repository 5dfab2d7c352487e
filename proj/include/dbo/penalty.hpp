#pragma once

#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "dbo/exec.hpp"
#include "dbo/graph.hpp"
#include "dbo/problem.hpp"
#include "dbo/types.hpp"

namespace dbo {

/// Block i of (I − W ⊗ I)v: (1 − w_ii)v_i − Σ_{j∈N_i} w_ij v_j.
Vec penalty_block(const MixingMatrix& W, const BlockVector& v, int i);

/// (I − W ⊗ I)v for every block.
BlockVector penalty_apply(const MixingMatrix& W, const BlockVector& v, Exec exec = Exec::serial);

/// (1/β)(I − W ⊗ I)y + ∇_y g(x, y), blockwise.
BlockVector inner_penalized_grad(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s,
                                 Exec exec = Exec::serial);

/// (1/2α) xᵀ(I − W ⊗ I)x + Σ_i f_i(x_i, y_i).
double penalized_outer_value(const BilevelProblem& p, const MixingMatrix& W, double alpha, const StackedState& s);

/// (1/2β) yᵀ(I − W ⊗ I)y + Σ_i g_i(x_i, y_i).
double penalized_inner_value(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s);

/// Hessian of the scaled inner penalty, H = (I − W ⊗ I) + β blockdiag(∇²_y g_i),
/// split as H = D − B with D block diagonal and B carrying the graph:
///   D_ii = β∇²_y g_i + 2(1 − w_ii)I,  B_ii = (1 − w_ii)I,  B_ij = w_ij I.
class HessianSplit {
 public:
  HessianSplit(MixingMatrix W, double beta, std::vector<Mat> d_blocks);

  int agents() const { return int(d_.size()); }
  int dim() const { return dim_; }
  double beta() const { return beta_; }
  const MixingMatrix& mixing() const { return W_; }
  const Mat& D_block(int i) const { return d_[i]; }

  /// Block i of B v; reads only v_i and neighbor blocks.
  Vec apply_B_block(const BlockVector& v, int i) const;
  /// D_ii⁻¹ r via the cached Cholesky factor.
  Vec solve_D_block(int i, const Vec& r) const;

  BlockVector apply_D(const BlockVector& v, Exec exec = Exec::serial) const;
  BlockVector apply_B(const BlockVector& v, Exec exec = Exec::serial) const;
  BlockVector apply_H(const BlockVector& v, Exec exec = Exec::serial) const;
  BlockVector solve_D(const BlockVector& b, Exec exec = Exec::serial) const;

 private:
  void check_shape(const BlockVector& v) const;

  MixingMatrix W_;
  double beta_;
  int dim_;
  std::vector<Mat> d_;
  std::vector<Eigen::LLT<Mat>> factors_;
};

/// Throws std::domain_error when a local Hessian ∇²_y g_i is not positive
/// definite or a D_ii factorization fails.
HessianSplit hessian_split(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s,
                           Exec exec = Exec::serial);

/// ρ = 2(1−θ) / (2(1−Θ) + βμ_g). Domain: 0 < θ ≤ Θ ≤ 1, β > 0, μ_g > 0.
/// The value is returned as is; callers decide what ρ ≥ 1 means for them.
double rho_bound(double theta, double Theta, double beta, double mu_g);

/// Eigenvalue bounds of the truncated inverse Σ_{u≤U} D^{-1/2}X^uD^{-1/2}:
/// lambda = 1/(2(1−θ)+βC_gyy), Lambda = Σ_{u≤U} ρ^u / (2(1−Θ)+βμ_g).
struct NeumannBounds {
  double rho = 0.0;
  double lambda = 0.0;
  double Lambda = 0.0;
};
NeumannBounds neumann_bounds(double theta, double Theta, double beta, double mu_g, double C_gyy, int U);

/// Inner step-size cap:
///   b_g = λ̂_min(I−W) + μ_g L_g/(μ_g + L_g),
///   β̄ = min{ b_g/(λ_max(I−W) L_g), 2/(μ_g + L_g), 1/b_g, 1 }.
/// With a single agent I − W = 0, the first term is dropped and λ̂_min is 0.
struct InnerStepCap {
  double lambda_min_nonzero = 0.0;
  double lambda_max = 0.0;
  double b_g = 0.0;
  double beta_bar = 0.0;
};
InnerStepCap inner_step_cap(const ProblemConstants& k, const MixingMatrix& W);

/// Smoothness constants of the penalized outer objective.
/// Products of an unknown constant with an exact zero count as zero;
/// anything else unknown leaves the result empty.
struct OuterSmoothness {
  double mu_G = 0.0;
  std::optional<double> C;
  std::optional<double> L_F;
  std::optional<double> varrho;
};
OuterSmoothness outer_smoothness(const ProblemConstants& k, const MixingMatrix& W);

}  // namespace dbo
