#pragma once

#include <vector>

#include "dbo/graph.hpp"
#include "dbo/problem.hpp"
#include "dbo/types.hpp"

/// Brute-force dense references. Nothing here touches the blockwise kernels;
/// every quantity is rebuilt from W and the local oracles directly.
namespace dbo::oracle {

inline constexpr int max_agents = 16;
inline constexpr int max_dim = 8;

/// Throws std::length_error when n > 16 or d > 8.
void require_small(int n, int d);

/// Explicit matrices of the penalized problem at a state.
struct DenseSystem {
  Mat H;            // (I − W ⊗ I_d2) + β blockdiag(∇²_y g_i), (n·d2)²
  Mat laplacian_x;  // I − W ⊗ I_d1, (n·d1)²
};

DenseSystem dense_assemble(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s);

struct DenseSplit {
  Mat D;
  Mat B;
};

/// D and B built from their block definitions, independent of H.
DenseSplit dense_split(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s);

/// Symmetric inverse square root of an SPD matrix.
Mat inv_sqrt_spd(const Mat& m);

/// −H⁻¹ p by Cholesky.
Vec dense_ihgp(const DenseSystem& sys, const Vec& p);

/// D^{-1/2} Σ_{u≤U} (D^{-1/2} B D^{-1/2})^u D^{-1/2}, by explicit powers.
Mat dense_truncated_inverse(const DenseSplit& split, int U);

/// −(truncated inverse) · p.
Vec dense_truncated_neumann(const DenseSplit& split, const Vec& p, int U);

/// Stacked ∇_y f at a state.
Vec stacked_grad_f_y(const BilevelProblem& p, const StackedState& s);

/// argmin_y (1/2β) yᵀ(I − W ⊗ I)y + Σ g_i(x_i, y_i) by damped Newton to a
/// gradient norm of `tol`. Throws std::runtime_error on nonconvergence.
BlockVector penalized_inner_solution(const BilevelProblem& p, const MixingMatrix& W, double beta, const BlockVector& x,
                                     double tol = 1e-11);

/// (1/2α) xᵀ(I − W ⊗ I)x + Σ f_i(x_i, y_i).
double penalized_outer_value(const BilevelProblem& p, const MixingMatrix& W, double alpha, const BlockVector& x,
                             const BlockVector& y);

/// Central differences of x ↦ F(x, y̌*(x)). Requires eps in [1e-7, 1e-4].
Vec fd_hypergradient(const BilevelProblem& p, const MixingMatrix& W, double alpha, double beta, const BlockVector& x,
                     double eps);

/// Implicit-function gradient of x ↦ F(x, y̌*(x)) from dense solves.
Vec analytic_penalized_hypergradient(const BilevelProblem& p, const MixingMatrix& W, double alpha, double beta,
                                     const BlockVector& x);

// ---------------------------------------------------------------------------
// Centralized problem: min_x (1/n)Σ f_i(x, y*(x)), y*(x) = argmin (1/n)Σ g_i(x, y).

Vec inner_solution(const BilevelProblem& p, const Vec& x, double tol = 1e-12);

/// argmin_y Σ g_i(x_i, y) for per-agent x_i: the consensus-constrained inner
/// optimum at a stacked x.
Vec constrained_inner_solution(const BilevelProblem& p, const BlockVector& x, double tol = 1e-12);
double outer_objective(const BilevelProblem& p, const Vec& x);
Vec bilevel_gradient(const BilevelProblem& p, const Vec& x);

struct CentralizedResult {
  Vec x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

/// Gradient descent with Armijo backtracking until ‖∇f‖ ≤ tol. Throws
/// std::runtime_error when the budget runs out first.
CentralizedResult centralized_bilevel_gd(const BilevelProblem& p, int steps, double tol, const Vec& x0 = Vec());

/// Fixed-step bilevel gradient descent with exact inner solves and exact
/// implicit gradients; returns x_0 … x_K.
std::vector<Vec> aid_reference(const BilevelProblem& p, const Vec& x0, double alpha, int K);

}  // namespace dbo::oracle
