#include "dbo/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dbo {

namespace {

void check_state(const BilevelProblem& p, const MixingMatrix& W, const StackedState& s) {
  p.require_agents(W.size());
  if (s.x.blocks() != W.size() || s.y.blocks() != W.size() || s.x.dim() != p.d1() || s.y.dim() != p.d2()) {
    throw std::invalid_argument("stacked state does not match the problem and network");
  }
}

// Optional-valued arithmetic where an exact zero annihilates an unknown.
using Maybe = std::optional<double>;

Maybe mul(Maybe a, Maybe b) {
  if ((a && *a == 0.0) || (b && *b == 0.0)) return 0.0;
  if (a && b) return *a * *b;
  return std::nullopt;
}

Maybe add(Maybe a, Maybe b) {
  if (a && b) return *a + *b;
  return std::nullopt;
}

}  // namespace

Vec penalty_block(const MixingMatrix& W, const BlockVector& v, int i) {
  Vec out = (1.0 - W.self_weight(i)) * v.block(i);
  for (int j : W.neighbors(i)) out -= W(i, j) * v.block(j);
  return out;
}

BlockVector penalty_apply(const MixingMatrix& W, const BlockVector& v, Exec exec) {
  BlockVector out(v.blocks(), v.dim());
  for_each_agent(exec, v.blocks(), [&](int i) { out.block(i) = penalty_block(W, v, i); });
  return out;
}

BlockVector inner_penalized_grad(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s,
                                 Exec exec) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  check_state(p, W, s);
  BlockVector out(s.y.blocks(), s.y.dim());
  for_each_agent(exec, W.size(), [&](int i) {
    out.block(i) = penalty_block(W, s.y, i) / beta + p.local(i).grad_g_y(s.x.block(i), s.y.block(i));
  });
  return out;
}

double penalized_outer_value(const BilevelProblem& p, const MixingMatrix& W, double alpha, const StackedState& s) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  check_state(p, W, s);
  double quad = 0.0, local = 0.0;
  for (int i = 0; i < W.size(); ++i) {
    quad += s.x.block(i).dot(penalty_block(W, s.x, i));
    local += p.local(i).f_value(s.x.block(i), s.y.block(i));
  }
  return quad / (2.0 * alpha) + local;
}

double penalized_inner_value(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  check_state(p, W, s);
  double quad = 0.0, local = 0.0;
  for (int i = 0; i < W.size(); ++i) {
    quad += s.y.block(i).dot(penalty_block(W, s.y, i));
    local += p.local(i).g_value(s.x.block(i), s.y.block(i));
  }
  return quad / (2.0 * beta) + local;
}

// ---------------------------------------------------------------------------

HessianSplit::HessianSplit(MixingMatrix W, double beta, std::vector<Mat> d_blocks)
    : W_(std::move(W)), beta_(beta), dim_(d_blocks.empty() ? 0 : int(d_blocks[0].rows())), d_(std::move(d_blocks)) {
  if (int(d_.size()) != W_.size()) throw std::invalid_argument("HessianSplit: one D block per agent required");
  factors_.reserve(d_.size());
  for (std::size_t i = 0; i < d_.size(); ++i) {
    if (d_[i].rows() != dim_ || d_[i].cols() != dim_) throw std::invalid_argument("HessianSplit: ragged D blocks");
    factors_.emplace_back(d_[i]);
    if (factors_.back().info() != Eigen::Success) {
      throw std::domain_error("D block of agent " + std::to_string(i) + " is not positive definite");
    }
  }
}

void HessianSplit::check_shape(const BlockVector& v) const {
  if (v.blocks() != agents() || v.dim() != dim_) throw std::invalid_argument("HessianSplit: vector shape mismatch");
}

Vec HessianSplit::apply_B_block(const BlockVector& v, int i) const {
  Vec out = (1.0 - W_.self_weight(i)) * v.block(i);
  for (int j : W_.neighbors(i)) out += W_(i, j) * v.block(j);
  return out;
}

Vec HessianSplit::solve_D_block(int i, const Vec& r) const { return factors_[i].solve(r); }

BlockVector HessianSplit::apply_D(const BlockVector& v, Exec exec) const {
  check_shape(v);
  BlockVector out(agents(), dim_);
  for_each_agent(exec, agents(), [&](int i) { out.block(i) = d_[i] * v.block(i); });
  return out;
}

BlockVector HessianSplit::apply_B(const BlockVector& v, Exec exec) const {
  check_shape(v);
  BlockVector out(agents(), dim_);
  for_each_agent(exec, agents(), [&](int i) { out.block(i) = apply_B_block(v, i); });
  return out;
}

BlockVector HessianSplit::apply_H(const BlockVector& v, Exec exec) const {
  check_shape(v);
  BlockVector out(agents(), dim_);
  for_each_agent(exec, agents(), [&](int i) { out.block(i) = d_[i] * v.block(i) - apply_B_block(v, i); });
  return out;
}

BlockVector HessianSplit::solve_D(const BlockVector& b, Exec exec) const {
  check_shape(b);
  BlockVector out(agents(), dim_);
  for_each_agent(exec, agents(), [&](int i) { out.block(i) = factors_[i].solve(Vec(b.block(i))); });
  return out;
}

HessianSplit hessian_split(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s,
                           Exec exec) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  check_state(p, W, s);
  std::vector<Mat> d(W.size());
  for_each_agent(exec, W.size(), [&](int i) {
    Mat h = p.local(i).hess_g_yy(s.x.block(i), s.y.block(i));
    if (Eigen::LLT<Mat>(h).info() != Eigen::Success) {
      throw std::domain_error("inner Hessian of agent " + std::to_string(i) +
                              " is not positive definite; the inner problem must be strongly convex");
    }
    h *= beta;
    h.diagonal().array() += 2.0 * (1.0 - W.self_weight(i));
    d[i] = std::move(h);
  });
  return HessianSplit(W, beta, std::move(d));
}

// ---------------------------------------------------------------------------

double rho_bound(double theta, double Theta, double beta, double mu_g) {
  if (!(theta > 0.0) || !(theta <= Theta) || !(Theta <= 1.0)) {
    throw std::invalid_argument("self-weight bounds must satisfy 0 < theta <= Theta <= 1 (theta=" +
                                std::to_string(theta) + ", Theta=" + std::to_string(Theta) + ")");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(mu_g > 0.0)) throw std::invalid_argument("mu_g must be positive");
  return 2.0 * (1.0 - theta) / (2.0 * (1.0 - Theta) + beta * mu_g);
}

NeumannBounds neumann_bounds(double theta, double Theta, double beta, double mu_g, double C_gyy, int U) {
  if (U < 0) throw std::invalid_argument("truncation order must be nonnegative");
  if (!(C_gyy >= mu_g)) throw std::invalid_argument("C_gyy must be at least mu_g");
  NeumannBounds nb;
  nb.rho = rho_bound(theta, Theta, beta, mu_g);
  nb.lambda = 1.0 / (2.0 * (1.0 - theta) + beta * C_gyy);
  // summed directly so that rho = 1 stays finite
  double series = 0.0, term = 1.0;
  for (int u = 0; u <= U; ++u) {
    series += term;
    term *= nb.rho;
  }
  nb.Lambda = series / (2.0 * (1.0 - Theta) + beta * mu_g);
  return nb;
}

InnerStepCap inner_step_cap(const ProblemConstants& k, const MixingMatrix& W) {
  k.check();
  const PenaltySpectrum spec = penalty_spectrum(W);
  InnerStepCap cap;
  cap.lambda_min_nonzero = spec.has_nonzero ? spec.lambda_min_nonzero : 0.0;
  cap.lambda_max = spec.lambda_max;
  const double mu = k.mu_g, L = k.L_g;
  cap.b_g = cap.lambda_min_nonzero + (mu + L > 0.0 ? mu * L / (mu + L) : 0.0);
  double bb = 1.0;
  if (spec.has_nonzero && spec.lambda_max > 0.0 && L > 0.0) bb = std::min(bb, cap.b_g / (spec.lambda_max * L));
  if (mu + L > 0.0) bb = std::min(bb, 2.0 / (mu + L));
  if (cap.b_g > 0.0) bb = std::min(bb, 1.0 / cap.b_g);
  cap.beta_bar = bb;
  return cap;
}

OuterSmoothness outer_smoothness(const ProblemConstants& k, const MixingMatrix& W) {
  k.check();
  const PenaltySpectrum spec = penalty_spectrum(W);
  OuterSmoothness out;
  out.mu_G = (spec.has_nonzero ? spec.lambda_min_nonzero : 0.0) + k.mu_g;
  const double mG = out.mu_G;
  const Maybe inv_mG = 1.0 / mG, inv_mG2 = 1.0 / (mG * mG);

  Maybe C = add(k.L_fx, mul(mul(k.C_gxy, k.L_fy), inv_mG));
  C = add(C, mul(k.C_fy, add(mul(k.L_gxy, inv_mG), mul(mul(k.C_gxy, k.L_gyy), inv_mG2))));
  out.C = C;

  Maybe LF = mul(mul(add(k.Lt_fy, C), k.C_gxy), inv_mG);
  LF = add(LF, k.L_fx);
  LF = add(LF, mul(k.C_fy, add(mul(mul(k.Lt_gxy, k.C_fy), inv_mG), mul(mul(k.C_gxy, k.Lt_gyy), inv_mG2))));
  out.L_F = LF;

  if (k.C_gxy) out.varrho = *k.C_gxy / k.mu_g;
  return out;
}

}  // namespace dbo
