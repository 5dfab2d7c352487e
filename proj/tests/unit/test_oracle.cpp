#include <gtest/gtest.h>

#include <random>

#include "dbo/oracle.hpp"
#include "dbo/penalty.hpp"

using namespace dbo;

namespace {

Vec randn(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd;
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

StackedState random_state(std::mt19937_64& rng, int n, int d1, int d2) {
  return {BlockVector(n, d1, randn(rng, Eigen::Index(n) * d1)), BlockVector(n, d2, randn(rng, Eigen::Index(n) * d2))};
}

}  // namespace

TEST(DenseAssemble, SingleNodeIsScaledHessian) {
  std::mt19937_64 rng(1);
  const BilevelProblem p = random_quad_bilevel(1, 2, 3, 0.1, 2);
  const StackedState s = random_state(rng, 1, 2, 3);
  const oracle::DenseSystem sys = oracle::dense_assemble(p, metropolis_weights(Graph(1, {})), 0.7, s);
  const Mat expected = 0.7 * p.local(0).hess_g_yy(s.x.block(0), s.y.block(0));
  EXPECT_LT((sys.H - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(sys.laplacian_x.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DenseAssemble, OffDiagonalBlocksAreNegatedWeights) {
  std::mt19937_64 rng(3);
  const BilevelProblem p = random_quad_bilevel(4, 2, 2, 0.1, 4);
  const MixingMatrix W = metropolis_weights(cycle_graph(4));
  const oracle::DenseSystem sys = oracle::dense_assemble(p, W, 0.3, random_state(rng, 4, 2, 2));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i == j) continue;
      EXPECT_LT((sys.H.block(2 * i, 2 * j, 2, 2) + W(i, j) * Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
    }
  EXPECT_LT((sys.H - sys.H.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DenseAssemble, AgreesWithBlockwiseOperators) {
  std::mt19937_64 rng(5);
  const BilevelProblem p = random_quad_bilevel(6, 2, 3, 0.1, 6);
  const MixingMatrix W = metropolis_weights(random_connected_graph(6, 0.5, 7));
  const StackedState s = random_state(rng, 6, 2, 3);
  const oracle::DenseSystem sys = oracle::dense_assemble(p, W, 0.25, s);
  const oracle::DenseSplit ds = oracle::dense_split(p, W, 0.25, s);
  EXPECT_LT((sys.H - (ds.D - ds.B)).cwiseAbs().maxCoeff(), 1e-14);
  const HessianSplit split = hessian_split(p, W, 0.25, s);
  for (int t = 0; t < 20; ++t) {
    const BlockVector v(6, 3, randn(rng, 18));
    EXPECT_LT((split.apply_H(v).data() - sys.H * v.data()).norm(), 1e-12);
  }
}

TEST(DenseNeumann, ZerothOrderAndLimit) {
  std::mt19937_64 rng(8);
  const BilevelProblem p = random_quad_bilevel(3, 2, 2, 0.1, 9);
  const MixingMatrix W = metropolis_weights(path_graph(3));
  const StackedState s = random_state(rng, 3, 2, 2);
  const double beta = 0.5;
  const oracle::DenseSplit ds = oracle::dense_split(p, W, beta, s);
  const Vec pv = oracle::stacked_grad_f_y(p, s);
  EXPECT_LT((oracle::dense_truncated_neumann(ds, pv, 0) + ds.D.llt().solve(pv)).norm(), 1e-13);
  const Vec exact = oracle::dense_ihgp(oracle::dense_assemble(p, W, beta, s), pv);
  EXPECT_LT((oracle::dense_truncated_neumann(ds, pv, 400) - exact).norm(), 1e-10 * exact.norm());
  const Mat Dm = oracle::inv_sqrt_spd(ds.D);
  EXPECT_LT((Dm * ds.D * Dm - Mat::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FdHypergradient, MatchesAnalytic) {
  std::mt19937_64 rng(10);
  const BilevelProblem p = random_quad_bilevel(4, 2, 2, 0.2, 11);
  const MixingMatrix W = metropolis_weights(cycle_graph(4));
  const BlockVector x(4, 2, randn(rng, 8));
  const Vec an = oracle::analytic_penalized_hypergradient(p, W, 0.3, 0.4, x);
  const Vec fd = oracle::fd_hypergradient(p, W, 0.3, 0.4, x, 1e-5);
  EXPECT_LE((an - fd).norm() / an.norm(), 1e-6);
  EXPECT_THROW(oracle::fd_hypergradient(p, W, 0.3, 0.4, x, 1e-8), std::invalid_argument);
  EXPECT_THROW(oracle::fd_hypergradient(p, W, 0.3, 0.4, x, 1e-3), std::invalid_argument);
}

TEST(PenalizedInner, StationaryAndRecoversConsensusForTinyStep) {
  std::mt19937_64 rng(12);
  const BilevelProblem p = random_quad_bilevel(5, 2, 3, 0.1, 13);
  const MixingMatrix W = metropolis_weights(random_connected_graph(5, 0.5, 14));
  const BlockVector x(5, 2, randn(rng, 10));
  const BlockVector y = oracle::penalized_inner_solution(p, W, 0.3, x);
  EXPECT_LT(inner_penalized_grad(p, W, 0.3, StackedState{x, y}).norm(), 1e-9);
  const BlockVector yt = oracle::penalized_inner_solution(p, W, 1e-7, x);
  const Vec yc = oracle::constrained_inner_solution(p, x);
  EXPECT_LT((yt.data() - BlockVector::replicate(5, yc).data()).norm(), 1e-4);
}

TEST(Centralized, GradientDescentFindsClosedFormOptimum) {
  const BilevelProblem p = random_quad_bilevel(4, 3, 2, 0.3, 15);
  const auto res = oracle::centralized_bilevel_gd(p, 100000, 1e-11);
  EXPECT_LT((res.x - p.quadratic()->x_star()).norm(), 1e-8);
  EXPECT_NEAR(res.f, p.quadratic()->f_star(), 1e-10);
  EXPECT_NEAR(oracle::outer_objective(p, res.x), res.f, 1e-14);
  const Vec xr = Vec::Constant(3, 0.7);
  EXPECT_LT((oracle::bilevel_gradient(p, xr) - p.quadratic()->outer_gradient(xr)).norm(), 1e-10);
  EXPECT_LT((oracle::inner_solution(p, xr) - p.quadratic()->inner_solution(xr)).norm(), 1e-10);
}

TEST(Centralized, HeavyRegularizationPinsOptimumNearZero) {
  const BilevelProblem p = random_quad_bilevel(3, 2, 2, 1e6, 16);
  EXPECT_LT(p.quadratic()->x_star().norm(), 1e-4);
  EXPECT_LT(oracle::centralized_bilevel_gd(p, 1000, 1e-3).x.norm(), 1e-4);
}

TEST(Centralized, LinearHyperparameterToyIsStationary) {
  HoDataset data;
  AgentData a;
  a.train.features = Mat(2, 1);
  a.train.features << 1.0, -0.5;
  a.train.labels = Vec(2);
  a.train.labels << 1.0, 0.2;
  a.val.features = Mat(2, 1);
  a.val.features << 0.8, 0.3;
  a.val.labels = Vec(2);
  a.val.labels << 0.3, 0.05;
  data.agents.push_back(a);
  const BilevelProblem p = ho_problem(Loss::linear, data, 0.1);
  const auto res = oracle::centralized_bilevel_gd(p, 100000, 1e-9);
  EXPECT_LT(oracle::bilevel_gradient(p, res.x).norm(), 1e-7);
}

TEST(AidReference, FirstStepIsGradientStep) {
  const BilevelProblem p = random_quad_bilevel(2, 2, 2, 0.2, 17);
  const Vec x0 = Vec::Constant(2, 0.5);
  const auto xs = oracle::aid_reference(p, x0, 0.1, 3);
  ASSERT_EQ(xs.size(), 4u);
  EXPECT_LT((xs[1] - (x0 - 0.1 * p.quadratic()->outer_gradient(x0))).norm(), 1e-10);
}

TEST(RequireSmall, RejectsLargeInstances) {
  EXPECT_NO_THROW(oracle::require_small(16, 8));
  EXPECT_THROW(oracle::require_small(17, 2), std::length_error);
  EXPECT_THROW(oracle::require_small(4, 9), std::length_error);
  std::mt19937_64 rng(18);
  const BilevelProblem p = random_quad_bilevel(20, 1, 1, 0.1, 19);
  EXPECT_THROW(oracle::dense_assemble(p, metropolis_weights(cycle_graph(20)), 0.1, random_state(rng, 20, 1, 1)),
               std::length_error);
}
