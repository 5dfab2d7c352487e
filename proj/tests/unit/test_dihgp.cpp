#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dbo/dihgp.hpp"
#include "dbo/oracle.hpp"

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

HoDataset logistic_data(std::mt19937_64& rng, int agents, int dim) {
  HoDataset data;
  for (int i = 0; i < agents; ++i) {
    AgentData a;
    for (Samples* s : {&a.train, &a.val}) {
      s->features = Mat(6, dim);
      s->labels = Vec(6);
      for (int k = 0; k < 6; ++k) {
        s->features.row(k) = randn(rng, dim).transpose();
        s->labels(k) = k % 2 ? 1.0 : -1.0;
      }
    }
    data.agents.push_back(a);
  }
  return data;
}

}  // namespace

TEST(Dihgp, SingleNodeIsExactForEveryOrder) {
  std::mt19937_64 rng(1);
  const BilevelProblem p = ho_problem(Loss::logistic, logistic_data(rng, 1, 3), 0.5);
  const MixingMatrix W = metropolis_weights(Graph(1, {}));
  const StackedState s = random_state(rng, 1, 3, 3);
  const double beta = 0.3;
  const Mat h = beta * p.local(0).hess_g_yy(s.x.block(0), s.y.block(0));
  const Vec exact = -h.llt().solve(p.local(0).grad_f_y(s.x.block(0), s.y.block(0)));
  for (int U : {0, 1, 4}) EXPECT_LT((dihgp(p, W, beta, s, U).h.data() - exact).norm(), 1e-12 * exact.norm());
}

TEST(Dihgp, ZerothOrderIsDiagonalSolve) {
  std::mt19937_64 rng(2);
  const BilevelProblem p = random_quad_bilevel(5, 2, 3, 0.1, 3);
  const MixingMatrix W = metropolis_weights(random_connected_graph(5, 0.5, 4));
  const StackedState s = random_state(rng, 5, 2, 3);
  const oracle::DenseSplit ds = oracle::dense_split(p, W, 0.2, s);
  const Vec pv = oracle::stacked_grad_f_y(p, s);
  const Vec expected = -ds.D.llt().solve(pv);
  EXPECT_LT((dihgp(p, W, 0.2, s, 0).h.data() - expected).norm(), 1e-13);
}

TEST(Dihgp, ThreePathMatchesDenseSeries) {
  std::mt19937_64 rng(5);
  const BilevelProblem p = random_quad_bilevel(3, 2, 2, 0.1, 6);
  const MixingMatrix W = metropolis_weights(path_graph(3));
  const StackedState s = random_state(rng, 3, 2, 2);
  const double beta = 0.5;
  const oracle::DenseSplit ds = oracle::dense_split(p, W, beta, s);
  const Vec pv = oracle::stacked_grad_f_y(p, s);
  const Vec ref = oracle::dense_truncated_neumann(ds, pv, 5);
  EXPECT_LT((dihgp(p, W, beta, s, 5).h.data() - ref).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dihgp, NonQuadraticMatchesDenseSeries) {
  std::mt19937_64 rng(7);
  const BilevelProblem p = ho_problem(Loss::logistic, logistic_data(rng, 4, 2), 1.0);
  const MixingMatrix W = metropolis_weights(cycle_graph(4));
  const StackedState s = random_state(rng, 4, 2, 2);
  const oracle::DenseSplit ds = oracle::dense_split(p, W, 0.3, s);
  const Vec pv = oracle::stacked_grad_f_y(p, s);
  for (int U : {0, 3, 8}) {
    const Vec ref = oracle::dense_truncated_neumann(ds, pv, U);
    EXPECT_LT((dihgp(p, W, 0.3, s, U).h.data() - ref).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Dihgp, TraceShapeAndMessages) {
  std::mt19937_64 rng(8);
  const BilevelProblem p = random_quad_bilevel(6, 2, 3, 0.1, 9);
  const MixingMatrix W = metropolis_weights(random_connected_graph(6, 0.4, 10));
  const StackedState s = random_state(rng, 6, 2, 3);
  const int U = 4;
  const DihgpResult r = dihgp(p, W, 0.2, s, U);
  ASSERT_EQ(r.trace.iterates.size(), std::size_t(U + 1));
  ASSERT_EQ(r.trace.messages_per_round.size(), std::size_t(U));
  for (auto m : r.trace.messages_per_round) EXPECT_EQ(m, W.directed_edges());
  EXPECT_EQ(r.trace.total_messages(), U * W.directed_edges());
  EXPECT_EQ(r.trace.iterates.back(), r.h);

  std::ostringstream out;
  r.trace.write_jsonl(out);
  std::istringstream in(out.str());
  std::string line;
  int rounds = 0;
  while (std::getline(in, line)) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_EQ(rec.at("round").get<int>(), rounds);
    EXPECT_EQ(rec.at("h_norms").size(), 6u);
    ++rounds;
  }
  EXPECT_EQ(rounds, U + 1);

  const DihgpResult lean = dihgp(p, W, 0.2, s, U, Exec::serial, false);
  EXPECT_EQ(lean.h, r.h);
  EXPECT_TRUE(lean.trace.iterates.empty());
}

TEST(Dihgp, ZeroGradientGivesZero) {
  const BilevelProblem p = quad_bilevel({Mat::Identity(2, 2), Mat::Identity(2, 2)}, {Vec::Zero(2), Vec::Zero(2)},
                                        {Vec::Zero(2), Vec::Zero(2)}, 0.1);
  const MixingMatrix W = uniform_weights(2);
  const StackedState s{BlockVector(2, 2), BlockVector(2, 2)};
  for (int U : {0, 3, 10}) EXPECT_EQ(dihgp(p, W, 0.5, s, U).h.norm(), 0.0);
  const DihgpError e = dihgp_error(p, W, 0.5, s, 3);
  EXPECT_EQ(e.abs_err, 0.0);
}

TEST(Dihgp, LocalityOfOneRound) {
  std::mt19937_64 rng(11);
  const BilevelProblem p = random_quad_bilevel(7, 1, 2, 0.1, 12);
  const MixingMatrix W = metropolis_weights(path_graph(7));
  const StackedState s = random_state(rng, 7, 1, 2);
  const HessianSplit split = hessian_split(p, W, 0.2, s);
  const BlockVector pv = outer_inner_gradient(p, s);
  BlockVector h(7, 2, randn(rng, 14));
  auto next_block = [&](const BlockVector& hs, int i) { return split.solve_D_block(i, split.apply_B_block(hs, i) - pv.block(i)); };
  const Vec before = next_block(h, 2);
  for (int j : {0, 4, 5, 6}) h.block(j) += randn(rng, 2);
  EXPECT_EQ(next_block(h, 2), before);
}

TEST(Dihgp, SerialAndParallelAreBitIdentical) {
  std::mt19937_64 rng(13);
  const BilevelProblem p = random_quad_bilevel(40, 3, 3, 0.1, 14);
  const MixingMatrix W = metropolis_weights(random_connected_graph(40, 0.3, 15));
  const StackedState s = random_state(rng, 40, 3, 3);
  EXPECT_EQ(dihgp(p, W, 0.2, s, 6, Exec::serial).h, dihgp(p, W, 0.2, s, 6, Exec::parallel).h);
}

TEST(DihgpError, LargeOrderConvergesAndRejectsRhoAboveOne) {
  std::mt19937_64 rng(16);
  const BilevelProblem p = random_quad_bilevel(2, 2, 2, 0.1, 17);
  const MixingMatrix W = uniform_weights(2);  // θ = Θ = 1/2, β = 1 → ρ = 1/2
  const StackedState s = random_state(rng, 2, 2, 2);
  const DihgpError e = dihgp_error(p, W, 1.0, s, 200);
  EXPECT_NEAR(e.rho, 0.5, 1e-15);
  EXPECT_LE(e.abs_err, 1e-10);
  // max-degree weights on 4 agents with β = 0.1: ρ = 2.5
  EXPECT_THROW(dihgp_error(random_quad_bilevel(4, 1, 1, 0.1, 18), max_degree_weights(star_graph(4)), 0.1,
                           random_state(rng, 4, 1, 1), 2),
               std::domain_error);
}

TEST(DihgpError, MonotoneAndGeometricInOrder) {
  std::mt19937_64 rng(19);
  int tested = 0;
  while (tested < 50) {
    const int n = std::uniform_int_distribution<int>(2, 8)(rng);
    const int d = std::uniform_int_distribution<int>(1, 4)(rng);
    const MixingMatrix W = metropolis_weights(random_connected_graph(n, 0.6, rng()));
    const BilevelProblem p = random_quad_bilevel(n, d, d, 0.1, rng());
    const double beta = inner_step_cap(p.constants(), W).beta_bar;
    if (rho_bound(W.theta(), W.Theta(), beta, 1.0) >= 1.0) continue;
    ++tested;
    const StackedState s = random_state(rng, n, d, d);
    double prev = dihgp_error(p, W, beta, s, 0).abs_err;
    for (int U = 1; U <= 8; ++U) {
      const DihgpError e = dihgp_error(p, W, beta, s, U);
      EXPECT_LE(e.abs_err, prev * (1 + 1e-12) + 1e-14);
      if (prev > 1e-12) {
        EXPECT_LE(e.abs_err / prev, e.rho + 0.05);
      }
      EXPECT_LE(e.abs_err, e.bound * (1 + 1e-9) + 1e-14);
      prev = e.abs_err;
    }
  }
}
