#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dbo/oracle.hpp"
#include "dbo/problem.hpp"

using namespace dbo;

namespace {

Vec randn(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

template <class F>
Vec fd_grad(F&& fn, const Vec& z, double eps = 1e-6) {
  Vec g(z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Vec zp = z, zm = z;
    zp(k) += eps;
    zm(k) -= eps;
    g(k) = (fn(zp) - fn(zm)) / (2.0 * eps);
  }
  return g;
}

template <class F>
Mat fd_jac(F&& fn, const Vec& z, int rows, double eps = 1e-6) {
  Mat j(rows, z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Vec zp = z, zm = z;
    zp(k) += eps;
    zm(k) -= eps;
    j.col(k) = (fn(zp) - fn(zm)) / (2.0 * eps);
  }
  return j;
}

/// Checks every oracle of every agent against finite differences.
void check_oracles(const BilevelProblem& p, std::uint64_t seed, int points, double x_scale = 1.0) {
  std::mt19937_64 rng(seed);
  for (int t = 0; t < points; ++t) {
    const LocalObjective& f = p.local(t % p.agents());
    const Vec x = randn(rng, p.d1(), x_scale), y = randn(rng, p.d2());
    const auto fx = [&](const Vec& z) { return f.f_value(z, y); };
    const auto fy = [&](const Vec& z) { return f.f_value(x, z); };
    const auto gy = [&](const Vec& z) { return f.g_value(x, z); };
    EXPECT_LE(rel_err(f.grad_f_x(x, y), fd_grad(fx, x)), 1e-5);
    EXPECT_LE(rel_err(f.grad_f_y(x, y), fd_grad(fy, y)), 1e-5);
    EXPECT_LE(rel_err(f.grad_g_y(x, y), fd_grad(gy, y)), 1e-5);
    // ∂/∂x of ∇_y g is the d2 × d1 transpose of the cross block
    const Mat cross = fd_jac([&](const Vec& z) { return f.grad_g_y(z, y); }, x, p.d2());
    EXPECT_LE(rel_err(f.jac_g_xy(x, y), cross.transpose()), 1e-4);
    const Mat hess = fd_jac([&](const Vec& z) { return f.grad_g_y(x, z); }, y, p.d2());
    const Mat h = f.hess_g_yy(x, y);
    EXPECT_LE(rel_err(h, hess), 1e-4);
    EXPECT_LT((h - h.transpose()).norm(), 1e-12);
    const double min_eig = Eigen::SelfAdjointEigenSolver<Mat>(h).eigenvalues().minCoeff();
    EXPECT_GE(min_eig, p.constants().mu_g - 1e-8);
    EXPECT_TRUE(std::isfinite(f.f_value(x, y)) && std::isfinite(f.g_value(x, y)));
  }
}

Samples random_samples(std::mt19937_64& rng, int m, int dim, Loss loss, int classes = 0) {
  Samples s;
  s.features = Mat(m, dim);
  s.labels = Vec(m);
  std::uniform_int_distribution<int> cls(0, std::max(classes - 1, 0));
  for (int k = 0; k < m; ++k) {
    s.features.row(k) = randn(rng, dim).transpose();
    switch (loss) {
      case Loss::linear: s.labels(k) = randn(rng, 1)(0); break;
      case Loss::logistic:
      case Loss::smoothed_svm: s.labels(k) = (k % 2 == 0) ? 1.0 : -1.0; break;
      case Loss::softmax: s.labels(k) = cls(rng); break;
    }
  }
  return s;
}

HoDataset random_dataset(Loss loss, int agents, int dim, std::uint64_t seed, int classes = 0) {
  std::mt19937_64 rng(seed);
  HoDataset data;
  data.num_classes = classes;
  for (int i = 0; i < agents; ++i) {
    data.agents.push_back({random_samples(rng, 8, dim, loss, classes), random_samples(rng, 5, dim, loss, classes)});
  }
  data.test = random_samples(rng, 5, dim, loss, classes);
  return data;
}

}  // namespace

TEST(Quad, DecoupledSingleNode) {
  const BilevelProblem p = quad_bilevel({Mat::Zero(2, 2)}, {Vec::Zero(2)}, {Vec::Zero(2)}, 1.0);
  ASSERT_TRUE(p.quadratic());
  EXPECT_LT(p.quadratic()->x_star().norm(), 1e-14);
  EXPECT_LT(p.quadratic()->inner_solution(Vec::Ones(2)).norm(), 1e-14);
  EXPECT_NEAR(p.quadratic()->f_star(), 0.0, 1e-14);
}

TEST(Quad, SymmetricTargetsGiveZeroMinimizer) {
  const Vec c = Vec::LinSpaced(3, 1.0, 3.0);
  const BilevelProblem p = quad_bilevel({Mat::Identity(3, 3), Mat::Identity(3, 3)}, {Vec::Zero(3), Vec::Zero(3)},
                                        {c, Vec(-c)}, 0.3);
  const Vec x = Vec::Constant(3, 0.7);
  EXPECT_LT((p.quadratic()->inner_solution(x) - x).norm(), 1e-14);
  EXPECT_LT(p.quadratic()->x_star().norm(), 1e-12);
}

TEST(Quad, ClosedFormMatchesCentralizedDescent) {
  const BilevelProblem p = random_quad_bilevel(4, 3, 3, 0.2, 17);
  const Vec xs = p.quadratic()->x_star();
  const oracle::CentralizedResult gd = oracle::centralized_bilevel_gd(p, 100000, 1e-12);
  EXPECT_LT((gd.x - xs).norm(), 1e-8);
  EXPECT_LT(p.quadratic()->outer_gradient(xs).norm(), 1e-10);
}

TEST(Quad, ExactConstants) {
  const BilevelProblem p = random_quad_bilevel(3, 2, 4, 0.5, 3);
  const ProblemConstants& k = p.constants();
  EXPECT_EQ(k.mu_g, 1.0);
  EXPECT_EQ(k.L_g, 1.0);
  EXPECT_EQ(k.C_gyy, 1.0);
  ASSERT_TRUE(k.mu_f);
  EXPECT_EQ(*k.mu_f, 0.5);
  ASSERT_TRUE(k.C_gxy);
  double max_norm = 0.0;
  for (int i = 0; i < 3; ++i)
    max_norm = std::max(max_norm, Eigen::JacobiSVD<Mat>(p.local(i).jac_g_xy(Vec::Zero(2), Vec::Zero(4)))
                                      .singularValues()(0));
  EXPECT_NEAR(*k.C_gxy, max_norm, 1e-12);
}

TEST(Quad, DimensionMismatchRejected) {
  EXPECT_THROW(quad_bilevel({Mat::Zero(2, 2)}, {Vec::Zero(3)}, {Vec::Zero(2)}, 0.0), std::invalid_argument);
  EXPECT_THROW(quad_bilevel({Mat::Zero(2, 2)}, {Vec::Zero(2)}, {Vec::Zero(2)}, -1.0), std::invalid_argument);
}

TEST(Quad, OraclesMatchFiniteDifferences) { check_oracles(random_quad_bilevel(3, 3, 4, 0.1, 5), 1, 100); }

TEST(Ho, LinearHandExample) {
  HoDataset data;
  Samples s;
  s.features = Mat(1, 2);
  s.features << 1, 0;
  s.labels = Vec::Ones(1);
  data.agents.push_back({s, s});
  const BilevelProblem p = ho_problem(Loss::linear, data, 1e-3);
  const Vec y = (Vec(2) << 1, 0).finished();
  // squared residual 0, regularizer y·exp(0) = 1, ridge 1e-3/2
  EXPECT_NEAR(p.local(0).g_value(Vec::Zero(2), y), 1.0 + 0.5e-3, 1e-15);
}

TEST(Ho, LogisticAtZeroIsLogTwoPerSample) {
  const HoDataset data = random_dataset(Loss::logistic, 1, 3, 2);
  const Samples& s = data.agents[0].train;
  EXPECT_NEAR(loss_value(Loss::logistic, s, Vec::Zero(3)), s.count() * std::log(2.0), 1e-12);
}

TEST(Ho, RegularizerVanishesForVeryNegativeX) {
  const HoDataset data = random_dataset(Loss::linear, 1, 2, 3);
  const BilevelProblem p = ho_problem(Loss::linear, data, 0.0);
  const Vec y = Vec::Constant(2, 0.4);
  const double pure = loss_value(Loss::linear, data.agents[0].train, y);
  EXPECT_NEAR(p.local(0).g_value(Vec::Constant(2, -20.0), y), pure, 1e-8);
}

TEST(Ho, GradientXOfOuterIsZero) {
  const BilevelProblem p = ho_problem(Loss::linear, random_dataset(Loss::linear, 2, 2, 4), 0.0);
  EXPECT_EQ(p.local(1).grad_f_x(Vec::Ones(2), Vec::Ones(2)).norm(), 0.0);
}

TEST(Ho, EveryLossMatchesFiniteDifferences) {
  check_oracles(ho_problem(Loss::linear, random_dataset(Loss::linear, 2, 3, 6), 0.0), 2, 30, 0.5);
  check_oracles(ho_problem(Loss::logistic, random_dataset(Loss::logistic, 2, 3, 7), 0.5), 3, 30, 0.5);
  check_oracles(ho_problem(Loss::smoothed_svm, random_dataset(Loss::smoothed_svm, 2, 3, 8), 0.5), 4, 30, 0.5);
  check_oracles(ho_problem(Loss::softmax, random_dataset(Loss::softmax, 2, 2, 9, 3), 0.5), 5, 30, 0.5);
}

TEST(Ho, LabelAndLossValidation) {
  HoDataset bad = random_dataset(Loss::logistic, 1, 2, 10);
  bad.agents[0].train.labels(0) = 0.5;
  EXPECT_THROW(ho_problem(Loss::logistic, bad, 1.0), std::invalid_argument);
  HoDataset bad_cls = random_dataset(Loss::softmax, 1, 2, 11, 3);
  bad_cls.agents[0].val.labels(0) = 3.0;
  EXPECT_THROW(ho_problem(Loss::softmax, bad_cls, 1.0), std::invalid_argument);
  EXPECT_THROW(parse_loss("hinge"), std::invalid_argument);
  EXPECT_THROW(parse_loss("svm"), std::invalid_argument);
  EXPECT_EQ(parse_loss("smoothed_svm"), Loss::smoothed_svm);
  EXPECT_THROW(ho_problem(Loss::logistic, random_dataset(Loss::logistic, 1, 2, 12), 0.0), std::invalid_argument);
}

TEST(Ho, DeclaredConstantsHoldEmpirically) {
  for (Loss loss : {Loss::linear, Loss::logistic, Loss::smoothed_svm}) {
    const BilevelProblem p = ho_problem(loss, random_dataset(loss, 3, 3, 13), 0.2);
    const ConstantsReport rep = verify_constants(p, 200, 21);
    EXPECT_TRUE(rep.ok()) << to_string(loss);
  }
}

TEST(Ho, LogisticSmoothnessBound) {
  const HoDataset data = random_dataset(Loss::logistic, 2, 3, 14);
  const double ridge = 0.01;
  const BilevelProblem p = ho_problem(Loss::logistic, data, ridge);
  double bound = 0.0;
  for (const auto& a : data.agents) {
    const Mat z = a.train.features;
    bound = std::max(bound, 0.25 * Eigen::SelfAdjointEigenSolver<Mat>(z.transpose() * z).eigenvalues().maxCoeff());
  }
  EXPECT_LE(p.constants().L_g, bound + ridge + 1e-12);
  const ConstantsReport rep = verify_constants(p, 300, 22);
  ASSERT_NE(rep.find("L_g"), nullptr);
  EXPECT_FALSE(rep.find("L_g")->violated);
}

TEST(VerifyConstants, QuadPassesAndUnderstatementFlagged) {
  BilevelProblem p = random_quad_bilevel(3, 3, 3, 0.1, 15, 2.0);
  EXPECT_TRUE(verify_constants(p, 100, 1).ok());
  ASSERT_NE(verify_constants(p, 100, 1).find("mu_g"), nullptr);
  EXPECT_FALSE(verify_constants(p, 100, 1).find("mu_g")->violated);
  p.mutable_constants().C_gxy = 0.5 * *p.constants().C_gxy;
  const ConstantsReport rep = verify_constants(p, 100, 1);
  EXPECT_FALSE(rep.ok());
  EXPECT_TRUE(rep.find("C_gxy")->violated);
}

TEST(Synthetic, NoiselessRecoversSignal) {
  const SyntheticRegression s = synthetic_regression_data(3, 4, 0.0, 40, 5, 10);
  Mat z(0, 4);
  Vec b(0);
  for (const auto& a : s.data.agents) {
    for (const Samples* part : {&a.train, &a.val}) {
      z.conservativeResize(z.rows() + part->count(), Eigen::NoChange);
      b.conservativeResize(b.size() + part->count());
      z.bottomRows(part->count()) = part->features;
      b.tail(part->count()) = part->labels;
    }
  }
  const Vec fit = z.colPivHouseholderQr().solve(b);
  EXPECT_LT((fit - s.truth).norm(), 1e-10);
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
  auto bytes = [](std::uint64_t seed) {
    std::ostringstream out;
    write_dataset_csv(out, synthetic_regression_data(4, 2, 0.25, 10, seed, 20).data);
    return out.str();
  };
  EXPECT_EQ(bytes(1), bytes(1));
  EXPECT_NE(bytes(1), bytes(2));
}

TEST(Synthetic, PaperScaleShapes) {
  const SyntheticRegression s = synthetic_regression_data(100, 2, 0.25, 100, 1);
  EXPECT_EQ(s.data.agents.size(), 100u);
  EXPECT_EQ(s.data.agents[0].train.count(), 50);
  EXPECT_EQ(s.data.agents[0].val.count(), 50);
  EXPECT_EQ(s.data.test.count(), 1000);
  EXPECT_EQ(s.truth.size(), 2);
}

TEST(DatasetCsv, RoundTrip) {
  const HoDataset data = random_dataset(Loss::softmax, 2, 3, 16, 4);
  std::stringstream ss;
  write_dataset_csv(ss, data);
  const HoDataset back = read_dataset_csv(ss);
  ASSERT_EQ(back.agents.size(), 2u);
  EXPECT_LT((back.agents[1].val.features - data.agents[1].val.features).norm(), 1e-15);
  EXPECT_EQ(back.agents[0].train.labels, data.agents[0].train.labels);
  EXPECT_EQ(back.test.count(), data.test.count());
}
