#include "dbo/oracle.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

namespace dbo::oracle {

namespace {

Mat laplacian(const MixingMatrix& W) { return Mat::Identity(W.size(), W.size()) - W.dense(); }

Mat kron_identity(const Mat& a, int d) { return Eigen::kroneckerProduct(a, Mat::Identity(d, d)); }

struct NewtonProblem {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hess;
};

// Damped Newton for a smooth strongly convex objective.
Vec newton_minimize(const NewtonProblem& prob, Vec y, double tol, const char* what) {
  constexpr int max_iter = 200;
  const double g0 = std::max(1.0, prob.grad(y).norm());
  for (int it = 0; it < max_iter; ++it) {
    const Vec g = prob.grad(y);
    if (g.norm() <= tol * g0) return y;
    const Mat h = prob.hess(y);
    Eigen::LLT<Mat> llt(h);
    if (llt.info() != Eigen::Success) throw std::runtime_error(std::string(what) + ": Hessian not positive definite");
    const Vec step = -llt.solve(g);
    const double f0 = prob.value(y), slope = g.dot(step);
    double t = 1.0;
    while (t > 1e-12 && prob.value(y + t * step) > f0 + 1e-4 * t * slope) t *= 0.5;
    y += t * step;
    if (step.norm() * t <= 1e-15 * (1.0 + y.norm())) {
      // no further progress in floating point; accept if close
      if (prob.grad(y).norm() <= 1e3 * tol * g0) return y;
      break;
    }
  }
  throw std::runtime_error(std::string(what) + ": Newton did not reach tolerance " + std::to_string(tol));
}

NewtonProblem penalized_inner(const BilevelProblem& p, const MixingMatrix& W, double beta, const BlockVector& x) {
  const int n = p.agents(), d = p.d2();
  const Mat L = kron_identity(laplacian(W), d);
  NewtonProblem np;
  np.value = [&p, L, x, beta, n, d](const Vec& y) {
    double v = 0.5 * y.dot(L * y) / beta;
    for (int i = 0; i < n; ++i) v += p.local(i).g_value(x.block(i), y.segment(i * d, d));
    return v;
  };
  np.grad = [&p, L, x, beta, n, d](const Vec& y) {
    Vec g = L * y / beta;
    for (int i = 0; i < n; ++i) g.segment(i * d, d) += p.local(i).grad_g_y(x.block(i), y.segment(i * d, d));
    return g;
  };
  np.hess = [&p, L, x, beta, n, d](const Vec& y) {
    Mat h = L / beta;
    for (int i = 0; i < n; ++i) h.block(i * d, i * d, d, d) += p.local(i).hess_g_yy(x.block(i), y.segment(i * d, d));
    return h;
  };
  return np;
}

BlockVector solve_penalized(const BilevelProblem& p, const MixingMatrix& W, double beta, const BlockVector& x,
                            const Vec& y0, double tol) {
  const NewtonProblem np = penalized_inner(p, W, beta, x);
  return BlockVector(p.agents(), p.d2(), newton_minimize(np, y0, tol, "penalized inner solve"));
}

void check_inputs(const BilevelProblem& p, const MixingMatrix& W, const BlockVector& x) {
  if (p.agents() != W.size()) throw std::invalid_argument("oracle: problem and network sizes differ");
  if (x.blocks() != W.size() || x.dim() != p.d1()) throw std::invalid_argument("oracle: x has the wrong shape");
  require_small(W.size(), std::max(p.d1(), p.d2()));
}

}  // namespace

void require_small(int n, int d) {
  if (n > max_agents || d > max_dim) {
    throw std::length_error("dense oracle limited to n <= " + std::to_string(max_agents) + " and d <= " +
                            std::to_string(max_dim) + " (got n=" + std::to_string(n) + ", d=" + std::to_string(d) +
                            ")");
  }
}

DenseSystem dense_assemble(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s) {
  check_inputs(p, W, s.x);
  const int n = W.size(), d2 = p.d2();
  DenseSystem sys;
  sys.H = kron_identity(laplacian(W), d2);
  for (int i = 0; i < n; ++i) {
    sys.H.block(i * d2, i * d2, d2, d2) += beta * p.local(i).hess_g_yy(s.x.block(i), s.y.block(i));
  }
  sys.laplacian_x = kron_identity(laplacian(W), p.d1());
  return sys;
}

DenseSplit dense_split(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s) {
  check_inputs(p, W, s.x);
  const int n = W.size(), d = p.d2();
  DenseSplit split;
  split.D = Mat::Zero(n * d, n * d);
  split.B = Mat::Zero(n * d, n * d);
  const Mat I = Mat::Identity(d, d);
  for (int i = 0; i < n; ++i) {
    split.D.block(i * d, i * d, d, d) =
        beta * p.local(i).hess_g_yy(s.x.block(i), s.y.block(i)) + 2.0 * (1.0 - W(i, i)) * I;
    for (int j = 0; j < n; ++j) {
      if (i == j) split.B.block(i * d, i * d, d, d) = (1.0 - W(i, i)) * I;
      else if (W(i, j) != 0.0) split.B.block(i * d, j * d, d, d) = W(i, j) * I;
    }
  }
  return split;
}

Mat inv_sqrt_spd(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
    throw std::runtime_error("inv_sqrt_spd: matrix is not positive definite");
  }
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

Vec dense_ihgp(const DenseSystem& sys, const Vec& p) {
  Eigen::LLT<Mat> llt(sys.H);
  if (llt.info() != Eigen::Success) throw std::runtime_error("dense_ihgp: H is not positive definite");
  return -llt.solve(p);
}

Mat dense_truncated_inverse(const DenseSplit& split, int U) {
  if (U < 0) throw std::invalid_argument("truncation order must be nonnegative");
  const Mat r = inv_sqrt_spd(split.D);
  const Mat X = r * split.B * r;
  Mat power = Mat::Identity(X.rows(), X.cols());
  Mat sum = power;
  for (int u = 1; u <= U; ++u) {
    power = power * X;
    sum += power;
  }
  return r * sum * r;
}

Vec dense_truncated_neumann(const DenseSplit& split, const Vec& p, int U) {
  return -(dense_truncated_inverse(split, U) * p);
}

Vec stacked_grad_f_y(const BilevelProblem& p, const StackedState& s) {
  Vec out(Eigen::Index(p.agents()) * p.d2());
  for (int i = 0; i < p.agents(); ++i) {
    out.segment(i * p.d2(), p.d2()) = p.local(i).grad_f_y(s.x.block(i), s.y.block(i));
  }
  return out;
}

BlockVector penalized_inner_solution(const BilevelProblem& p, const MixingMatrix& W, double beta, const BlockVector& x,
                                     double tol) {
  check_inputs(p, W, x);
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  return solve_penalized(p, W, beta, x, Vec::Zero(Eigen::Index(p.agents()) * p.d2()), tol);
}

double penalized_outer_value(const BilevelProblem& p, const MixingMatrix& W, double alpha, const BlockVector& x,
                             const BlockVector& y) {
  const Mat L = kron_identity(laplacian(W), p.d1());
  double v = 0.5 * x.data().dot(L * x.data()) / alpha;
  for (int i = 0; i < p.agents(); ++i) v += p.local(i).f_value(x.block(i), y.block(i));
  return v;
}

Vec fd_hypergradient(const BilevelProblem& p, const MixingMatrix& W, double alpha, double beta, const BlockVector& x,
                     double eps) {
  check_inputs(p, W, x);
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw std::invalid_argument("finite-difference step must lie in [1e-7, 1e-4]");
  const Vec y0 = penalized_inner_solution(p, W, beta, x).data();
  auto F = [&](const BlockVector& xs) {
    const BlockVector y = solve_penalized(p, W, beta, xs, y0, 1e-11);
    return penalized_outer_value(p, W, alpha, xs, y);
  };
  Vec g(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    BlockVector xp = x, xm = x;
    xp.data()(c) += eps;
    xm.data()(c) -= eps;
    g(c) = (F(xp) - F(xm)) / (2.0 * eps);
  }
  return g;
}

Vec analytic_penalized_hypergradient(const BilevelProblem& p, const MixingMatrix& W, double alpha, double beta,
                                     const BlockVector& x) {
  check_inputs(p, W, x);
  const int n = p.agents(), d1 = p.d1(), d2 = p.d2();
  const BlockVector y = penalized_inner_solution(p, W, beta, x);
  const StackedState s{x, y};
  const DenseSystem sys = dense_assemble(p, W, beta, s);
  const Vec h = dense_ihgp(sys, stacked_grad_f_y(p, s));
  Vec g = sys.laplacian_x * x.data() / alpha;
  for (int i = 0; i < n; ++i) {
    g.segment(i * d1, d1) += p.local(i).grad_f_x(x.block(i), y.block(i)) +
                             beta * p.local(i).jac_g_xy(x.block(i), y.block(i)) * h.segment(i * d2, d2);
  }
  return g;
}

// ---------------------------------------------------------------------------

Vec constrained_inner_solution(const BilevelProblem& p, const BlockVector& x, double tol) {
  if (x.blocks() != p.agents() || x.dim() != p.d1()) throw std::invalid_argument("inner solve: x has the wrong shape");
  const int n = p.agents();
  NewtonProblem np;
  np.value = [&](const Vec& y) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += p.local(i).g_value(x.block(i), y);
    return v / n;
  };
  np.grad = [&](const Vec& y) {
    Vec g = Vec::Zero(p.d2());
    for (int i = 0; i < n; ++i) g += p.local(i).grad_g_y(x.block(i), y);
    return Vec(g / n);
  };
  np.hess = [&](const Vec& y) {
    Mat h = Mat::Zero(p.d2(), p.d2());
    for (int i = 0; i < n; ++i) h += p.local(i).hess_g_yy(x.block(i), y);
    return Mat(h / n);
  };
  return newton_minimize(np, Vec::Zero(p.d2()), tol, "inner solve");
}

Vec inner_solution(const BilevelProblem& p, const Vec& x, double tol) {
  if (x.size() != p.d1()) throw std::invalid_argument("inner_solution: x has the wrong length");
  return constrained_inner_solution(p, BlockVector::replicate(p.agents(), x), tol);
}

double outer_objective(const BilevelProblem& p, const Vec& x) {
  const Vec y = inner_solution(p, x);
  double v = 0.0;
  for (int i = 0; i < p.agents(); ++i) v += p.local(i).f_value(x, y);
  return v / p.agents();
}

Vec bilevel_gradient(const BilevelProblem& p, const Vec& x) {
  const Vec y = inner_solution(p, x);
  const int n = p.agents();
  Mat hs = Mat::Zero(p.d2(), p.d2()), js = Mat::Zero(p.d1(), p.d2());
  Vec fx = Vec::Zero(p.d1()), fy = Vec::Zero(p.d2());
  for (int i = 0; i < n; ++i) {
    const auto& f = p.local(i);
    hs += f.hess_g_yy(x, y);
    js += f.jac_g_xy(x, y);
    fx += f.grad_f_x(x, y);
    fy += f.grad_f_y(x, y);
  }
  return (fx - js * hs.llt().solve(fy)) / n;
}

CentralizedResult centralized_bilevel_gd(const BilevelProblem& p, int steps, double tol, const Vec& x0) {
  CentralizedResult r;
  r.x = x0.size() == 0 ? Vec::Zero(p.d1()) : x0;
  double f = outer_objective(p, r.x);
  double t = 1.0;
  for (int it = 0; it <= steps; ++it) {
    const Vec g = bilevel_gradient(p, r.x);
    r.grad_norm = g.norm();
    r.iterations = it;
    if (r.grad_norm <= tol) {
      r.f = f;
      return r;
    }
    if (it == steps) break;
    t = std::min(1.0, 4.0 * t);
    while (true) {
      const Vec xn = r.x - t * g;
      const double fn = outer_objective(p, xn);
      // below rounding resolution of f the decrease test is meaningless; fall back to the gradient norm
      const bool flat = std::abs(f - fn) <= 1e-12 * (1.0 + std::abs(f));
      if (fn <= f - 1e-4 * t * g.squaredNorm() || (flat && bilevel_gradient(p, xn).norm() < r.grad_norm) ||
          t < 1e-14) {
        r.x = xn;
        f = fn;
        break;
      }
      t *= 0.5;
    }
  }
  throw std::runtime_error("centralized bilevel descent stopped at gradient norm " + std::to_string(r.grad_norm) +
                           " after " + std::to_string(steps) + " steps (tolerance " + std::to_string(tol) + ")");
}

std::vector<Vec> aid_reference(const BilevelProblem& p, const Vec& x0, double alpha, int K) {
  std::vector<Vec> xs{x0};
  for (int k = 0; k < K; ++k) xs.push_back(xs.back() - alpha * bilevel_gradient(p, xs.back()));
  return xs;
}

}  // namespace dbo::oracle
