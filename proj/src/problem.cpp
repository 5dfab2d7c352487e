#include "dbo/problem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace dbo {

namespace {

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

double sym_max_eig(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double sym_min_eig(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

class QuadLocal final : public LocalObjective {
 public:
  QuadLocal(Mat A, Vec b, Vec c, double reg) : A_(std::move(A)), b_(std::move(b)), c_(std::move(c)), reg_(reg) {}

  int outer_dim() const override { return int(A_.cols()); }
  int inner_dim() const override { return int(A_.rows()); }

  double f_value(const Vec& x, const Vec& y) const override {
    return 0.5 * (y - c_).squaredNorm() + 0.5 * reg_ * x.squaredNorm();
  }
  Vec grad_f_x(const Vec& x, const Vec&) const override { return reg_ * x; }
  Vec grad_f_y(const Vec&, const Vec& y) const override { return y - c_; }

  double g_value(const Vec& x, const Vec& y) const override { return 0.5 * (y - A_ * x - b_).squaredNorm(); }
  Vec grad_g_y(const Vec& x, const Vec& y) const override { return y - A_ * x - b_; }
  Mat jac_g_xy(const Vec&, const Vec&) const override { return -A_.transpose(); }
  Mat hess_g_yy(const Vec&, const Vec&) const override { return Mat::Identity(A_.rows(), A_.rows()); }

 private:
  Mat A_;
  Vec b_;
  Vec c_;
  double reg_;
};

// logistic helpers, numerically stable in both tails
double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }
double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void check_binary_labels(const Samples& s, const char* what) {
  for (Eigen::Index k = 0; k < s.labels.size(); ++k) {
    if (s.labels(k) != 1.0 && s.labels(k) != -1.0) {
      throw std::invalid_argument(std::string(what) + " labels must be -1 or +1");
    }
  }
}

void check_class_labels(const Samples& s, int num_classes) {
  for (Eigen::Index k = 0; k < s.labels.size(); ++k) {
    const double l = s.labels(k);
    if (l != std::floor(l) || l < 0 || l >= num_classes) {
      throw std::invalid_argument("softmax labels must be integers in [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Mat augmented(const Samples& s) {
  Mat z(s.count(), s.dim() + 1);
  z.leftCols(s.dim()) = s.features;
  z.col(s.dim()).setOnes();
  return z;
}

class HoLocal final : public LocalObjective {
 public:
  HoLocal(Loss loss, AgentData data, double ridge, int num_classes)
      : loss_(loss), data_(std::move(data)), ridge_(ridge), classes_(num_classes),
        dim_(model_dim(loss, data_.train.dim(), num_classes)) {}

  int outer_dim() const override { return dim_; }
  int inner_dim() const override { return dim_; }

  double f_value(const Vec&, const Vec& y) const override { return loss_value(loss_, data_.val, y, classes_); }
  Vec grad_f_x(const Vec&, const Vec&) const override { return Vec::Zero(dim_); }
  Vec grad_f_y(const Vec&, const Vec& y) const override { return loss_gradient(loss_, data_.val, y, classes_); }

  double g_value(const Vec& x, const Vec& y) const override {
    return loss_value(loss_, data_.train, y, classes_) + 0.5 * ridge_ * y.squaredNorm() + y.dot(x.array().exp().matrix());
  }
  Vec grad_g_y(const Vec& x, const Vec& y) const override {
    return loss_gradient(loss_, data_.train, y, classes_) + ridge_ * y + x.array().exp().matrix();
  }
  Mat jac_g_xy(const Vec& x, const Vec&) const override { return x.array().exp().matrix().asDiagonal(); }
  Mat hess_g_yy(const Vec&, const Vec& y) const override {
    Mat h = loss_hessian(loss_, data_.train, y, classes_);
    h.diagonal().array() += ridge_;
    return h;
  }

 private:
  Loss loss_;
  AgentData data_;
  double ridge_;
  int classes_;
  int dim_;
};

}  // namespace

void ProblemConstants::check() const {
  if (!(mu_g > 0.0) || !(mu_g <= C_gyy) || !std::isfinite(C_gyy)) {
    throw std::invalid_argument("inner strong convexity constants must satisfy 0 < mu_g <= C_gyy < inf (mu_g=" +
                                std::to_string(mu_g) + ", C_gyy=" + std::to_string(C_gyy) + ")");
  }
  if (!(L_g >= 0.0)) throw std::invalid_argument("L_g must be nonnegative");
  for (const auto* c : {&C_gxy, &C_fx, &C_fy, &L_fx, &L_fy, &L_gxy, &L_gyy, &Lt_fy, &Lt_gxy, &Lt_gyy, &mu_f}) {
    if (c->has_value() && !(**c >= 0.0)) throw std::invalid_argument("problem constants must be nonnegative");
  }
}

double QuadraticStructure::outer_value(const Vec& x) const {
  const Vec y = inner_solution(x);
  double total = 0.0;
  for (const auto& ci : c) total += 0.5 * (y - ci).squaredNorm();
  return total / double(c.size()) + 0.5 * reg * x.squaredNorm();
}

Vec QuadraticStructure::outer_gradient(const Vec& x) const {
  Vec c_bar = Vec::Zero(b_bar.size());
  for (const auto& ci : c) c_bar += ci;
  c_bar /= double(c.size());
  return A_bar.transpose() * (inner_solution(x) - c_bar) + reg * x;
}

Vec QuadraticStructure::x_star() const {
  Vec c_bar = Vec::Zero(b_bar.size());
  for (const auto& ci : c) c_bar += ci;
  c_bar /= double(c.size());
  Mat lhs = A_bar.transpose() * A_bar;
  lhs.diagonal().array() += reg;
  return lhs.completeOrthogonalDecomposition().solve(A_bar.transpose() * (c_bar - b_bar));
}

BilevelProblem::BilevelProblem(int d1, int d2, std::vector<std::shared_ptr<const LocalObjective>> locals,
                               ProblemConstants constants)
    : d1_(d1), d2_(d2), locals_(std::move(locals)), constants_(std::move(constants)) {
  if (d1 < 1 || d2 < 1) throw std::invalid_argument("problem dimensions must be positive");
  if (locals_.empty()) throw std::invalid_argument("problem needs at least one agent");
  for (std::size_t i = 0; i < locals_.size(); ++i) {
    if (!locals_[i]) throw std::invalid_argument("null local objective");
    if (locals_[i]->outer_dim() != d1 || locals_[i]->inner_dim() != d2) {
      throw std::invalid_argument("agent " + std::to_string(i) + " has dimensions (" +
                                  std::to_string(locals_[i]->outer_dim()) + "," +
                                  std::to_string(locals_[i]->inner_dim()) + "), expected (" + std::to_string(d1) +
                                  "," + std::to_string(d2) + ")");
    }
  }
  constants_.check();
}

void BilevelProblem::require_agents(int n) const {
  if (agents() != n) {
    throw std::invalid_argument("problem has " + std::to_string(agents()) + " agents but the network has " +
                                std::to_string(n));
  }
}

BilevelProblem quad_bilevel(std::vector<Mat> A, std::vector<Vec> b, std::vector<Vec> c, double reg) {
  const std::size_t n = A.size();
  if (n == 0) throw std::invalid_argument("quad_bilevel: no agents");
  if (b.size() != n || c.size() != n) throw std::invalid_argument("quad_bilevel: A, b, c must have equal length");
  if (!(reg >= 0.0)) throw std::invalid_argument("quad_bilevel: reg must be nonnegative");
  const int d2 = int(A[0].rows()), d1 = int(A[0].cols());
  QuadraticStructure q;
  q.A_bar = Mat::Zero(d2, d1);
  q.b_bar = Vec::Zero(d2);
  q.reg = reg;
  double c_gxy = 0.0;
  std::vector<std::shared_ptr<const LocalObjective>> locals;
  for (std::size_t i = 0; i < n; ++i) {
    if (A[i].rows() != d2 || A[i].cols() != d1 || b[i].size() != d2 || c[i].size() != d2) {
      throw std::invalid_argument("quad_bilevel: dimension mismatch at agent " + std::to_string(i));
    }
    q.A_bar += A[i];
    q.b_bar += b[i];
    q.c.push_back(c[i]);
    c_gxy = std::max(c_gxy, spectral_norm(A[i]));
    locals.push_back(std::make_shared<QuadLocal>(A[i], b[i], c[i], reg));
  }
  q.A_bar /= double(n);
  q.b_bar /= double(n);

  ProblemConstants k;
  k.mu_g = k.L_g = k.C_gyy = 1.0;
  k.C_gxy = c_gxy;
  // ∇f is affine and unbounded: C_fx, C_fy stay unknown
  k.L_fx = reg;
  k.L_fy = 1.0;
  k.L_gxy = 0.0;
  k.L_gyy = 0.0;
  k.Lt_fy = 0.0;
  k.Lt_gxy = 0.0;
  k.Lt_gyy = 0.0;
  k.mu_f = reg;

  BilevelProblem p(d1, d2, std::move(locals), k);
  p.set_quadratic(std::move(q));
  return p;
}

BilevelProblem random_quad_bilevel(int n, int d1, int d2, double reg, std::uint64_t seed, double a_scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  std::vector<Mat> A;
  std::vector<Vec> b, c;
  for (int i = 0; i < n; ++i) {
    A.push_back(draw(d2, d1) * (a_scale / std::sqrt(double(d2))));
    b.push_back(draw(d2, 1));
    c.push_back(draw(d2, 1));
  }
  return quad_bilevel(std::move(A), std::move(b), std::move(c), reg);
}

// ---------------------------------------------------------------------------

Loss parse_loss(const std::string& name) {
  if (name == "linear") return Loss::linear;
  if (name == "logistic") return Loss::logistic;
  if (name == "smoothed_svm") return Loss::smoothed_svm;
  if (name == "softmax") return Loss::softmax;
  if (name == "svm" || name == "hinge") {
    throw std::invalid_argument("raw hinge loss is nonsmooth and has no second-order oracle; use smoothed_svm");
  }
  throw std::invalid_argument("unknown loss '" + name + "'");
}

std::string to_string(Loss loss) {
  switch (loss) {
    case Loss::linear: return "linear";
    case Loss::logistic: return "logistic";
    case Loss::smoothed_svm: return "smoothed_svm";
    case Loss::softmax: return "softmax";
  }
  return "unknown";
}

int model_dim(Loss loss, int dim, int num_classes) {
  if (loss == Loss::softmax) {
    if (num_classes < 2) throw std::invalid_argument("softmax needs at least two classes");
    return num_classes * (dim + 1);
  }
  return dim;
}

double loss_value(Loss loss, const Samples& s, const Vec& y, int num_classes) {
  switch (loss) {
    case Loss::linear: return (s.features * y - s.labels).squaredNorm();
    case Loss::logistic: {
      const Vec m = s.features * y;
      double total = 0.0;
      for (int k = 0; k < s.count(); ++k) total += softplus(-s.labels(k) * m(k));
      return total;
    }
    case Loss::smoothed_svm: {
      const Vec m = s.features * y;
      double total = 0.0;
      for (int k = 0; k < s.count(); ++k) {
        const double slack = std::max(0.0, 1.0 - s.labels(k) * m(k));
        total += 0.5 * slack * slack;
      }
      return total;
    }
    case Loss::softmax: {
      const Mat z = augmented(s);
      const Eigen::Map<const Mat> w(y.data(), z.cols(), num_classes);  // column c = class c
      const Mat logits = z * w;
      double total = 0.0;
      for (int k = 0; k < s.count(); ++k) {
        const double mx = logits.row(k).maxCoeff();
        const double lse = mx + std::log((logits.row(k).array() - mx).exp().sum());
        total += lse - logits(k, int(s.labels(k)));
      }
      return total;
    }
  }
  return 0.0;
}

Vec loss_gradient(Loss loss, const Samples& s, const Vec& y, int num_classes) {
  switch (loss) {
    case Loss::linear: return 2.0 * s.features.transpose() * (s.features * y - s.labels);
    case Loss::logistic: {
      const Vec m = s.features * y;
      Vec coef(s.count());
      for (int k = 0; k < s.count(); ++k) coef(k) = -s.labels(k) * sigmoid(-s.labels(k) * m(k));
      return s.features.transpose() * coef;
    }
    case Loss::smoothed_svm: {
      const Vec m = s.features * y;
      Vec coef(s.count());
      for (int k = 0; k < s.count(); ++k) coef(k) = -s.labels(k) * std::max(0.0, 1.0 - s.labels(k) * m(k));
      return s.features.transpose() * coef;
    }
    case Loss::softmax: {
      const Mat z = augmented(s);
      const Eigen::Map<const Mat> w(y.data(), z.cols(), num_classes);
      Mat probs = z * w;
      for (int k = 0; k < s.count(); ++k) {
        const double mx = probs.row(k).maxCoeff();
        probs.row(k) = (probs.row(k).array() - mx).exp();
        probs.row(k) /= probs.row(k).sum();
        probs(k, int(s.labels(k))) -= 1.0;
      }
      Mat g = z.transpose() * probs;  // (dim+1) × C
      return Eigen::Map<const Vec>(g.data(), g.size());
    }
  }
  return {};
}

Mat loss_hessian(Loss loss, const Samples& s, const Vec& y, int num_classes) {
  switch (loss) {
    case Loss::linear: return 2.0 * s.features.transpose() * s.features;
    case Loss::logistic: {
      const Vec m = s.features * y;
      Vec wts(s.count());
      for (int k = 0; k < s.count(); ++k) {
        const double p = sigmoid(m(k));
        wts(k) = p * (1.0 - p);
      }
      return s.features.transpose() * wts.asDiagonal() * s.features;
    }
    case Loss::smoothed_svm: {
      const Vec m = s.features * y;
      Vec active(s.count());
      for (int k = 0; k < s.count(); ++k) active(k) = (s.labels(k) * m(k) < 1.0) ? 1.0 : 0.0;
      return s.features.transpose() * active.asDiagonal() * s.features;
    }
    case Loss::softmax: {
      const Mat z = augmented(s);
      const int da = int(z.cols());
      const Eigen::Map<const Mat> w(y.data(), da, num_classes);
      const Mat logits = z * w;
      Mat h = Mat::Zero(da * num_classes, da * num_classes);
      for (int k = 0; k < s.count(); ++k) {
        const double mx = logits.row(k).maxCoeff();
        Vec p = (logits.row(k).array() - mx).exp().transpose();
        p /= p.sum();
        const Mat zz = z.row(k).transpose() * z.row(k);
        for (int a = 0; a < num_classes; ++a)
          for (int b = 0; b < num_classes; ++b) {
            const double coef = (a == b ? p(a) : 0.0) - p(a) * p(b);
            h.block(a * da, b * da, da, da) += coef * zz;
          }
      }
      return h;
    }
  }
  return {};
}

double mean_squared_error(const Samples& s, const Vec& y) {
  if (s.count() == 0) return 0.0;
  return (s.features * y - s.labels).squaredNorm() / double(s.count());
}

BilevelProblem ho_problem(Loss loss, const HoDataset& data, double ridge) {
  if (data.agents.empty()) throw std::invalid_argument("ho_problem: no agents");
  if (!(ridge >= 0.0)) throw std::invalid_argument("ho_problem: ridge must be nonnegative");
  const int dim = data.agents[0].train.dim();
  const int classes = data.num_classes;
  const int d = model_dim(loss, dim, classes);

  ProblemConstants k;
  k.mu_g = std::numeric_limits<double>::infinity();
  k.C_gyy = 0.0;
  double lfy = 0.0, cfy = 0.0, lgyy = 0.0;
  std::vector<std::shared_ptr<const LocalObjective>> locals;
  for (std::size_t i = 0; i < data.agents.size(); ++i) {
    const auto& a = data.agents[i];
    if (a.train.count() == 0 || a.val.count() == 0) {
      throw std::invalid_argument("ho_problem: agent " + std::to_string(i) + " has an empty train or validation set");
    }
    if (a.train.dim() != dim || a.val.dim() != dim) throw std::invalid_argument("ho_problem: feature width mismatch");
    if (a.train.labels.size() != a.train.count() || a.val.labels.size() != a.val.count()) {
      throw std::invalid_argument("ho_problem: label count mismatch");
    }
    const Mat ztr = (loss == Loss::softmax) ? augmented(a.train) : a.train.features;
    const Mat zva = (loss == Loss::softmax) ? augmented(a.val) : a.val.features;
    const Mat gram_tr = ztr.transpose() * ztr;
    const Mat gram_va = zva.transpose() * zva;
    double curv_lo = ridge, curv_hi = ridge, val_hi = 0.0;
    switch (loss) {
      case Loss::linear:
        curv_lo += 2.0 * sym_min_eig(gram_tr);
        curv_hi += 2.0 * sym_max_eig(gram_tr);
        val_hi = 2.0 * sym_max_eig(gram_va);
        break;
      case Loss::logistic: {
        check_binary_labels(a.train, "logistic");
        check_binary_labels(a.val, "logistic");
        curv_hi += 0.25 * sym_max_eig(gram_tr);
        val_hi = 0.25 * sym_max_eig(gram_va);
        cfy = std::max(cfy, zva.rowwise().norm().sum());
        // |d/dt σ(t)(1−σ(t))| ≤ 1/(6√3)
        lgyy = std::max(lgyy, ztr.rowwise().norm().array().cube().sum() / (6.0 * std::sqrt(3.0)));
        break;
      }
      case Loss::smoothed_svm:
        check_binary_labels(a.train, "smoothed_svm");
        check_binary_labels(a.val, "smoothed_svm");
        curv_hi += sym_max_eig(gram_tr);
        val_hi = sym_max_eig(gram_va);
        break;
      case Loss::softmax:
        check_class_labels(a.train, classes);
        check_class_labels(a.val, classes);
        curv_hi += 0.5 * sym_max_eig(gram_tr);
        val_hi = 0.5 * sym_max_eig(gram_va);
        cfy = std::max(cfy, std::sqrt(2.0) * zva.rowwise().norm().sum());
        break;
    }
    k.mu_g = std::min(k.mu_g, curv_lo);
    k.C_gyy = std::max(k.C_gyy, curv_hi);
    lfy = std::max(lfy, val_hi);
    locals.push_back(std::make_shared<HoLocal>(loss, a, ridge, classes));
  }
  if (!(k.mu_g > 0.0)) {
    throw std::invalid_argument("ho_problem: inner objective is not strongly convex for loss '" + to_string(loss) +
                                "'; use ridge > 0");
  }
  k.L_g = k.C_gyy;
  k.C_fx = 0.0;
  k.L_fx = 0.0;
  k.L_fy = lfy;
  k.Lt_fy = 0.0;
  k.L_gxy = 0.0;   // diag(exp(x)) does not depend on y
  k.Lt_gyy = 0.0;  // the Hessian does not depend on x
  if (loss == Loss::linear) k.L_gyy = 0.0;
  if (loss == Loss::logistic) k.L_gyy = lgyy;
  if (loss == Loss::logistic || loss == Loss::softmax) k.C_fy = cfy;
  // C_gxy and Lt_gxy involve exp(x), unbounded on R^d1
  return BilevelProblem(d, d, std::move(locals), k);
}

SyntheticRegression synthetic_regression_data(int agents, int dim, double noise, int samples_per_agent,
                                              std::uint64_t seed, int test_samples) {
  if (agents < 1 || dim < 1 || samples_per_agent < 2 || test_samples < 0) {
    throw std::invalid_argument("synthetic_regression_data: counts must be positive (>= 2 samples per agent)");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("synthetic_regression_data: noise must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticRegression out;
  out.truth.resize(dim);
  for (int j = 0; j < dim; ++j) out.truth(j) = normal(rng);

  auto draw = [&](int count) {
    Samples s;
    s.features.resize(count, dim);
    s.labels.resize(count);
    for (int k = 0; k < count; ++k) {
      for (int j = 0; j < dim; ++j) s.features(k, j) = normal(rng);
      s.labels(k) = s.features.row(k).dot(out.truth) + noise * normal(rng);
    }
    return s;
  };
  const int train = (samples_per_agent + 1) / 2;
  for (int i = 0; i < agents; ++i) {
    AgentData a;
    a.train = draw(train);
    a.val = draw(samples_per_agent - train);
    out.data.agents.push_back(std::move(a));
  }
  out.data.test = draw(test_samples);
  return out;
}

HoDataset read_dataset_csv(std::istream& in, const std::string& label_column) {
  auto split_line = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset CSV is empty");
  const auto header = split_line(line);
  int agent_col = -1, split_col = -1, label_col = -1;
  std::vector<int> feature_cols;
  for (int c = 0; c < int(header.size()); ++c) {
    if (header[c] == "agent") agent_col = c;
    else if (header[c] == "split") split_col = c;
    else if (header[c] == label_column) label_col = c;
    else feature_cols.push_back(c);
  }
  if (agent_col < 0 || split_col < 0 || label_col < 0) {
    throw std::runtime_error("dataset CSV needs 'agent', 'split' and '" + label_column + "' columns");
  }
  if (feature_cols.empty()) throw std::runtime_error("dataset CSV has no feature columns");

  struct Rows {
    std::vector<std::vector<double>> z;
    std::vector<double> b;
  };
  std::map<int, Rows> train, val;
  Rows test;
  int lineno = 1;
  double max_label = 0.0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("dataset CSV line " + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " cells");
    }
    try {
      std::vector<double> z;
      for (int c : feature_cols) z.push_back(std::stod(cells[c]));
      const double b = std::stod(cells[label_col]);
      max_label = std::max(max_label, b);
      const std::string& split = cells[split_col];
      Rows* target = nullptr;
      if (split == "test") {
        target = &test;
      } else {
        const int agent = std::stoi(cells[agent_col]);
        if (agent < 0) throw std::runtime_error("negative agent id");
        if (split == "train") target = &train[agent];
        else if (split == "val") target = &val[agent];
        else throw std::runtime_error("unknown split '" + split + "'");
      }
      target->z.push_back(std::move(z));
      target->b.push_back(b);
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception&) {
      throw std::runtime_error("dataset CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  auto to_samples = [&](const Rows& r) {
    Samples s;
    s.features.resize(Eigen::Index(r.z.size()), Eigen::Index(feature_cols.size()));
    s.labels.resize(Eigen::Index(r.b.size()));
    for (std::size_t k = 0; k < r.z.size(); ++k) {
      for (std::size_t j = 0; j < feature_cols.size(); ++j) s.features(Eigen::Index(k), Eigen::Index(j)) = r.z[k][j];
      s.labels(Eigen::Index(k)) = r.b[k];
    }
    return s;
  };
  int agents = 0;
  for (const auto& [a, _] : train) agents = std::max(agents, a + 1);
  for (const auto& [a, _] : val) agents = std::max(agents, a + 1);
  HoDataset data;
  for (int a = 0; a < agents; ++a) {
    AgentData ad;
    ad.train = to_samples(train[a]);
    ad.val = to_samples(val[a]);
    data.agents.push_back(std::move(ad));
  }
  data.test = to_samples(test);
  data.num_classes = int(max_label) + 1;
  return data;
}

HoDataset read_dataset_csv_file(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  return read_dataset_csv(in, label_column);
}

void write_dataset_csv(std::ostream& out, const HoDataset& data, const std::string& label_column) {
  const int dim = data.agents.empty() ? data.test.dim() : data.agents[0].train.dim();
  out << "agent,split," << label_column;
  for (int j = 0; j < dim; ++j) out << ",z" << j;
  out << '\n' << std::setprecision(17);
  auto rows = [&](int agent, const char* split, const Samples& s) {
    for (int k = 0; k < s.count(); ++k) {
      out << agent << ',' << split << ',' << s.labels(k);
      for (int j = 0; j < s.dim(); ++j) out << ',' << s.features(k, j);
      out << '\n';
    }
  };
  for (int a = 0; a < int(data.agents.size()); ++a) {
    rows(a, "train", data.agents[a].train);
    rows(a, "val", data.agents[a].val);
  }
  rows(-1, "test", data.test);
}

// ---------------------------------------------------------------------------

bool ConstantsReport::ok() const {
  return std::none_of(checks.begin(), checks.end(), [](const ConstantCheck& c) { return c.violated; });
}

const ConstantCheck* ConstantsReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

ConstantsReport verify_constants(const BilevelProblem& p, int trials, std::uint64_t seed) {
  const auto& k = p.constants();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](int d) {
    Vec v(d);
    for (int j = 0; j < d; ++j) v(j) = normal(rng);
    return v;
  };

  // upper bounds: observed is the running max; lower bounds (mu_g): running min
  std::map<std::string, double> worst;
  auto upper = [&](const std::string& name, double value) {
    auto [it, fresh] = worst.try_emplace(name, value);
    if (!fresh) it->second = std::max(it->second, value);
  };
  double min_curv = std::numeric_limits<double>::infinity();

  for (int t = 0; t < trials; ++t) {
    const int i = int(rng() % std::uint64_t(p.agents()));
    const auto& f = p.local(i);
    const Vec x = draw(p.d1()), x2 = draw(p.d1());
    const Vec y = draw(p.d2()), y2 = draw(p.d2());
    const double dy = (y - y2).norm(), dx = (x - x2).norm();

    const Mat h = f.hess_g_yy(x, y);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (h + h.transpose()), Eigen::EigenvaluesOnly);
    min_curv = std::min(min_curv, es.eigenvalues().minCoeff());
    upper("C_gyy", es.eigenvalues().maxCoeff());
    upper("L_g", (f.grad_g_y(x, y) - f.grad_g_y(x, y2)).norm() / dy);
    upper("C_gxy", spectral_norm(f.jac_g_xy(x, y)));
    upper("C_fx", f.grad_f_x(x, y).norm());
    upper("C_fy", f.grad_f_y(x, y).norm());
    upper("L_fx", (f.grad_f_x(x, y) - f.grad_f_x(x, y2)).norm() / dy);
    upper("L_fy", (f.grad_f_y(x, y) - f.grad_f_y(x, y2)).norm() / dy);
    upper("L_gxy", spectral_norm(f.jac_g_xy(x, y) - f.jac_g_xy(x, y2)) / dy);
    upper("L_gyy", spectral_norm(f.hess_g_yy(x, y) - f.hess_g_yy(x, y2)) / dy);
    upper("Lt_fy", (f.grad_f_y(x, y) - f.grad_f_y(x2, y)).norm() / dx);
    upper("Lt_gxy", spectral_norm(f.jac_g_xy(x, y) - f.jac_g_xy(x2, y)) / dx);
    upper("Lt_gyy", spectral_norm(f.hess_g_yy(x, y) - f.hess_g_yy(x2, y)) / dx);
  }

  ConstantsReport rep;
  rep.trials = trials;
  if (trials <= 0) return rep;
  constexpr double rel = 1e-8;
  rep.checks.push_back({"mu_g", k.mu_g, min_curv, min_curv < k.mu_g * (1.0 - rel) - 1e-12});
  auto add = [&](const std::string& name, std::optional<double> declared) {
    if (!declared) return;
    const double obs = worst.at(name);
    rep.checks.push_back({name, *declared, obs, obs > *declared * (1.0 + rel) + 1e-12});
  };
  add("C_gyy", k.C_gyy);
  add("L_g", k.L_g);
  add("C_gxy", k.C_gxy);
  add("C_fx", k.C_fx);
  add("C_fy", k.C_fy);
  add("L_fx", k.L_fx);
  add("L_fy", k.L_fy);
  add("L_gxy", k.L_gxy);
  add("L_gyy", k.L_gyy);
  add("Lt_fy", k.Lt_fy);
  add("Lt_gxy", k.Lt_gxy);
  add("Lt_gyy", k.Lt_gyy);
  return rep;
}

}  // namespace dbo
