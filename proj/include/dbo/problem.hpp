#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dbo/types.hpp"

namespace dbo {

/// First- and second-order oracles for one agent's outer objective f_i and
/// inner objective g_i. Implementations are pure and thread-safe.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;

  virtual int outer_dim() const = 0;
  virtual int inner_dim() const = 0;

  virtual double f_value(const Vec& x, const Vec& y) const = 0;
  virtual Vec grad_f_x(const Vec& x, const Vec& y) const = 0;
  virtual Vec grad_f_y(const Vec& x, const Vec& y) const = 0;

  virtual double g_value(const Vec& x, const Vec& y) const = 0;
  virtual Vec grad_g_y(const Vec& x, const Vec& y) const = 0;
  /// ∇²_{xy} g_i, shape d1 × d2: entry (a, b) = ∂²g / ∂x_a ∂y_b.
  virtual Mat jac_g_xy(const Vec& x, const Vec& y) const = 0;
  virtual Mat hess_g_yy(const Vec& x, const Vec& y) const = 0;
};

/// Smoothness and curvature constants. Optional fields are unknown or
/// unbounded for the problem at hand; formulas that need them report so.
///
/// L_* constants are Lipschitz in y for fixed x; the Lt_* ("tilde")
/// constants are Lipschitz in x for fixed y.
struct ProblemConstants {
  double mu_g = 0.0;
  double L_g = 0.0;
  double C_gyy = 0.0;
  std::optional<double> C_gxy;
  std::optional<double> C_fx;
  std::optional<double> C_fy;
  std::optional<double> L_fx;
  std::optional<double> L_fy;
  std::optional<double> L_gxy;
  std::optional<double> L_gyy;
  std::optional<double> Lt_fy;
  std::optional<double> Lt_gxy;
  std::optional<double> Lt_gyy;
  std::optional<double> mu_f;

  /// Throws std::invalid_argument unless 0 < mu_g ≤ C_gyy < ∞ and every
  /// known constant is nonnegative.
  void check() const;
};

/// Closed-form pieces of the quadratic family: y*(x) = Ā x + b̄ and
/// f(x) = (1/n) Σ ½‖y*(x) − c_i‖² + (reg/2)‖x‖².
struct QuadraticStructure {
  Mat A_bar;
  Vec b_bar;
  std::vector<Vec> c;
  double reg = 0.0;

  Vec inner_solution(const Vec& x) const { return A_bar * x + b_bar; }
  double outer_value(const Vec& x) const;
  Vec outer_gradient(const Vec& x) const;
  Vec x_star() const;
  double f_star() const { return outer_value(x_star()); }
};

class BilevelProblem {
 public:
  BilevelProblem(int d1, int d2, std::vector<std::shared_ptr<const LocalObjective>> locals,
                 ProblemConstants constants);

  int d1() const { return d1_; }
  int d2() const { return d2_; }
  int agents() const { return int(locals_.size()); }
  const LocalObjective& local(int i) const { return *locals_[i]; }
  const ProblemConstants& constants() const { return constants_; }
  ProblemConstants& mutable_constants() { return constants_; }

  const std::optional<QuadraticStructure>& quadratic() const { return quadratic_; }
  void set_quadratic(QuadraticStructure q) { quadratic_ = std::move(q); }

  /// Throws unless the problem has exactly n agents.
  void require_agents(int n) const;

 private:
  int d1_;
  int d2_;
  std::vector<std::shared_ptr<const LocalObjective>> locals_;
  ProblemConstants constants_;
  std::optional<QuadraticStructure> quadratic_;
};

/// g_i = ½‖y − A_i x − b_i‖², f_i = ½‖y − c_i‖² + (reg/2)‖x‖².
BilevelProblem quad_bilevel(std::vector<Mat> A, std::vector<Vec> b, std::vector<Vec> c, double reg);

/// Gaussian A_i (scaled by a_scale/√d2), b_i, c_i.
BilevelProblem random_quad_bilevel(int n, int d1, int d2, double reg, std::uint64_t seed, double a_scale = 1.0);

// ---------------------------------------------------------------------------
// Hyperparameter-optimization family.

enum class Loss { linear, logistic, smoothed_svm, softmax };

/// Accepts "linear", "logistic", "smoothed_svm", "softmax". Raw hinge names
/// ("svm", "hinge") are rejected because the inner problem needs second-order
/// oracles.
Loss parse_loss(const std::string& name);
std::string to_string(Loss loss);

struct Samples {
  Mat features;  // one row per sample
  Vec labels;

  int count() const { return int(features.rows()); }
  int dim() const { return int(features.cols()); }
};

struct AgentData {
  Samples train;
  Samples val;
};

struct HoDataset {
  std::vector<AgentData> agents;
  Samples test;
  int num_classes = 0;  // softmax only
};

/// Summed loss ℓ(y; samples) and its derivatives. For softmax, y is the
/// class-major flattening of C blocks [w_c (dim), u_c (1)].
double loss_value(Loss loss, const Samples& s, const Vec& y, int num_classes = 0);
Vec loss_gradient(Loss loss, const Samples& s, const Vec& y, int num_classes = 0);
Mat loss_hessian(Loss loss, const Samples& s, const Vec& y, int num_classes = 0);

/// Parameter dimension of a model for `loss` on features of width `dim`.
int model_dim(Loss loss, int dim, int num_classes = 0);

/// Mean squared residual (yᵀz − b)² over samples.
double mean_squared_error(const Samples& s, const Vec& y);

/// g_i(x, y) = ℓ(y; train_i) + (ridge/2)‖y‖² + yᵀexp(x), f_i(x, y) = ℓ(y; val_i).
/// Needs d1 = d2 = model dimension.
BilevelProblem ho_problem(Loss loss, const HoDataset& data, double ridge = 0.0);

struct SyntheticRegression {
  HoDataset data;
  Vec truth;
};

/// Features z ~ N(0, I), responses b = zᵀy* + noise·ε with y* ~ N(0, I) and
/// ε ~ N(0, 1). Each agent's samples split into ceil(m/2) train and the rest
/// validation; `test_samples` go to a shared test set.
SyntheticRegression synthetic_regression_data(int agents, int dim, double noise, int samples_per_agent,
                                              std::uint64_t seed, int test_samples = 1000);

/// CSV with header; columns `agent`, `split` (train|val|test), the label
/// column, and every remaining column as a feature in order.
HoDataset read_dataset_csv(std::istream& in, const std::string& label_column = "label");
HoDataset read_dataset_csv_file(const std::string& path, const std::string& label_column = "label");
void write_dataset_csv(std::ostream& out, const HoDataset& data, const std::string& label_column = "label");

// ---------------------------------------------------------------------------

struct ConstantCheck {
  std::string name;
  double declared = 0.0;
  double observed = 0.0;  // worst observed value of the bounded quantity
  bool violated = false;
};

struct ConstantsReport {
  std::vector<ConstantCheck> checks;
  int trials = 0;

  bool ok() const;
  const ConstantCheck* find(const std::string& name) const;
};

/// Samples random point pairs and checks that no declared constant is
/// exceeded by more than 1e-8 relative. Unknown constants are skipped.
ConstantsReport verify_constants(const BilevelProblem& p, int trials, std::uint64_t seed);

}  // namespace dbo
