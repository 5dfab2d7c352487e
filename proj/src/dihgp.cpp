#include "dbo/dihgp.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dbo {

std::int64_t DihgpTrace::total_messages() const {
  std::int64_t total = 0;
  for (auto m : messages_per_round) total += m;
  return total;
}

void DihgpTrace::write_jsonl(std::ostream& out) const {
  for (std::size_t s = 0; s < iterates.size(); ++s) {
    nlohmann::json rec;
    rec["round"] = s;
    std::vector<double> norms;
    for (int i = 0; i < iterates[s].blocks(); ++i) norms.push_back(iterates[s].block(i).norm());
    rec["h_norms"] = norms;
    rec["messages"] = s == 0 ? std::int64_t{0} : messages_per_round.at(s - 1);
    out << rec.dump() << '\n';
  }
}

BlockVector outer_inner_gradient(const BilevelProblem& p, const StackedState& s, Exec exec) {
  BlockVector out(s.y.blocks(), s.y.dim());
  for_each_agent(exec, s.y.blocks(), [&](int i) { out.block(i) = p.local(i).grad_f_y(s.x.block(i), s.y.block(i)); });
  return out;
}

DihgpResult dihgp(const HessianSplit& split, const BlockVector& grad_y_f, int U, Exec exec, bool record) {
  if (U < 0) throw std::invalid_argument("truncation order U must be nonnegative");
  if (grad_y_f.blocks() != split.agents() || grad_y_f.dim() != split.dim()) {
    throw std::invalid_argument("dihgp: gradient shape does not match the Hessian split");
  }
  const int n = split.agents();
  const auto round_messages = split.mixing().directed_edges();

  DihgpResult res;
  BlockVector h(n, split.dim());
  for_each_agent(exec, n, [&](int i) { h.block(i) = split.solve_D_block(i, -Vec(grad_y_f.block(i))); });
  if (record) res.trace.iterates.push_back(h);

  BlockVector next(n, split.dim());
  for (int s = 0; s < U; ++s) {
    for_each_agent(exec, n, [&](int i) {
      next.block(i) = split.solve_D_block(i, split.apply_B_block(h, i) - grad_y_f.block(i));
    });
    std::swap(h, next);
    res.trace.messages_per_round.push_back(round_messages);
    if (record) res.trace.iterates.push_back(h);
  }
  res.h = std::move(h);
  return res;
}

DihgpResult dihgp(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s, int U, Exec exec,
                  bool record) {
  const HessianSplit split = hessian_split(p, W, beta, s, exec);
  return dihgp(split, outer_inner_gradient(p, s, exec), U, exec, record);
}

DihgpError dihgp_error(const BilevelProblem& p, const MixingMatrix& W, double beta, const StackedState& s, int U) {
  const auto& k = p.constants();
  const double rho = rho_bound(W.theta(), W.Theta(), beta, k.mu_g);
  if (!(rho < 1.0)) {
    throw std::domain_error("Neumann contraction bound rho=" + std::to_string(rho) +
                            " is not below 1 for this instance; the error envelope does not apply");
  }
  const HessianSplit split = hessian_split(p, W, beta, s);
  const BlockVector pv = outer_inner_gradient(p, s);
  const BlockVector h = dihgp(split, pv, U, Exec::serial, false).h;

  // H assembled from the split, columnwise
  const int n = split.agents(), d = split.dim();
  Mat H(n * d, n * d);
  for (int c = 0; c < n * d; ++c) {
    BlockVector e(n, d);
    e.data()(c) = 1.0;
    H.col(c) = split.apply_H(e).data();
  }
  const Vec exact = -H.llt().solve(pv.data());

  DihgpError err;
  err.rho = rho;
  err.abs_err = (h.data() - exact).norm();
  err.bound = std::pow(rho, U + 1) * pv.norm() / ((2.0 * (1.0 - W.Theta()) + beta * k.mu_g) * (1.0 - rho));
  return err;
}

}  // namespace dbo
