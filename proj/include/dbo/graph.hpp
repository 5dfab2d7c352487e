#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dbo/types.hpp"

namespace dbo {

/// Undirected simple graph on agents 0..n-1.
class Graph {
 public:
  using Edge = std::pair<int, int>;

  Graph() = default;
  /// Edges are normalized to (min, max) and sorted. Self-loops, duplicates and
  /// out-of-range endpoints throw std::invalid_argument.
  Graph(int n, std::vector<Edge> edges);

  int size() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<int>& neighbors(int i) const { return adjacency_[i]; }
  int degree(int i) const { return int(adjacency_[i].size()); }
  bool has_edge(int i, int j) const;
  bool connected() const;

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
};

Graph path_graph(int n);
Graph cycle_graph(int n);
Graph complete_graph(int n);
Graph star_graph(int n);

/// Random spanning tree plus every remaining pair independently with
/// probability r. Always connected; deterministic for a given seed.
Graph random_connected_graph(int n, double r, std::uint64_t seed);

/// Symmetric doubly stochastic weights. Neighbor lists follow the nonzero
/// off-diagonal pattern of `w`.
class MixingMatrix {
 public:
  MixingMatrix() = default;
  explicit MixingMatrix(Mat w);

  int size() const { return int(w_.rows()); }
  const Mat& dense() const { return w_; }
  double operator()(int i, int j) const { return w_(i, j); }
  double self_weight(int i) const { return w_(i, i); }
  const std::vector<int>& neighbors(int i) const { return neighbors_[i]; }
  /// Σ_i |N_i|, i.e. directed edges.
  std::int64_t directed_edges() const;

  /// min_i w_ii and max_i w_ii.
  double theta() const { return theta_; }
  double Theta() const { return Theta_; }

 private:
  Mat w_;
  std::vector<std::vector<int>> neighbors_;
  double theta_ = 0.0;
  double Theta_ = 0.0;
};

/// w_ij = 1/(1+max(deg i, deg j)) on edges, diagonal completes each row to 1.
/// A single agent yields W = [1], which fails the self-weight bound Θ < 1;
/// validate_mixing reports it.
MixingMatrix metropolis_weights(const Graph& g);

/// w_ij = 1/n on edges, w_ii = 1 − deg(i)/n. Requires n > 2.
MixingMatrix max_degree_weights(const Graph& g);

/// Uniform 1/n everywhere (the averaging projector on a complete graph).
MixingMatrix uniform_weights(int n);

/// Ascending eigenvalues of W.
Vec mixing_eigenvalues(const MixingMatrix& w);

/// σ = ‖W − 11ᵀ/n‖₂ = max(|λ2|, |λn|); zero for a single agent.
double spectral_gap(const MixingMatrix& w);

/// Extremes of the spectrum of I − W: smallest nonzero eigenvalue and the
/// largest. For n = 1 both are zero and `has_nonzero` is false.
struct PenaltySpectrum {
  double lambda_min_nonzero = 0.0;
  double lambda_max = 0.0;
  bool has_nonzero = false;
};
PenaltySpectrum penalty_spectrum(const MixingMatrix& w);

struct ValidationReport {
  bool nonnegative = false;
  bool symmetric = false;
  bool doubly_stochastic = false;  // rows and columns sum to 1 within 1e-12
  bool sparsity = false;           // zero off the edge set
  bool null_space = false;         // eigenvalue 1 simple
  bool self_weights = false;       // 0 < θ ≤ w_ii ≤ Θ < 1
  double max_sum_deviation = 0.0;
  double lambda2 = 0.0;
  double theta = 0.0;
  double Theta = 0.0;
  std::vector<std::string> messages;

  bool all_pass() const {
    return nonnegative && symmetric && doubly_stochastic && sparsity && null_space && self_weights;
  }
};

/// Never throws; every failure lands in the report.
ValidationReport validate_mixing(const MixingMatrix& w, const Graph& g);

// Edge-list text format: `n` on the first line, then one `i j` pair per line.
// Blank lines and lines starting with '#' are ignored.
Graph read_edge_list(std::istream& in);
Graph read_edge_list_file(const std::string& path);
void write_edge_list(std::ostream& out, const Graph& g);
void write_mixing_csv(std::ostream& out, const MixingMatrix& w);

}  // namespace dbo
