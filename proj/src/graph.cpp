#include "dbo/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>

namespace dbo {

Graph::Graph(int n, std::vector<Edge> edges) : n_(n), adjacency_(std::size_t(std::max(n, 0))) {
  if (n < 1) throw std::invalid_argument("graph needs at least one agent, got n=" + std::to_string(n));
  for (auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw std::invalid_argument("edge {" + std::to_string(a) + "," + std::to_string(b) + "} out of range for n=" +
                                  std::to_string(n));
    }
    if (a == b) throw std::invalid_argument("self-loop at agent " + std::to_string(a));
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  if (auto dup = std::adjacent_find(edges.begin(), edges.end()); dup != edges.end()) {
    throw std::invalid_argument("duplicate edge {" + std::to_string(dup->first) + "," + std::to_string(dup->second) +
                                "}");
  }
  edges_ = std::move(edges);
  for (const auto& [a, b] : edges_) {
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

bool Graph::has_edge(int i, int j) const {
  const auto& nb = adjacency_[i];
  return std::binary_search(nb.begin(), nb.end(), j);
}

bool Graph::connected() const {
  if (n_ == 0) return false;
  std::vector<char> seen(n_, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    for (int v : adjacency_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n_;
}

Graph path_graph(int n) {
  std::vector<Graph::Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, std::move(e));
}

Graph cycle_graph(int n) {
  if (n < 3) throw std::invalid_argument("cycle needs n >= 3");
  std::vector<Graph::Edge> e;
  for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return Graph(n, std::move(e));
}

Graph complete_graph(int n) {
  std::vector<Graph::Edge> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph(n, std::move(e));
}

Graph star_graph(int n) {
  std::vector<Graph::Edge> e;
  for (int i = 1; i < n; ++i) e.emplace_back(0, i);
  return Graph(n, std::move(e));
}

Graph random_connected_graph(int n, double r, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("random_connected_graph: n must be >= 1");
  if (!(r > 0.0 && r <= 1.0)) {
    throw std::invalid_argument("connectivity ratio must lie in (0, 1], got " + std::to_string(r));
  }
  std::mt19937_64 rng(seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<char>> in_tree(n, std::vector<char>(n, 0));
  std::vector<Graph::Edge> edges;
  edges.reserve(std::size_t(n) * (n - 1) / 2);
  for (int k = 1; k < n; ++k) {
    std::uniform_int_distribution<int> pick(0, k - 1);
    int a = order[k], b = order[pick(rng)];
    in_tree[a][b] = in_tree[b][a] = 1;
    edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::bernoulli_distribution extra(r);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!in_tree[i][j] && extra(rng)) edges.emplace_back(i, j);
  return Graph(n, std::move(edges));
}

MixingMatrix::MixingMatrix(Mat w) : w_(std::move(w)) {
  if (w_.rows() != w_.cols() || w_.rows() == 0) throw std::invalid_argument("mixing matrix must be square and non-empty");
  const int n = int(w_.rows());
  neighbors_.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i && w_(i, j) != 0.0) neighbors_[i].push_back(j);
  Vec diag = w_.diagonal();
  theta_ = diag.minCoeff();
  Theta_ = diag.maxCoeff();
}

std::int64_t MixingMatrix::directed_edges() const {
  std::int64_t total = 0;
  for (const auto& nb : neighbors_) total += std::int64_t(nb.size());
  return total;
}

MixingMatrix metropolis_weights(const Graph& g) {
  if (!g.connected()) throw std::invalid_argument("metropolis_weights: graph is disconnected");
  const int n = g.size();
  Mat w = Mat::Zero(n, n);
  for (const auto& [i, j] : g.edges()) {
    const double wij = 1.0 / (1.0 + double(std::max(g.degree(i), g.degree(j))));
    w(i, j) = wij;
    w(j, i) = wij;
  }
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j : g.neighbors(i)) off += w(i, j);
    w(i, i) = 1.0 - off;
  }
  return MixingMatrix(std::move(w));
}

MixingMatrix max_degree_weights(const Graph& g) {
  const int n = g.size();
  if (n <= 2) {
    throw std::invalid_argument("max_degree_weights requires n > 2 (self-weight bounds θ = 1/n, Θ = 1 − 1/n); got n=" +
                                std::to_string(n));
  }
  if (!g.connected()) throw std::invalid_argument("max_degree_weights: graph is disconnected");
  Mat w = Mat::Zero(n, n);
  const double inv = 1.0 / double(n);
  for (const auto& [i, j] : g.edges()) w(i, j) = w(j, i) = inv;
  for (int i = 0; i < n; ++i) w(i, i) = 1.0 - double(g.degree(i)) / double(n);
  return MixingMatrix(std::move(w));
}

MixingMatrix uniform_weights(int n) {
  if (n < 1) throw std::invalid_argument("uniform_weights: n must be >= 1");
  return MixingMatrix(Mat::Constant(n, n, 1.0 / double(n)));
}

Vec mixing_eigenvalues(const MixingMatrix& w) {
  Eigen::SelfAdjointEigenSolver<Mat> es(w.dense(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed on mixing matrix");
  return es.eigenvalues();
}

double spectral_gap(const MixingMatrix& w) {
  const int n = w.size();
  if (n == 1) return 0.0;
  Mat centered = w.dense() - Mat::Constant(n, n, 1.0 / double(n));
  Eigen::SelfAdjointEigenSolver<Mat> es(centered, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed computing spectral gap");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

PenaltySpectrum penalty_spectrum(const MixingMatrix& w) {
  const int n = w.size();
  PenaltySpectrum out;
  if (n == 1) return out;
  Mat lap = Mat::Identity(n, n) - w.dense();
  Eigen::SelfAdjointEigenSolver<Mat> es(lap, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed on I - W");
  const Vec& ev = es.eigenvalues();
  out.lambda_max = ev(n - 1);
  // ascending; ev(0) is the null direction of a connected mixing matrix
  out.lambda_min_nonzero = ev(1);
  out.has_nonzero = ev(1) > 1e-10;
  return out;
}

ValidationReport validate_mixing(const MixingMatrix& w, const Graph& g) {
  ValidationReport rep;
  try {
    const Mat& m = w.dense();
    const int n = int(m.rows());
    if (n != g.size()) {
      rep.messages.push_back("size mismatch: W is " + std::to_string(n) + "x" + std::to_string(n) + ", graph has " +
                             std::to_string(g.size()) + " agents");
      return rep;
    }
    rep.nonnegative = (m.array() >= 0.0).all();
    if (!rep.nonnegative) rep.messages.push_back("negative entry in W");

    rep.symmetric = (m.array() == m.transpose().array()).all();
    if (!rep.symmetric) rep.messages.push_back("W is not exactly symmetric");

    const double row_dev = (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double col_dev = (m.colwise().sum().array() - 1.0).abs().maxCoeff();
    rep.max_sum_deviation = std::max(row_dev, col_dev);
    rep.doubly_stochastic = rep.max_sum_deviation <= 1e-12;
    if (!rep.doubly_stochastic) {
      std::ostringstream os;
      os << "row/column sums deviate from 1 by " << rep.max_sum_deviation;
      rep.messages.push_back(os.str());
    }

    rep.sparsity = true;
    for (int i = 0; i < n && rep.sparsity; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && m(i, j) != 0.0 && !g.has_edge(i, j)) {
          rep.sparsity = false;
          rep.messages.push_back("nonzero weight on non-edge {" + std::to_string(i) + "," + std::to_string(j) + "}");
          break;
        }

    Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
      rep.messages.push_back("eigensolver failed");
    } else {
      const Vec& ev = es.eigenvalues();  // ascending
      if (n == 1) {
        rep.lambda2 = 0.0;
        rep.null_space = std::abs(ev(0) - 1.0) <= 1e-10;
      } else {
        rep.lambda2 = ev(n - 2);
        rep.null_space = std::abs(ev(n - 1) - 1.0) <= 1e-10 && rep.lambda2 < 1.0 - 1e-10;
      }
      if (!rep.null_space) {
        std::ostringstream os;
        os << "eigenvalue 1 is not simple (lambda2 = " << rep.lambda2 << ")";
        rep.messages.push_back(os.str());
      }
    }

    rep.theta = m.diagonal().minCoeff();
    rep.Theta = m.diagonal().maxCoeff();
    rep.self_weights = rep.theta > 0.0 && rep.Theta < 1.0;
    if (!rep.self_weights) {
      std::ostringstream os;
      os << "self weights outside (0,1): theta=" << rep.theta << " Theta=" << rep.Theta;
      rep.messages.push_back(os.str());
    }
  } catch (const std::exception& e) {
    rep.messages.push_back(std::string("validation error: ") + e.what());
  }
  return rep;
}

Graph read_edge_list(std::istream& in) {
  std::string line;
  int n = -1;
  std::vector<Graph::Edge> edges;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (n < 0) {
      if (!(ls >> n) || n < 1) throw std::runtime_error("edge list line " + std::to_string(lineno) + ": bad agent count");
      continue;
    }
    int a, b;
    if (!(ls >> a >> b)) throw std::runtime_error("edge list line " + std::to_string(lineno) + ": expected 'i j'");
    edges.emplace_back(a, b);
  }
  if (n < 0) throw std::runtime_error("edge list is empty");
  return Graph(n, std::move(edges));
}

Graph read_edge_list_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edge list " + path);
  return read_edge_list(in);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << g.size() << '\n';
  for (const auto& [a, b] : g.edges()) out << a << ' ' << b << '\n';
}

void write_mixing_csv(std::ostream& out, const MixingMatrix& w) {
  const Mat& m = w.dense();
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

}  // namespace dbo
