#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace dbo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Stacked per-agent vectors: `blocks` copies of an R^dim vector laid out
/// contiguously, block i at [i*dim, (i+1)*dim).
class BlockVector {
 public:
  BlockVector() = default;
  BlockVector(int blocks, int dim) : blocks_(blocks), dim_(dim), data_(Vec::Zero(Index(blocks) * dim)) {
    if (blocks < 0 || dim < 0) throw std::invalid_argument("BlockVector: negative size");
  }
  BlockVector(int blocks, int dim, Vec data) : blocks_(blocks), dim_(dim), data_(std::move(data)) {
    if (data_.size() != Index(blocks) * dim) {
      throw std::invalid_argument("BlockVector: data length " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(blocks) + "x" + std::to_string(dim));
    }
  }

  /// 1 ⊗ v
  static BlockVector replicate(int blocks, const Vec& v) {
    BlockVector out(blocks, int(v.size()));
    for (int i = 0; i < blocks; ++i) out.block(i) = v;
    return out;
  }

  int blocks() const { return blocks_; }
  int dim() const { return dim_; }
  Eigen::Index size() const { return data_.size(); }

  Eigen::VectorBlock<Vec> block(int i) { return data_.segment(Index(i) * dim_, dim_); }
  Eigen::VectorBlock<const Vec> block(int i) const { return data_.segment(Index(i) * dim_, dim_); }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

  double norm() const { return data_.norm(); }

  Vec mean() const {
    Vec m = Vec::Zero(dim_);
    for (int i = 0; i < blocks_; ++i) m += block(i);
    if (blocks_ > 0) m /= double(blocks_);
    return m;
  }

  /// Block average replicated back to every block.
  BlockVector consensus() const { return replicate(blocks_, mean()); }

  /// ‖x − 1⊗x̄‖
  double consensus_error() const { return (data_ - consensus().data_).norm(); }

  bool same_shape(const BlockVector& other) const { return blocks_ == other.blocks_ && dim_ == other.dim_; }

  friend bool operator==(const BlockVector& a, const BlockVector& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  using Index = Eigen::Index;
  int blocks_ = 0;
  int dim_ = 0;
  Vec data_;
};

/// Per-agent copies of the outer variable (x) and inner variable (y).
struct StackedState {
  BlockVector x;
  BlockVector y;

  int agents() const { return x.blocks(); }
};

}  // namespace dbo
