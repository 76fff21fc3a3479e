#pragma once

// 2-D kd-tree for k-nearest-neighbour queries under the max-norm.

#include <cstddef>
#include <span>
#include <vector>

namespace pcmu {

class KdTree2 {
 public:
  KdTree2(std::span<const double> xs, std::span<const double> ys);

  /// Max-norm distance from point `i` to its k-th nearest other point.
  double kth_neighbor_distance(std::size_t i, std::size_t k) const;

  std::size_t size() const noexcept { return xs_.size(); }

 private:
  struct Node {
    std::size_t point;
    int axis;
    std::size_t left;   // npos when absent
    std::size_t right;  // npos when absent
  };

  std::size_t build(std::size_t lo, std::size_t hi, int depth);

  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t root_ = 0;
};

}  // namespace pcmu
