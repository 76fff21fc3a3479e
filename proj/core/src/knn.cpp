#include "pcmu/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace pcmu {

namespace {

constexpr std::size_t npos = static_cast<std::size_t>(-1);

}  // namespace

KdTree2::KdTree2(std::span<const double> xs, std::span<const double> ys)
    : xs_(xs.begin(), xs.end()), ys_(ys.begin(), ys.end()) {
  if (xs.size() != ys.size()) throw std::invalid_argument("KdTree2: coordinate lengths differ");
  order_.resize(xs_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(order_.size());
  root_ = build(0, order_.size(), 0);
}

std::size_t KdTree2::build(std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return npos;
  const int axis = depth % 2;
  const std::size_t mid = lo + (hi - lo) / 2;
  const auto& coord = axis == 0 ? xs_ : ys_;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(hi), [&coord](std::size_t a, std::size_t b) {
                     return coord[a] < coord[b] || (coord[a] == coord[b] && a < b);
                   });
  const std::size_t id = nodes_.size();
  nodes_.push_back({order_[mid], axis, npos, npos});
  const std::size_t left = build(lo, mid, depth + 1);
  const std::size_t right = build(mid + 1, hi, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree2::kth_neighbor_distance(std::size_t i, std::size_t k) const {
  if (k == 0 || k >= xs_.size()) throw std::invalid_argument("KdTree2: k must be in [1, n)");
  const double qx = xs_[i];
  const double qy = ys_[i];
  // Max-heap of the k smallest distances found so far.
  std::priority_queue<double> best;
  auto radius = [&]() { return best.size() < k ? std::numeric_limits<double>::infinity() : best.top(); };

  // Depth-first, near side first. Each entry carries a lower bound on the
  // distance to anything in its subtree.
  std::vector<std::pair<std::size_t, double>> stack;
  stack.emplace_back(root_, 0.0);
  while (!stack.empty()) {
    const auto [n, bound] = stack.back();
    stack.pop_back();
    if (n == npos || bound > radius()) continue;
    const Node& node = nodes_[n];
    const std::size_t p = node.point;
    if (p != i) {
      const double d = std::max(std::abs(xs_[p] - qx), std::abs(ys_[p] - qy));
      if (best.size() < k) {
        best.push(d);
      } else if (d < best.top()) {
        best.pop();
        best.push(d);
      }
    }
    const double diff = node.axis == 0 ? qx - xs_[p] : qy - ys_[p];
    const std::size_t near = diff < 0 ? node.left : node.right;
    const std::size_t far = diff < 0 ? node.right : node.left;
    stack.emplace_back(far, std::max(bound, std::abs(diff)));
    stack.emplace_back(near, bound);
  }
  return best.top();
}

}  // namespace pcmu
