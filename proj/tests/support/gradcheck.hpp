#pragma once

// Central finite-difference audit of Mlp backpropagation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "pcmu/neural.hpp"

namespace pcmu::testing {

inline Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  }
  return m;
}

/// Scalar probe loss sum(weights .* net(x)).
inline double probe_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& weights) {
  return (forward(net, x).output.array() * weights.array()).sum();
}

/// Largest relative error |analytic - numeric| / max(|analytic| + |numeric|, floor)
/// over every weight and bias, with random biases so that no unit sits dead.
inline double gradient_check(const std::vector<std::size_t>& sizes, Activation output, std::uint64_t seed,
                             std::size_t batch = 3, double h = 1e-5) {
  Rng rng(seed);
  Mlp net(sizes, output, rng);
  for (auto& layer : net.layers()) {
    layer.bias = uniform_matrix(layer.bias.size(), 1, rng, -0.1, 0.1);
  }
  const Eigen::MatrixXd x = uniform_matrix(static_cast<Eigen::Index>(sizes.front()),
                                           static_cast<Eigen::Index>(batch), rng);
  const Eigen::MatrixXd w = uniform_matrix(static_cast<Eigen::Index>(sizes.back()),
                                           static_cast<Eigen::Index>(batch), rng);
  const auto cache = forward(net, x);
  const auto grads = backward(net, cache, w);

  constexpr double kFloor = 1e-8;
  double worst = 0.0;
  auto audit = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = probe_loss(net, x, w);
    param = saved - h;
    const double down = probe_loss(net, x, w);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max(std::abs(analytic) + std::abs(numeric), kFloor);
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) audit(layer.weight(i, j), grads.weight[l](i, j));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) audit(layer.bias(i), grads.bias[l](i));
  }
  return worst;
}

}  // namespace pcmu::testing
