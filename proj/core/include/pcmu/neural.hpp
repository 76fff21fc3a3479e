#pragma once

// Dense multilayer perceptron with exact backpropagation and RMSProp.
// Batches are column-major: one sample per column.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcmu/task.hpp"

namespace pcmu {

enum class Activation : std::uint8_t { Identity = 0, Relu = 1, Sigmoid = 2 };

std::string to_string(Activation a);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Identity;
};

class Mlp {
 public:
  Mlp() = default;

  /// `sizes` = {input, hidden..., output}. Hidden layers use ReLU. Weights are
  /// uniform in +-sqrt(6 / fan_in), biases zero.
  Mlp(const std::vector<std::size_t>& sizes, Activation output, Rng& rng);

  /// All-zero parameters with the given topology.
  static Mlp zeros(const std::vector<std::size_t>& sizes, Activation output);

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::vector<std::size_t> sizes() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  Eigen::VectorXd predict(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& inputs) const;

  /// Bitwise parameter equality.
  bool same_parameters(const Mlp& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Activations retained by `forward` for `backward`.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  Eigen::MatrixXd output;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  static Gradients zeros_like(const Mlp& net);
  double max_abs() const;
};

/// Throws ShapeError when the input height does not match the first layer.
ForwardCache forward(const Mlp& net, const Eigen::MatrixXd& inputs);

/// Parameter gradients of a scalar loss given dLoss/dOutput. The output
/// gradient has the shape of `cache.output`; zero entries mask their units.
Gradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& output_gradient);

/// Same as `backward` with `output_gradient` multiplied elementwise by `mask`.
Gradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& output_gradient,
                   const Eigen::MatrixXd& mask);

/// Non-centered, momentum-free RMSProp:
///   v <- decay * v + (1 - decay) * g^2;  theta <- theta - lr * g / sqrt(v + eps).
struct RmsPropState {
  double learning_rate = 0.00025;
  double decay = 0.9;
  double epsilon = 1e-8;
  Gradients mean_square;

  RmsPropState() = default;
  RmsPropState(const Mlp& net, double learning_rate, double decay = 0.9, double epsilon = 1e-8);
};

/// Throws NumericError naming the parameter (e.g. "layers[1].weight") when a
/// gradient is not finite; parameters are left untouched in that case.
void rmsprop_step(Mlp& net, const Gradients& grads, RmsPropState& opt);

/// Mean squared error over the masked entries (all entries without mask),
/// with its gradient with respect to `prediction`.
struct LossAndGradient {
  double loss = 0.0;
  Eigen::MatrixXd gradient;
};
LossAndGradient mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);
LossAndGradient mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
                         const Eigen::MatrixXd& mask);
/// Mean binary cross-entropy of probabilities in (0,1) against {0,1} labels.
LossAndGradient bce_loss(const Eigen::MatrixXd& probability, const Eigen::MatrixXd& target);

/// Network checkpoint, little-endian:
///   "PCMUNET1" | u32 version=1 | u64 seed | u32 n_layers |
///   u64 sizes[n_layers + 1] | u8 activation[n_layers] |
///   per layer: f64 weight[out][in] (row-major), f64 bias[out]
void save_mlp(const std::filesystem::path& path, const Mlp& net, std::uint64_t seed);
struct LoadedMlp {
  Mlp net;
  std::uint64_t seed = 0;
};
LoadedMlp load_mlp(const std::filesystem::path& path);

}  // namespace pcmu
