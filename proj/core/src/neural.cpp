#include "pcmu/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "pcmu/errors.hpp"

namespace pcmu {

namespace {

constexpr std::string_view kNetMagic = "PCMUNET1";
constexpr std::uint32_t kNetVersion = 1;

Eigen::MatrixXd activate(const Eigen::MatrixXd& x, Activation a) {
  switch (a) {
    case Activation::Identity:
      return x;
    case Activation::Relu:
      return x.cwiseMax(0.0);
    case Activation::Sigmoid:
      return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }
  return x;
}

// Derivative of the activation, evaluated from the pre-activation.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& pre, Activation a) {
  switch (a) {
    case Activation::Identity:
      return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
    case Activation::Relu:
      return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Sigmoid:
      return pre.unaryExpr([](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
  }
  return pre;
}

void check_topology(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw ShapeError("Mlp needs at least input and output sizes");
  for (auto s : sizes) {
    if (s == 0) throw ShapeError("Mlp layer sizes must be positive");
  }
}

Activation activation_from_tag(std::uint8_t tag) {
  if (tag > static_cast<std::uint8_t>(Activation::Sigmoid)) {
    throw DataError(fmt::format("unknown activation tag {}", tag));
  }
  return static_cast<Activation>(tag);
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity:
      return "identity";
    case Activation::Relu:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "unknown";
}

Mlp::Mlp(const std::vector<std::size_t>& sizes, Activation output, Rng& rng) {
  check_topology(sizes);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto fan_in = static_cast<Eigen::Index>(sizes[i]);
    const auto fan_out = static_cast<Eigen::Index>(sizes[i + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weight.resize(fan_out, fan_in);
    // Fill row-major so the draw order matches the checkpoint layout.
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = dist(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    layer.activation = i + 2 == sizes.size() ? output : Activation::Relu;
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::zeros(const std::vector<std::size_t>& sizes, Activation output) {
  check_topology(sizes);
  Mlp net;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer layer;
    layer.weight = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sizes[i + 1]), static_cast<Eigen::Index>(sizes[i]));
    layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[i + 1]));
    layer.activation = i + 2 == sizes.size() ? output : Activation::Relu;
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

std::size_t Mlp::input_size() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t Mlp::output_size() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::vector<std::size_t> Mlp::sizes() const {
  std::vector<std::size_t> out;
  if (layers_.empty()) return out;
  out.push_back(input_size());
  for (const auto& l : layers_) out.push_back(static_cast<std::size_t>(l.weight.rows()));
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd Mlp::predict(const Eigen::VectorXd& input) const { return predict_batch(input); }

Eigen::MatrixXd Mlp::predict_batch(const Eigen::MatrixXd& inputs) const {
  if (layers_.empty()) throw ShapeError("predict on an empty network");
  if (static_cast<std::size_t>(inputs.rows()) != input_size()) {
    throw ShapeError(fmt::format("input has {} rows, network expects {}", inputs.rows(), input_size()));
  }
  Eigen::MatrixXd a = inputs;
  for (const auto& l : layers_) {
    Eigen::MatrixXd pre = l.weight * a;
    pre.colwise() += l.bias;
    a = activate(pre, l.activation);
  }
  return a;
}

bool Mlp::same_parameters(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) {
      return false;
    }
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const Mlp& net) {
  Gradients g;
  for (const auto& l : net.layers()) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& w : weight) m = std::max(m, w.cwiseAbs().maxCoeff());
  for (const auto& b : bias) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

ForwardCache forward(const Mlp& net, const Eigen::MatrixXd& inputs) {
  if (net.layers().empty()) throw ShapeError("forward on an empty network");
  if (static_cast<std::size_t>(inputs.rows()) != net.input_size()) {
    throw ShapeError(fmt::format("input has {} rows, network expects {}", inputs.rows(), net.input_size()));
  }
  ForwardCache cache;
  cache.inputs.reserve(net.layers().size());
  cache.pre.reserve(net.layers().size());
  Eigen::MatrixXd a = inputs;
  for (const auto& l : net.layers()) {
    cache.inputs.push_back(a);
    Eigen::MatrixXd pre = l.weight * a;
    pre.colwise() += l.bias;
    a = activate(pre, l.activation);
    cache.pre.push_back(std::move(pre));
  }
  cache.output = std::move(a);
  return cache;
}

Gradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& output_gradient) {
  const auto& layers = net.layers();
  if (cache.pre.size() != layers.size()) throw ShapeError("backward: cache does not match network depth");
  if (output_gradient.rows() != cache.output.rows() || output_gradient.cols() != cache.output.cols()) {
    throw ShapeError(fmt::format("backward: output gradient is {}x{}, expected {}x{}", output_gradient.rows(),
                                 output_gradient.cols(), cache.output.rows(), cache.output.cols()));
  }
  Gradients g;
  g.weight.resize(layers.size());
  g.bias.resize(layers.size());
  Eigen::MatrixXd upstream = output_gradient;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Eigen::MatrixXd delta = upstream.cwiseProduct(activation_slope(cache.pre[k], layers[k].activation));
    g.weight[k] = delta * cache.inputs[k].transpose();
    g.bias[k] = delta.rowwise().sum();
    if (k > 0) upstream = layers[k].weight.transpose() * delta;
  }
  return g;
}

Gradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& output_gradient,
                   const Eigen::MatrixXd& mask) {
  if (mask.rows() != output_gradient.rows() || mask.cols() != output_gradient.cols()) {
    throw ShapeError("backward: mask shape differs from the output gradient");
  }
  return backward(net, cache, output_gradient.cwiseProduct(mask));
}

RmsPropState::RmsPropState(const Mlp& net, double learning_rate_, double decay_, double epsilon_)
    : learning_rate(learning_rate_), decay(decay_), epsilon(epsilon_), mean_square(Gradients::zeros_like(net)) {}

void rmsprop_step(Mlp& net, const Gradients& grads, RmsPropState& opt) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || grads.bias.size() != layers.size()) {
    throw ShapeError("rmsprop_step: gradient depth does not match network");
  }
  if (opt.mean_square.weight.size() != layers.size()) opt.mean_square = Gradients::zeros_like(net);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (grads.weight[k].rows() != layers[k].weight.rows() || grads.weight[k].cols() != layers[k].weight.cols() ||
        grads.bias[k].size() != layers[k].bias.size()) {
      throw ShapeError(fmt::format("rmsprop_step: gradient shape mismatch at layers[{}]", k));
    }
    if (!all_finite(grads.weight[k])) throw NumericError(fmt::format("non-finite gradient in layers[{}].weight", k));
    if (!grads.bias[k].allFinite()) throw NumericError(fmt::format("non-finite gradient in layers[{}].bias", k));
  }
  const double keep = opt.decay;
  const double blend = 1.0 - opt.decay;
  const double lr = opt.learning_rate;
  const double eps = opt.epsilon;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto& vw = opt.mean_square.weight[k];
    auto& vb = opt.mean_square.bias[k];
    vw = keep * vw + blend * grads.weight[k].cwiseAbs2();
    vb = keep * vb + blend * grads.bias[k].cwiseAbs2();
    layers[k].weight.array() -= lr * grads.weight[k].array() / (vw.array() + eps).sqrt();
    layers[k].bias.array() -= lr * grads.bias[k].array() / (vb.array() + eps).sqrt();
  }
}

LossAndGradient mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target) {
  return mse_loss(prediction, target, Eigen::MatrixXd::Ones(prediction.rows(), prediction.cols()));
}

LossAndGradient mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
                         const Eigen::MatrixXd& mask) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols() || mask.rows() != target.rows() ||
      mask.cols() != target.cols()) {
    throw ShapeError("mse_loss: shape mismatch");
  }
  const double count = mask.sum();
  LossAndGradient out;
  if (count <= 0.0) {
    out.gradient = Eigen::MatrixXd::Zero(prediction.rows(), prediction.cols());
    return out;
  }
  const Eigen::MatrixXd diff = (prediction - target).cwiseProduct(mask);
  out.loss = diff.squaredNorm() / count;
  out.gradient = 2.0 * diff / count;
  return out;
}

LossAndGradient bce_loss(const Eigen::MatrixXd& probability, const Eigen::MatrixXd& target) {
  if (probability.rows() != target.rows() || probability.cols() != target.cols()) {
    throw ShapeError("bce_loss: shape mismatch");
  }
  constexpr double kClip = 1e-12;
  const double n = static_cast<double>(probability.size());
  const Eigen::ArrayXXd p = probability.array().max(kClip).min(1.0 - kClip);
  const Eigen::ArrayXXd y = target.array();
  LossAndGradient out;
  out.loss = -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum() / n;
  out.gradient = ((p - y) / (p * (1.0 - p)) / n).matrix();
  return out;
}

void save_mlp(const std::filesystem::path& path, const Mlp& net, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(fmt::format("cannot write {}", path.string()));
  detail::write_magic(os, kNetMagic);
  detail::write_u32(os, kNetVersion);
  detail::write_u64(os, seed);
  detail::write_u32(os, static_cast<std::uint32_t>(net.layers().size()));
  for (auto s : net.sizes()) detail::write_u64(os, s);
  for (const auto& l : net.layers()) detail::write_u8(os, static_cast<std::uint8_t>(l.activation));
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::write_f64(os, l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) detail::write_f64(os, l.bias(r));
  }
  if (!os) throw DataError(fmt::format("write failed for {}", path.string()));
}

LoadedMlp load_mlp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(fmt::format("cannot open network checkpoint {}", path.string()));
  detail::expect_magic(is, kNetMagic);
  if (const auto v = detail::read_u32(is); v != kNetVersion) {
    throw DataError(fmt::format("unsupported network checkpoint version {}", v));
  }
  LoadedMlp out;
  out.seed = detail::read_u64(is);
  const std::uint32_t n_layers = detail::read_u32(is);
  if (n_layers == 0 || n_layers > 1024) throw DataError(fmt::format("implausible layer count {}", n_layers));
  std::vector<std::size_t> sizes(n_layers + 1);
  for (auto& s : sizes) {
    s = detail::read_u64(is);
    if (s == 0 || s > (1u << 20)) throw DataError(fmt::format("implausible layer size {}", s));
  }
  std::vector<Activation> acts(n_layers);
  for (auto& a : acts) a = activation_from_tag(detail::read_u8(is));
  out.net = Mlp::zeros(sizes, acts.back());
  auto& layers = out.net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].activation = acts[k];
    for (Eigen::Index r = 0; r < layers[k].weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layers[k].weight.cols(); ++c) layers[k].weight(r, c) = detail::read_f64(is);
    }
    for (Eigen::Index r = 0; r < layers[k].bias.size(); ++r) layers[k].bias(r) = detail::read_f64(is);
  }
  return out;
}

}  // namespace pcmu
