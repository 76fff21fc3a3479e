#include "pcmu/ddql.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pcmu/errors.hpp"
#include "pcmu/qtable.hpp"

namespace pcmu {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1u << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range(fmt::format("replay index {} of {}", i, items_.size()));
  return items_[(head_ + i) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> out(batch_size);
  for (auto& i : out) i = pick(rng);
  return out;
}

void DdqlConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError(fmt::format("ddql.gamma must be in [0, 1] (got {})", gamma));
  if (batch_size == 0) throw ConfigError("ddql.batch_size must be >= 1");
  if (update_every == 0) throw ConfigError("ddql.update_every (k') must be >= 1");
  if (copy_every == 0) throw ConfigError("ddql.copy_every (k) must be >= 1");
  if (buffer_capacity == 0) throw ConfigError("ddql.buffer_capacity must be >= 1");
  if (batch_size > buffer_capacity) {
    throw ConfigError(fmt::format("ddql.batch_size {} exceeds buffer_capacity {}", batch_size, buffer_capacity));
  }
  if (!(learning_rate > 0.0)) throw ConfigError("ddql.learning_rate must be > 0");
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw ConfigError("ddql.rms_decay must be in [0, 1)");
  if (!(rms_epsilon > 0.0)) throw ConfigError("ddql.rms_epsilon must be > 0");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0)) {
    throw ConfigError("ddql.epsilon endpoints must be in [0, 1]");
  }
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("ddql.hidden sizes must be positive");
  }
  if (!(demand_quantile > 0.0 && demand_quantile <= 1.0)) throw ConfigError("ddql.demand_quantile must be in (0, 1]");
}

std::vector<double> encode_state(const EnvState& state, double demand_scale) {
  return {state.battery.loc, state.demand_kw / demand_scale};
}

std::size_t feasible_argmax(const Eigen::VectorXd& values, std::span<const std::size_t> feasible) {
  if (feasible.empty()) throw std::logic_error("feasible_argmax: empty feasible set");
  std::size_t arg = feasible.front();
  double best = -std::numeric_limits<double>::infinity();
  for (auto a : feasible) {
    if (values(static_cast<Eigen::Index>(a)) > best) {
      best = values(static_cast<Eigen::Index>(a));
      arg = a;
    }
  }
  return arg;
}

namespace {

Eigen::MatrixXd stack_columns(std::span<const Transition* const> batch, bool next) {
  const auto& first = next ? batch.front()->next_state : batch.front()->state;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(first.size()), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& v = next ? batch[j]->next_state : batch[j]->state;
    if (v.size() != first.size()) throw ShapeError("transition feature widths differ within a batch");
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i];
  }
  return m;
}

std::vector<std::size_t> mask_to_indices(const std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (mask[a] != 0) out.push_back(a);
  }
  return out;
}

std::size_t epsilon_greedy(const Mlp& q_net, const std::vector<double>& features,
                           std::span<const std::size_t> feasible, double epsilon, Rng& rng) {
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    return feasible[std::uniform_int_distribution<std::size_t>(0, feasible.size() - 1)(rng)];
  }
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(features.data(), static_cast<Eigen::Index>(features.size()));
  return feasible_argmax(q_net.predict(x), feasible);
}

}  // namespace

Eigen::VectorXd td_targets(std::span<const Transition* const> batch, const Mlp& q_net, const Mlp& target_net,
                           double gamma, bool decoupled_double_q) {
  if (batch.empty()) throw std::logic_error("td_targets: empty batch");
  const Eigen::MatrixXd next = stack_columns(batch, true);
  const Eigen::MatrixXd target_q = target_net.predict_batch(next);
  Eigen::MatrixXd online_q;
  if (decoupled_double_q) online_q = q_net.predict_batch(next);
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Transition& t = *batch[j];
    const auto col = static_cast<Eigen::Index>(j);
    if (t.terminal) {
      y(col) = t.reward;
      continue;
    }
    const auto feasible = mask_to_indices(t.next_feasible);
    if (feasible.empty()) throw std::logic_error("td_targets: all-false feasibility mask on a non-terminal transition");
    double bootstrap = 0.0;
    if (decoupled_double_q) {
      const std::size_t a = feasible_argmax(online_q.col(col), feasible);
      bootstrap = target_q(static_cast<Eigen::Index>(a), col);
    } else {
      bootstrap = target_q(static_cast<Eigen::Index>(feasible_argmax(target_q.col(col), feasible)), col);
    }
    y(col) = t.reward + gamma * bootstrap;
  }
  return y;
}

double train_on_batch(Mlp& q_net, const Mlp& target_net, std::span<const Transition* const> batch,
                      RmsPropState& opt, const DdqlConfig& config) {
  const Eigen::VectorXd targets = td_targets(batch, q_net, target_net, config.gamma, config.decoupled_double_q);
  const ForwardCache cache = forward(q_net, stack_columns(batch, false));
  const auto n_out = cache.output.rows();
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd target_matrix = Eigen::MatrixXd::Zero(n_out, n);
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(n_out, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto a = static_cast<Eigen::Index>(batch[static_cast<std::size_t>(j)]->action);
    if (a >= n_out) throw ShapeError(fmt::format("transition action {} outside network output {}", a, n_out));
    target_matrix(a, j) = targets(j);
    mask(a, j) = 1.0;
  }
  const LossAndGradient lg = mse_loss(cache.output, target_matrix, mask);
  if (!std::isfinite(lg.loss)) throw NumericError("non-finite TD loss");
  rmsprop_step(q_net, backward(q_net, cache, lg.gradient), opt);
  return lg.loss;
}

std::optional<double> train_step(Mlp& q_net, const Mlp& target_net, const ReplayBuffer& buffer, RmsPropState& opt,
                                 const DdqlConfig& config, Rng& rng) {
  if (buffer.size() < config.batch_size) return std::nullopt;
  const auto idx = buffer.sample_indices(config.batch_size, rng);
  std::vector<const Transition*> batch;
  batch.reserve(idx.size());
  for (auto i : idx) batch.push_back(&buffer.at(i));
  return train_on_batch(q_net, target_net, batch, opt, config);
}

std::vector<CurvePoint> train_ddql_task(EpisodicTask& task, Mlp& q_net, Mlp& target_net, const DdqlConfig& config,
                                        Rng& rng) {
  config.validate();
  if (q_net.input_size() != task.feature_count() || q_net.output_size() != task.action_count()) {
    throw ShapeError(fmt::format("network {}->{} does not match task {}->{}", q_net.input_size(), q_net.output_size(),
                                 task.feature_count(), task.action_count()));
  }
  ReplayBuffer buffer(config.buffer_capacity);
  RmsPropState opt(q_net, config.learning_rate, config.rms_decay, config.rms_epsilon);
  const std::uint64_t total_steps = static_cast<std::uint64_t>(config.n_episodes) * task.episode_length();
  std::uint64_t step = 0;
  std::vector<CurvePoint> curve;
  curve.reserve(config.n_episodes);
  for (std::size_t ep = 0; ep < config.n_episodes; ++ep) {
    task.reset(rng);
    auto features = task.features();
    auto feasible = task.feasible_actions();
    double total = 0.0;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    double eps = config.epsilon.at(step, total_steps);
    for (;;) {
      eps = config.epsilon.at(step, total_steps);
      const std::size_t a = epsilon_greedy(q_net, features, feasible, eps, rng);
      const TaskStep out = task.step(a);
      Transition tr;
      tr.state = features;
      tr.action = a;
      tr.reward = out.reward;
      tr.next_state = task.features();
      tr.terminal = out.terminal;
      tr.next_feasible.assign(task.action_count(), 0);
      std::vector<std::size_t> next_feasible;
      if (!out.terminal) {
        next_feasible = task.feasible_actions();
        for (auto i : next_feasible) tr.next_feasible[i] = 1;
      }
      features = tr.next_state;
      buffer.push(std::move(tr));
      total += out.reward;
      ++step;
      if (step % config.update_every == 0) {
        if (auto loss = train_step(q_net, target_net, buffer, opt, config, rng)) {
          loss_sum += *loss;
          ++loss_count;
        }
      }
      if (step % config.copy_every == 0) target_net = q_net;
      if (out.done) break;
      feasible = std::move(next_feasible);
    }
    const double loss_mean =
        loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : std::numeric_limits<double>::quiet_NaN();
    curve.push_back({ep, total, eps, loss_mean});
  }
  return curve;
}

DdqlResult train_ddql(const Environment& env, const std::vector<LoadProfile>& profiles, const DdqlConfig& config,
                      std::uint64_t seed) {
  config.validate();
  if (profiles.empty()) throw DataError("train_ddql: no training profiles");
  const double scale = std::max(demand_quantile(profiles, config.demand_quantile), 1e-6);
  BatteryTask task(env, profiles, /*random_initial_loc=*/true, env.battery.loc_min);
  task.set_encoder({2, [scale](const EnvState& s) { return encode_state(s, scale); }});
  Rng rng(seed);
  std::vector<std::size_t> sizes{2};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(env.actions.size());
  DdqlResult result;
  result.q_net = Mlp(sizes, Activation::Identity, rng);
  if (config.zero_output_init) result.q_net.layers().back().weight.setZero();
  result.target_net = result.q_net;
  result.demand_scale = scale;
  result.curve = train_ddql_task(task, result.q_net, result.target_net, config, rng);
  return result;
}

Policy greedy_policy(const Mlp& q_net, double demand_scale) {
  return [&q_net, demand_scale](const EnvState& state, std::span<const std::size_t> feasible) {
    const auto f = encode_state(state, demand_scale);
    const Eigen::Vector2d x(f[0], f[1]);
    return feasible_argmax(q_net.predict(x), feasible);
  };
}

void to_json(nlohmann::json& j, const DdqlConfig& c) {
  j = {{"gamma", c.gamma},
       {"n_episodes", c.n_episodes},
       {"batch_size", c.batch_size},
       {"update_every", c.update_every},
       {"copy_every", c.copy_every},
       {"learning_rate", c.learning_rate},
       {"rms_decay", c.rms_decay},
       {"rms_epsilon", c.rms_epsilon},
       {"epsilon", c.epsilon},
       {"hidden", c.hidden},
       {"buffer_capacity", c.buffer_capacity},
       {"decoupled_double_q", c.decoupled_double_q},
       {"zero_output_init", c.zero_output_init},
       {"demand_quantile", c.demand_quantile}};
}

void from_json(const nlohmann::json& j, DdqlConfig& c) {
  const DdqlConfig d;
  c.gamma = j.value("gamma", d.gamma);
  c.n_episodes = j.value("n_episodes", d.n_episodes);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.update_every = j.value("update_every", d.update_every);
  c.copy_every = j.value("copy_every", d.copy_every);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.rms_decay = j.value("rms_decay", d.rms_decay);
  c.rms_epsilon = j.value("rms_epsilon", d.rms_epsilon);
  c.epsilon = j.contains("epsilon") ? j.at("epsilon").get<EpsilonSchedule>() : d.epsilon;
  c.hidden = j.value("hidden", d.hidden);
  c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
  c.decoupled_double_q = j.value("decoupled_double_q", d.decoupled_double_q);
  c.zero_output_init = j.value("zero_output_init", d.zero_output_init);
  c.demand_quantile = j.value("demand_quantile", d.demand_quantile);
}

}  // namespace pcmu
