#pragma once

// Deep Q-learning with a target network and experience replay. The default
// loss bootstraps from the target network's maximum over feasible next
// actions; the argmax-decoupled (double) target is available as an option.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pcmu/env.hpp"
#include "pcmu/neural.hpp"
#include "pcmu/task.hpp"

namespace pcmu {

struct Transition {
  std::vector<double> state;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
  /// Feasibility of each action in `next_state`, computed at insertion.
  std::vector<std::uint8_t> next_feasible;
};

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const;
  /// Indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> items_;
};

struct DdqlConfig {
  double gamma = 0.99;
  std::size_t n_episodes = 800;
  std::size_t batch_size = 128;
  /// Environment steps between gradient steps (k').
  std::size_t update_every = 8;
  /// Environment steps between target-network copies (k).
  std::size_t copy_every = 500;
  double learning_rate = 0.00025;
  double rms_decay = 0.9;
  double rms_epsilon = 1e-8;
  EpsilonSchedule epsilon;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t buffer_capacity = 10'000;
  /// Select next actions with the online network, evaluate with the target.
  bool decoupled_double_q = false;
  /// Start the output layer at zero so that every initial Q-value is 0.
  bool zero_output_init = true;
  double demand_quantile = 0.995;

  void validate() const;

  bool operator==(const DdqlConfig&) const = default;
};

/// Network input for s = [LOC, y]: (loc, demand / demand_scale). Demand above
/// the scale passes through unclamped.
std::vector<double> encode_state(const EnvState& state, double demand_scale);

/// Argmax of `values` restricted to `feasible`, lowest index on ties.
std::size_t feasible_argmax(const Eigen::VectorXd& values, std::span<const std::size_t> feasible);

/// r + gamma * max_{a feasible} Q'(s', a) per transition, or r when terminal.
/// Throws std::logic_error on an all-false mask for a non-terminal transition.
Eigen::VectorXd td_targets(std::span<const Transition* const> batch, const Mlp& q_net, const Mlp& target_net,
                           double gamma, bool decoupled_double_q = false);

/// One RMSProp step on the mean squared TD error of a uniformly sampled
/// minibatch, with gradient flowing only through the taken actions. Returns
/// std::nullopt without touching anything while the buffer holds fewer than
/// `batch_size` transitions.
std::optional<double> train_step(Mlp& q_net, const Mlp& target_net, const ReplayBuffer& buffer, RmsPropState& opt,
                                 const DdqlConfig& config, Rng& rng);

/// Batch loss for explicit transitions (no sampling); used by train_step.
double train_on_batch(Mlp& q_net, const Mlp& target_net, std::span<const Transition* const> batch,
                      RmsPropState& opt, const DdqlConfig& config);

/// Runs the training loop on any task exposing features. `q_net` and
/// `target_net` are updated in place.
std::vector<CurvePoint> train_ddql_task(EpisodicTask& task, Mlp& q_net, Mlp& target_net, const DdqlConfig& config,
                                        Rng& rng);

struct DdqlResult {
  Mlp q_net;
  Mlp target_net;
  double demand_scale = 1.0;
  std::vector<CurvePoint> curve;
};

/// Trains on `profiles` with freshly initialized networks seeded by `seed`.
DdqlResult train_ddql(const Environment& env, const std::vector<LoadProfile>& profiles, const DdqlConfig& config,
                      std::uint64_t seed);

/// Deterministic feasible argmax of the network outputs.
Policy greedy_policy(const Mlp& q_net, double demand_scale);

void to_json(nlohmann::json& j, const DdqlConfig& c);
void from_json(const nlohmann::json& j, DdqlConfig& c);

}  // namespace pcmu
