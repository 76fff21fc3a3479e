#pragma once

// Classical tabular Q-learning over quantized (LOC, demand) states.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pcmu/env.hpp"
#include "pcmu/task.hpp"

namespace pcmu {

/// Uniform binning of the level of charge and the demand. A value on the top
/// edge maps to the last bin; demand above `demand_max_kw` is clamped.
struct Quantizer {
  std::size_t n_loc_bins = 800;
  std::size_t n_demand_bins = 100;
  std::size_t n_action_bins = 161;
  double loc_min = 0.0;
  double loc_max = 1.0;
  double demand_max_kw = 1.0;

  void validate() const;

  std::size_t loc_bin(double loc) const;
  std::size_t demand_bin(double demand_kw) const;
  std::pair<std::size_t, std::size_t> quantize(const EnvState& state) const;

  std::size_t state_count() const noexcept { return n_loc_bins * n_demand_bins; }
  /// Row-major flattening loc_bin * n_demand_bins + demand_bin.
  std::size_t state_index(const EnvState& state) const;

  bool operator==(const Quantizer&) const = default;
};

/// Dense state x action value table with visit counters, zero-initialized.
class QTable {
 public:
  QTable(std::size_t n_states, std::size_t n_actions);

  std::size_t state_count() const noexcept { return n_states_; }
  std::size_t action_count() const noexcept { return n_actions_; }

  double value(std::size_t s, std::size_t a) const { return values_[offset(s, a)]; }
  double& value(std::size_t s, std::size_t a) { return values_[offset(s, a)]; }
  std::uint32_t visits(std::size_t s, std::size_t a) const { return visits_[offset(s, a)]; }
  void record_visit(std::size_t s, std::size_t a) { ++visits_[offset(s, a)]; }

  std::span<const double> row(std::size_t s) const;
  const std::vector<double>& values() const noexcept { return values_; }

  /// Highest value among `actions` (lowest index wins ties), as (index, value).
  std::pair<std::size_t, double> best(std::size_t s, std::span<const std::size_t> actions) const;

  bool operator==(const QTable&) const = default;

 private:
  std::size_t offset(std::size_t s, std::size_t a) const;

  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> values_;
  std::vector<std::uint32_t> visits_;
};

/// One Q-learning backup:
/// Q(s,a) += alpha * (r + gamma * max_{a' feasible} Q(s',a') - Q(s,a)),
/// with the bootstrap term dropped when `is_terminal`.
void update(QTable& table, std::size_t state, std::size_t action, double reward, std::size_t next_state,
            std::span<const std::size_t> feasible_next_actions, double alpha, double gamma, bool is_terminal);

/// Uniform feasible action with probability epsilon, else the feasible argmax
/// with ties broken towards the lowest index.
std::size_t select_action_epsilon_greedy(const QTable& table, std::size_t state,
                                         std::span<const std::size_t> feasible_actions, double epsilon, Rng& rng);

struct CqlConfig {
  double gamma = 0.8;
  double alpha_start = 0.5;
  double alpha_end = 0.05;
  std::uint64_t alpha_decay_steps = 1'000'000;
  std::size_t n_episodes = 25'000;
  EpsilonSchedule epsilon;
  /// Level-of-charge bins; demand bins come from here too.
  std::size_t n_loc_bins = 800;
  std::size_t n_demand_bins = 100;
  /// Quantile of training demand used as the demand ceiling.
  double demand_quantile = 0.995;

  void validate() const;
  double alpha_at(std::uint64_t step) const;

  bool operator==(const CqlConfig&) const = default;
};

/// Runs `config.n_episodes` episodes of epsilon-greedy Q-learning on `task`,
/// updating `table` in place. Returns one curve point per episode.
std::vector<CurvePoint> train_tabular(EpisodicTask& task, QTable& table, const CqlConfig& config, Rng& rng);

struct CqlResult {
  Quantizer quantizer;
  QTable table;
  std::vector<CurvePoint> curve;
};

/// Trains on `profiles` (one episode = one uniformly drawn day, random initial
/// LOC). The demand ceiling is the configured quantile of the training data.
CqlResult train_cql(const Environment& env, const std::vector<LoadProfile>& profiles, const CqlConfig& config,
                    std::uint64_t seed);

/// Deterministic greedy policy reading the table at the quantized state.
Policy greedy_policy(const QTable& table, const Quantizer& quantizer);

/// Binary checkpoint, little-endian:
///   "PCMUQTB1" | u32 version=1 | u64 n_loc, n_demand, n_action |
///   f64 loc_min, loc_max, demand_max_kw | u64 seed |
///   f64 values[n_loc][n_demand][n_action]
void save_qtable(const std::filesystem::path& path, const QTable& table, const Quantizer& quantizer,
                 std::uint64_t seed);
struct LoadedQTable {
  QTable table;
  Quantizer quantizer;
  std::uint64_t seed = 0;
};
LoadedQTable load_qtable(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const CqlConfig& c);
void from_json(const nlohmann::json& j, CqlConfig& c);
void to_json(nlohmann::json& j, const EpsilonSchedule& e);
void from_json(const nlohmann::json& j, EpsilonSchedule& e);

}  // namespace pcmu
