#pragma once

// Battery MDP: feasibility of charging rates, the level-of-charge transition,
// and the privacy/cost one-step reward.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pcmu/core.hpp"
#include "pcmu/task.hpp"

namespace pcmu {

/// s_t = [LOC_t, y_t] plus the position within the episode.
struct EnvState {
  BatteryState battery;
  double demand_kw = 0.0;
  std::size_t step_index = 0;
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  double grid_kw = 0.0;
  double loss_privacy = 0.0;
  double loss_cost = 0.0;
};

/// Tolerance absorbed (and clamped) when the level of charge leaves its range.
inline constexpr double kLocTolerance = 1e-9;

/// Validated bundle of everything the dynamics and reward depend on.
struct Environment {
  BatteryConfig battery;
  TariffSchedule tariff = TariffSchedule::ontario_winter();
  RewardConfig reward;
  std::vector<double> actions;

  /// Validates all parts and builds the action grid.
  static Environment make(const BatteryConfig& battery, TariffSchedule tariff, const RewardConfig& reward,
                          std::size_t n_actions);
};

/// Level of charge after applying `action_kw` for one step, unclamped.
double loc_after(const BatteryConfig& battery, double loc, double action_kw);

/// Grid indices whose rate respects the rate limits, keeps the level of
/// charge in range, and does not sell to the grid (q >= -demand).
/// Throws ConstraintError if nothing is feasible, which cannot happen when
/// the grid contains 0.
std::vector<std::size_t> feasible_actions(const EnvState& state, const BatteryConfig& battery,
                                          std::span<const double> grid);

bool is_feasible(const EnvState& state, const BatteryConfig& battery, double action_kw);

/// Applies `action_kw` and returns the successor state and the reward.
/// Throws ConstraintError naming the violated bound for infeasible actions.
StepOutcome step(const EnvState& state, double action_kw, double next_demand_kw, const TariffSchedule& tariff,
                 const RewardConfig& reward_cfg, const BatteryConfig& battery);

/// Chooses a grid index from the feasible set of `state`.
using Policy = std::function<std::size_t(const EnvState& state, std::span<const std::size_t> feasible)>;

/// Rolls `policy` over one recorded day starting from `initial_loc`.
EpisodeTrace run_episode(const Policy& policy, const LoadProfile& profile, double initial_loc,
                         const Environment& env);

/// Policy that always picks the feasible action closest to zero.
Policy idle_policy(const Environment& env);

/// Replays recorded days as an EpisodicTask. State indexing and feature
/// encoding are supplied by the agent that consumes the task.
class BatteryTask final : public EpisodicTask {
 public:
  struct Indexer {
    std::size_t state_count = 0;
    std::function<std::size_t(const EnvState&)> index;
  };
  struct Encoder {
    std::size_t feature_count = 0;
    std::function<std::vector<double>(const EnvState&)> encode;
  };

  /// Episodes start on a uniformly drawn day. The initial level of charge is
  /// uniform in [loc_min, loc_max] when `random_initial_loc`, else `initial_loc`.
  BatteryTask(Environment env, std::vector<LoadProfile> profiles, bool random_initial_loc, double initial_loc);

  void set_indexer(Indexer indexer) { indexer_ = std::move(indexer); }
  void set_encoder(Encoder encoder) { encoder_ = std::move(encoder); }

  std::size_t action_count() const override { return env_.actions.size(); }
  std::size_t episode_length() const override { return episode_length_; }
  void reset(Rng& rng) override;
  std::vector<std::size_t> feasible_actions() const override;
  TaskStep step(std::size_t action) override;

  std::size_t state_count() const override { return indexer_.state_count; }
  std::size_t state_index() const override;
  std::size_t feature_count() const override { return encoder_.feature_count; }
  std::vector<double> features() const override;

  const EnvState& state() const noexcept { return state_; }
  const Environment& environment() const noexcept { return env_; }
  const std::vector<LoadProfile>& profiles() const noexcept { return profiles_; }

 private:
  Environment env_;
  std::vector<LoadProfile> profiles_;
  bool random_initial_loc_;
  double initial_loc_;
  std::size_t episode_length_ = 0;
  std::size_t day_ = 0;
  EnvState state_;
  Indexer indexer_;
  Encoder encoder_;
};

}  // namespace pcmu
