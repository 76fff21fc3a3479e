#include "pcmu/env.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pcmu/errors.hpp"

namespace pcmu {

namespace {

constexpr double kRateTolerance = 1e-12;

}  // namespace

Environment Environment::make(const BatteryConfig& battery, TariffSchedule tariff, const RewardConfig& reward,
                              std::size_t n_actions) {
  battery.validate();
  reward.validate();
  Environment env{battery, std::move(tariff), reward, action_grid(battery, n_actions)};
  return env;
}

double loc_after(const BatteryConfig& battery, double loc, double action_kw) {
  return loc + action_kw * battery.delta_t_h * battery.efficiency / battery.capacity_kwh;
}

bool is_feasible(const EnvState& state, const BatteryConfig& battery, double action_kw) {
  if (action_kw < battery.q_min_kw - kRateTolerance || action_kw > battery.q_max_kw + kRateTolerance) return false;
  const double next = loc_after(battery, state.battery.loc, action_kw);
  if (next < battery.loc_min - kLocTolerance || next > battery.loc_max + kLocTolerance) return false;
  return action_kw >= -state.demand_kw - kRateTolerance;
}

std::vector<std::size_t> feasible_actions(const EnvState& state, const BatteryConfig& battery,
                                          std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("feasible_actions: empty action grid");
  std::vector<std::size_t> out;
  out.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (is_feasible(state, battery, grid[i])) out.push_back(i);
  }
  if (out.empty()) {
    throw ConstraintError(fmt::format("no feasible action at LOC {} demand {} kW; use an action grid containing 0",
                                      state.battery.loc, state.demand_kw));
  }
  return out;
}

StepOutcome step(const EnvState& state, double action_kw, double next_demand_kw, const TariffSchedule& tariff,
                 const RewardConfig& reward_cfg, const BatteryConfig& battery) {
  if (action_kw < battery.q_min_kw - kRateTolerance) {
    throw ConstraintError(fmt::format("charging rate {} kW below q_min {} kW", action_kw, battery.q_min_kw));
  }
  if (action_kw > battery.q_max_kw + kRateTolerance) {
    throw ConstraintError(fmt::format("charging rate {} kW above q_max {} kW", action_kw, battery.q_max_kw));
  }
  double next = loc_after(battery, state.battery.loc, action_kw);
  if (next < battery.loc_min - kLocTolerance) {
    throw ConstraintError(fmt::format("level of charge {} below loc_min {}", next, battery.loc_min));
  }
  if (next > battery.loc_max + kLocTolerance) {
    throw ConstraintError(fmt::format("level of charge {} above loc_max {}", next, battery.loc_max));
  }
  const double grid_kw = state.demand_kw + action_kw;
  if (grid_kw < -kRateTolerance) {
    throw ConstraintError(fmt::format("grid load {} kW below 0 (selling to the grid)", grid_kw));
  }
  next = std::clamp(next, battery.loc_min, battery.loc_max);

  const double price = tariff_price(tariff, state.step_index, battery.delta_t_h);
  StepOutcome out;
  out.grid_kw = grid_kw;
  out.loss_privacy = std::abs(grid_kw - reward_cfg.target_load_kw) / reward_cfg.target_load_kw;
  out.loss_cost = battery.delta_t_h * price * std::abs(action_kw);
  out.reward = -(reward_cfg.lambda * out.loss_cost + (1.0 - reward_cfg.lambda) * out.loss_privacy);
  out.next_state.battery.loc = next;
  out.next_state.demand_kw = next_demand_kw;
  out.next_state.step_index = state.step_index + 1;
  return out;
}

EpisodeTrace run_episode(const Policy& policy, const LoadProfile& profile, double initial_loc,
                         const Environment& env) {
  const auto& bat = env.battery;
  if (profile.values.empty()) throw DataError("run_episode: empty load profile");
  if (!(initial_loc >= bat.loc_min && initial_loc <= bat.loc_max)) {
    throw ConfigError(fmt::format("initial LOC {} outside [{}, {}]", initial_loc, bat.loc_min, bat.loc_max));
  }
  const std::size_t horizon = profile.size();
  EpisodeTrace trace;
  trace.steps.reserve(horizon);
  EnvState state{{initial_loc}, profile.values[0], 0};
  for (std::size_t t = 0; t < horizon; ++t) {
    const auto feasible = feasible_actions(state, bat, env.actions);
    const std::size_t a = policy(state, feasible);
    if (!std::binary_search(feasible.begin(), feasible.end(), a)) {
      throw ConstraintError(fmt::format("policy chose infeasible action index {} at step {}", a, t));
    }
    const double q = env.actions[a];
    const double next_demand = t + 1 < horizon ? profile.values[t + 1] : profile.values[t];
    const auto out = step(state, q, next_demand, env.tariff, env.reward, bat);
    trace.steps.push_back({t, state.battery.loc, state.demand_kw, q, out.grid_kw,
                           tariff_price(env.tariff, t, bat.delta_t_h), out.reward, out.loss_privacy,
                           out.loss_cost});
    state = out.next_state;
  }
  return trace;
}

Policy idle_policy(const Environment& env) {
  return [grid = env.actions](const EnvState&, std::span<const std::size_t> feasible) {
    std::size_t best = feasible.front();
    for (auto i : feasible) {
      if (std::abs(grid[i]) < std::abs(grid[best])) best = i;
    }
    return best;
  };
}

BatteryTask::BatteryTask(Environment env, std::vector<LoadProfile> profiles, bool random_initial_loc,
                         double initial_loc)
    : env_(std::move(env)),
      profiles_(std::move(profiles)),
      random_initial_loc_(random_initial_loc),
      initial_loc_(initial_loc) {
  if (profiles_.empty()) throw DataError("BatteryTask: no load profiles");
  for (const auto& p : profiles_) {
    if (p.values.empty()) throw DataError("BatteryTask: empty load profile");
    episode_length_ = std::max(episode_length_, p.values.size());
  }
}

void BatteryTask::reset(Rng& rng) {
  day_ = std::uniform_int_distribution<std::size_t>(0, profiles_.size() - 1)(rng);
  double loc = initial_loc_;
  if (random_initial_loc_) {
    loc = std::uniform_real_distribution<double>(env_.battery.loc_min, env_.battery.loc_max)(rng);
  }
  state_ = EnvState{{loc}, profiles_[day_].values[0], 0};
}

std::vector<std::size_t> BatteryTask::feasible_actions() const {
  return pcmu::feasible_actions(state_, env_.battery, env_.actions);
}

TaskStep BatteryTask::step(std::size_t action) {
  const auto& day = profiles_[day_].values;
  const std::size_t t = state_.step_index;
  const double next_demand = t + 1 < day.size() ? day[t + 1] : day[t];
  const auto out = pcmu::step(state_, env_.actions.at(action), next_demand, env_.tariff, env_.reward, env_.battery);
  state_ = out.next_state;
  const bool done = state_.step_index >= day.size();
  return {out.reward, done, done};
}

std::size_t BatteryTask::state_index() const {
  if (!indexer_.index) throw ConfigError("BatteryTask: no state indexer configured");
  return indexer_.index(state_);
}

std::vector<double> BatteryTask::features() const {
  if (!encoder_.encode) throw ConfigError("BatteryTask: no feature encoder configured");
  return encoder_.encode(state_);
}

}  // namespace pcmu
