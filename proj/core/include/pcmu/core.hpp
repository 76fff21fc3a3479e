#pragma once

// Domain types shared by every module: battery parameters, the time-of-use
// tariff, the reward weighting, load profiles and episode traces.

#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace pcmu {

/// Physical parameters of the rechargeable battery. Defaults are a 10 kWh,
/// lossless unit with a +-4 kW rate limit sampled every 15 minutes.
struct BatteryConfig {
  double capacity_kwh = 10.0;
  double efficiency = 1.0;
  double q_min_kw = -4.0;
  double q_max_kw = 4.0;
  double loc_min = 0.0;
  double loc_max = 1.0;
  double delta_t_h = 0.25;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const BatteryConfig&) const = default;
};

struct BatteryState {
  double loc = 0.5;
};

struct TariffBand {
  double start_hour = 0.0;
  double end_hour = 24.0;
  double price_per_kwh = 0.0;

  bool operator==(const TariffBand&) const = default;
};

/// Piecewise-constant price over a 24 h day. Bands partition [0, 24);
/// a band whose start is after its end wraps midnight and is stored split
/// into two bands.
class TariffSchedule {
 public:
  explicit TariffSchedule(std::vector<TariffBand> bands);

  /// Ontario winter time-of-use: off-peak 0.101 (19:00-07:00),
  /// mid-peak 0.144 (11:00-17:00), on-peak 0.208 (07:00-11:00, 17:00-19:00).
  static TariffSchedule ontario_winter();

  double price_at_hour(double hour) const;
  const std::vector<TariffBand>& bands() const noexcept { return bands_; }

  bool operator==(const TariffSchedule&) const = default;

 private:
  std::vector<TariffBand> bands_;
};

/// Price of the band containing the wall-clock start of `step_index`, with
/// step 0 starting at 00:00. Throws std::out_of_range past the end of the day.
double tariff_price(const TariffSchedule& schedule, std::size_t step_index, double delta_t_h);

/// Weighting of the one-step loss: lambda * cost + (1 - lambda) * privacy.
struct RewardConfig {
  double lambda = 0.0;
  double target_load_kw = 0.7;

  void validate() const;

  bool operator==(const RewardConfig&) const = default;
};

struct SimulationConfig {
  std::size_t episode_length = 96;
  /// Odd by default so that the idle action q = 0 lies on the grid.
  std::size_t n_actions = 161;
  double eval_initial_loc = 0.5;

  void validate() const;

  bool operator==(const SimulationConfig&) const = default;
};

/// Demand powers y_t (kW) of one episode.
struct LoadProfile {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  /// Throws DataError on negative or non-finite samples or a length other
  /// than `expected_length`.
  void validate(std::size_t expected_length) const;
};

struct StepRecord {
  std::size_t t = 0;
  double loc = 0.0;
  double demand_kw = 0.0;
  double action_kw = 0.0;
  double grid_kw = 0.0;
  double price = 0.0;
  double reward = 0.0;
  double loss_privacy = 0.0;
  double loss_cost = 0.0;
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;

  std::size_t size() const noexcept { return steps.size(); }
};

/// Quantile of all demand samples (linear interpolation between order
/// statistics). Throws DataError when there are no samples.
double demand_quantile(const std::vector<LoadProfile>& profiles, double q);

/// Uniformly spaced charging rates from q_min_kw to q_max_kw inclusive.
/// Values within 1e-12 of zero are snapped to exactly 0.
std::vector<double> action_grid(const BatteryConfig& config, std::size_t n_actions);

/// Index of the grid value closest to 0 (lowest index on ties).
std::size_t nearest_to_zero(const std::vector<double>& grid);

void to_json(nlohmann::json& j, const BatteryConfig& c);
void from_json(const nlohmann::json& j, BatteryConfig& c);
void to_json(nlohmann::json& j, const TariffSchedule& t);
TariffSchedule tariff_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const RewardConfig& c);
void from_json(const nlohmann::json& j, RewardConfig& c);
void to_json(nlohmann::json& j, const SimulationConfig& c);
void from_json(const nlohmann::json& j, SimulationConfig& c);

}  // namespace pcmu
