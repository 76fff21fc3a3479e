#include "pcmu/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pcmu/errors.hpp"

namespace pcmu {

namespace {

constexpr double kHoursPerDay = 24.0;
constexpr double kBandTolerance = 1e-9;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

bool finite_all(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void BatteryConfig::validate() const {
  require(finite_all({capacity_kwh, efficiency, q_min_kw, q_max_kw, loc_min, loc_max, delta_t_h}),
          "battery: all fields must be finite");
  require(capacity_kwh > 0.0, fmt::format("battery.capacity_kwh must be > 0 (got {})", capacity_kwh));
  require(efficiency > 0.0 && efficiency <= 1.0,
          fmt::format("battery.efficiency must be in (0, 1] (got {})", efficiency));
  require(q_min_kw < 0.0, fmt::format("battery.q_min_kw must be < 0 (got {})", q_min_kw));
  require(q_max_kw > 0.0, fmt::format("battery.q_max_kw must be > 0 (got {})", q_max_kw));
  require(loc_min >= 0.0 && loc_max <= 1.0 && loc_min < loc_max,
          fmt::format("battery: need 0 <= loc_min < loc_max <= 1 (got [{}, {}])", loc_min, loc_max));
  require(delta_t_h > 0.0, fmt::format("battery.delta_t_h must be > 0 (got {})", delta_t_h));
}

TariffSchedule::TariffSchedule(std::vector<TariffBand> bands) {
  for (const auto& b : bands) {
    require(finite_all({b.start_hour, b.end_hour, b.price_per_kwh}), "tariff: band fields must be finite");
    require(b.price_per_kwh > 0.0, fmt::format("tariff: price must be > 0 (got {})", b.price_per_kwh));
    require(b.start_hour >= 0.0 && b.start_hour < kHoursPerDay && b.end_hour > 0.0 && b.end_hour <= kHoursPerDay,
            fmt::format("tariff: band [{}, {}) outside [0, 24]", b.start_hour, b.end_hour));
    require(b.start_hour != b.end_hour, "tariff: empty band");
    if (b.start_hour > b.end_hour) {
      bands_.push_back({b.start_hour, kHoursPerDay, b.price_per_kwh});
      bands_.push_back({0.0, b.end_hour, b.price_per_kwh});
    } else {
      bands_.push_back(b);
    }
  }
  require(!bands_.empty(), "tariff: at least one band required");
  std::sort(bands_.begin(), bands_.end(),
            [](const TariffBand& a, const TariffBand& b) { return a.start_hour < b.start_hour; });
  require(std::abs(bands_.front().start_hour) < kBandTolerance, "tariff: bands must start at 00:00");
  require(std::abs(bands_.back().end_hour - kHoursPerDay) < kBandTolerance, "tariff: bands must end at 24:00");
  for (std::size_t i = 1; i < bands_.size(); ++i) {
    const double gap = bands_[i].start_hour - bands_[i - 1].end_hour;
    require(std::abs(gap) < kBandTolerance,
            fmt::format("tariff: {} at {:.4g} h", gap > 0 ? "gap" : "overlap", bands_[i - 1].end_hour));
  }
}

TariffSchedule TariffSchedule::ontario_winter() {
  return TariffSchedule({{0.0, 7.0, 0.101},
                         {7.0, 11.0, 0.208},
                         {11.0, 17.0, 0.144},
                         {17.0, 19.0, 0.208},
                         {19.0, 24.0, 0.101}});
}

double TariffSchedule::price_at_hour(double hour) const {
  if (!(hour >= 0.0 && hour < kHoursPerDay)) {
    throw std::out_of_range(fmt::format("tariff: hour {} outside [0, 24)", hour));
  }
  // Bands are sorted; find the last band starting at or before `hour`.
  auto it = std::upper_bound(bands_.begin(), bands_.end(), hour + kBandTolerance,
                             [](double h, const TariffBand& b) { return h < b.start_hour; });
  return std::prev(it)->price_per_kwh;
}

double tariff_price(const TariffSchedule& schedule, std::size_t step_index, double delta_t_h) {
  const double steps_per_day = kHoursPerDay / delta_t_h;
  if (static_cast<double>(step_index) >= steps_per_day - kBandTolerance) {
    throw std::out_of_range(
        fmt::format("tariff: step {} outside the {}-step day", step_index, static_cast<long>(steps_per_day)));
  }
  return schedule.price_at_hour(static_cast<double>(step_index) * delta_t_h);
}

void RewardConfig::validate() const {
  require(std::isfinite(lambda) && lambda >= 0.0 && lambda <= 1.0,
          fmt::format("reward.lambda must be in [0, 1] (got {})", lambda));
  require(std::isfinite(target_load_kw) && target_load_kw > 0.0,
          fmt::format("reward.target_load_kw must be > 0 (got {})", target_load_kw));
}

void SimulationConfig::validate() const {
  require(episode_length > 0, "simulation.episode_length must be > 0");
  require(n_actions >= 2, fmt::format("simulation.n_actions must be >= 2 (got {})", n_actions));
  require(std::isfinite(eval_initial_loc), "simulation.eval_initial_loc must be finite");
}

void LoadProfile::validate(std::size_t expected_length) const {
  if (values.size() != expected_length) {
    throw DataError(fmt::format("load profile has {} samples, expected {}", values.size(), expected_length));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0) {
      throw DataError(fmt::format("load profile sample {} is {} (must be finite and >= 0)", i, values[i]));
    }
  }
}

double demand_quantile(const std::vector<LoadProfile>& profiles, double q) {
  std::vector<double> all;
  for (const auto& p : profiles) all.insert(all.end(), p.values.begin(), p.values.end());
  if (all.empty()) throw DataError("demand_quantile: no samples");
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(all.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, all.size() - 1);
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(lo), all.end());
  const double v_lo = all[lo];
  const double v_hi = hi == lo ? v_lo : *std::min_element(all.begin() + static_cast<std::ptrdiff_t>(lo) + 1, all.end());
  return v_lo + (pos - static_cast<double>(lo)) * (v_hi - v_lo);
}

std::vector<double> action_grid(const BatteryConfig& config, std::size_t n_actions) {
  if (n_actions < 2) throw ConfigError(fmt::format("action grid needs n_actions >= 2 (got {})", n_actions));
  std::vector<double> grid(n_actions);
  const double span = config.q_max_kw - config.q_min_kw;
  const auto last = static_cast<double>(n_actions - 1);
  for (std::size_t i = 0; i < n_actions; ++i) {
    double v = config.q_min_kw + span * static_cast<double>(i) / last;
    if (std::abs(v) < 1e-12) v = 0.0;
    grid[i] = v;
  }
  grid.back() = config.q_max_kw;
  return grid;
}

std::size_t nearest_to_zero(const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("empty action grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (std::abs(grid[i]) < std::abs(grid[best])) best = i;
  }
  return best;
}

// JSON. Missing fields keep their defaults.

void to_json(nlohmann::json& j, const BatteryConfig& c) {
  j = {{"capacity_kwh", c.capacity_kwh}, {"efficiency", c.efficiency}, {"q_min_kw", c.q_min_kw},
       {"q_max_kw", c.q_max_kw},         {"loc_min", c.loc_min},       {"loc_max", c.loc_max},
       {"delta_t_h", c.delta_t_h}};
}

void from_json(const nlohmann::json& j, BatteryConfig& c) {
  const BatteryConfig d;
  c.capacity_kwh = j.value("capacity_kwh", d.capacity_kwh);
  c.efficiency = j.value("efficiency", d.efficiency);
  c.q_min_kw = j.value("q_min_kw", d.q_min_kw);
  c.q_max_kw = j.value("q_max_kw", d.q_max_kw);
  c.loc_min = j.value("loc_min", d.loc_min);
  c.loc_max = j.value("loc_max", d.loc_max);
  c.delta_t_h = j.value("delta_t_h", d.delta_t_h);
}

void to_json(nlohmann::json& j, const TariffSchedule& t) {
  j = nlohmann::json::array();
  for (const auto& b : t.bands()) {
    j.push_back({{"start_hour", b.start_hour}, {"end_hour", b.end_hour}, {"price_per_kwh", b.price_per_kwh}});
  }
  j = {{"bands", j}};
}

TariffSchedule tariff_from_json(const nlohmann::json& j) {
  if (!j.contains("bands")) return TariffSchedule::ontario_winter();
  std::vector<TariffBand> bands;
  for (const auto& b : j.at("bands")) {
    bands.push_back({b.at("start_hour").get<double>(), b.at("end_hour").get<double>(),
                     b.at("price_per_kwh").get<double>()});
  }
  return TariffSchedule(std::move(bands));
}

void to_json(nlohmann::json& j, const RewardConfig& c) {
  j = {{"lambda", c.lambda}, {"target_load_kw", c.target_load_kw}};
}

void from_json(const nlohmann::json& j, RewardConfig& c) {
  const RewardConfig d;
  c.lambda = j.value("lambda", d.lambda);
  c.target_load_kw = j.value("target_load_kw", d.target_load_kw);
}

void to_json(nlohmann::json& j, const SimulationConfig& c) {
  j = {{"episode_length", c.episode_length}, {"n_actions", c.n_actions}, {"eval_initial_loc", c.eval_initial_loc}};
}

void from_json(const nlohmann::json& j, SimulationConfig& c) {
  const SimulationConfig d;
  c.episode_length = j.value("episode_length", d.episode_length);
  c.n_actions = j.value("n_actions", d.n_actions);
  c.eval_initial_loc = j.value("eval_initial_loc", d.eval_initial_loc);
}

}  // namespace pcmu
