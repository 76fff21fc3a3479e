#pragma once

// Policy evaluation: privacy deviation, electricity cost, additional cost,
// trade-off sweeps, and the KSG mutual-information estimator.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pcmu/env.hpp"

namespace pcmu {

/// Mean over the episode of |z_t - l_c| / l_c.
double privacy_deviation(const EpisodeTrace& trace, double target_load_kw);

/// Daily bill: sum over the episode of dt * h_t * max(z_t, 0).
double electricity_cost(const EpisodeTrace& trace, const TariffSchedule& tariff, double delta_t_h);

/// Sum over the episode of dt * h_t * |q_t|; an upper bound on the bill
/// increase caused by the battery and a wear proxy.
double additional_cost(const EpisodeTrace& trace, const TariffSchedule& tariff, double delta_t_h);

/// Bill the household would pay without a battery: sum of dt * h_t * y_t.
double baseline_cost(const EpisodeTrace& trace, const TariffSchedule& tariff, double delta_t_h);

struct MiEstimatorConfig {
  std::size_t k_neighbors = 4;
  /// Tie-breaking jitter, relative to each marginal's standard deviation.
  double noise_relative = 1e-10;
  std::uint64_t seed = 0;

  void validate() const;

  bool operator==(const MiEstimatorConfig&) const = default;
};

/// Digamma function for x > 0 (recurrence up to x >= 10, then the
/// asymptotic series); absolute error below 1e-10.
double digamma(double x);

/// KSG estimator #1 of I(X;Y) in nats with max-norm neighbourhoods:
///   psi(k) + psi(N) - < psi(n_x + 1) + psi(n_y + 1) >.
/// Throws DataError on length mismatch or N <= k.
double ksg_mi(std::span<const double> x, std::span<const double> y, const MiEstimatorConfig& config);

struct EpisodeMetrics {
  double privacy = 0.0;          // F
  double cost = 0.0;             // C, currency per day
  double additional = 0.0;       // G, currency per day
  double baseline_cost = 0.0;    // C without battery
  double baseline_privacy = 0.0; // F without battery
  double mean_abs_action_kw = 0.0;
  double total_reward = 0.0;
};

struct MetricsReport {
  double lambda = 0.0;
  double F_avg = 0.0;
  double C_avg = 0.0;
  double G_avg = 0.0;
  double mi_nats = 0.0;
  double baseline_F_avg = 0.0;
  double baseline_C_avg = 0.0;
  double mean_abs_action_kw = 0.0;
  double reward_avg = 0.0;
  std::vector<EpisodeMetrics> episodes;
};

/// Greedy rollout of `policy` over every profile from `initial_loc`, with
/// metrics averaged over days and MI over the pooled (y_t, z_t) pairs. The
/// traces are returned through `traces` when non-null.
MetricsReport evaluate_policy(const Policy& policy, const Environment& env, const std::vector<LoadProfile>& profiles,
                              double initial_loc, const MiEstimatorConfig& mi,
                              std::vector<EpisodeTrace>* traces = nullptr);

EpisodeMetrics summarize_episode(const EpisodeTrace& trace, const Environment& env);

/// One point of a trade-off sweep; an empty `load` marks a missing checkpoint.
struct SweepInput {
  double lambda = 0.0;
  std::function<std::optional<Policy>()> load;
};

struct SweepRow {
  double lambda = 0.0;
  std::optional<MetricsReport> report;
};

/// Evaluates every available policy on `test` with the reward weight set to
/// that row's lambda. Unavailable policies yield rows without a report.
std::vector<SweepRow> sweep_report(const std::vector<SweepInput>& inputs, const Environment& env,
                                   const std::vector<LoadProfile>& test, double initial_loc,
                                   const MiEstimatorConfig& mi);

/// `lambda,F,C,G,MI`; missing rows leave the metric fields empty.
void write_tradeoff_csv(std::ostream& os, const std::vector<SweepRow>& rows);
/// `episode,total_reward,epsilon,loss_mean`.
void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve);

void to_json(nlohmann::json& j, const MetricsReport& r);
void to_json(nlohmann::json& j, const EpisodeMetrics& m);
void to_json(nlohmann::json& j, const MiEstimatorConfig& c);
void from_json(const nlohmann::json& j, MiEstimatorConfig& c);

}  // namespace pcmu
