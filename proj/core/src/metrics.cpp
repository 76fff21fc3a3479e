#include "pcmu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pcmu/errors.hpp"
#include "pcmu/knn.hpp"

namespace pcmu {

namespace {

double stddev(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / n);
}

std::vector<double> jittered(std::span<const double> v, double relative, Rng& rng) {
  std::vector<double> out(v.begin(), v.end());
  double scale = stddev(v);
  if (!(scale > 0.0)) scale = 1.0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : out) x += relative * scale * u(rng);
  return out;
}

// Number of entries of the sorted array within the open interval (c - r, c + r).
std::size_t count_open_interval(const std::vector<double>& sorted, double c, double r) {
  const auto lo = std::upper_bound(sorted.begin(), sorted.end(), c - r);
  const auto hi = std::lower_bound(sorted.begin(), sorted.end(), c + r);
  return hi > lo ? static_cast<std::size_t>(hi - lo) : 0;
}

std::string csv_number(double v) { return std::isfinite(v) ? fmt::format("{}", v) : std::string(); }

}  // namespace

double privacy_deviation(const EpisodeTrace& trace, double target_load_kw) {
  if (!(target_load_kw > 0.0)) throw ConfigError("privacy_deviation: target load must be > 0");
  if (trace.steps.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : trace.steps) sum += std::abs(s.grid_kw - target_load_kw) / target_load_kw;
  return sum / static_cast<double>(trace.steps.size());
}

double electricity_cost(const EpisodeTrace& trace, const TariffSchedule& tariff, double delta_t_h) {
  double sum = 0.0;
  for (const auto& s : trace.steps) {
    sum += delta_t_h * tariff_price(tariff, s.t, delta_t_h) * std::max(s.grid_kw, 0.0);
  }
  return sum;
}

double additional_cost(const EpisodeTrace& trace, const TariffSchedule& tariff, double delta_t_h) {
  double sum = 0.0;
  for (const auto& s : trace.steps) sum += delta_t_h * tariff_price(tariff, s.t, delta_t_h) * std::abs(s.action_kw);
  return sum;
}

double baseline_cost(const EpisodeTrace& trace, const TariffSchedule& tariff, double delta_t_h) {
  double sum = 0.0;
  for (const auto& s : trace.steps) sum += delta_t_h * tariff_price(tariff, s.t, delta_t_h) * s.demand_kw;
  return sum;
}

void MiEstimatorConfig::validate() const {
  if (k_neighbors < 1) throw ConfigError("mi.k_neighbors must be >= 1");
  if (!(noise_relative >= 0.0) || !std::isfinite(noise_relative)) {
    throw ConfigError("mi.noise_relative must be finite and >= 0");
  }
}

double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error(fmt::format("digamma: argument {} must be > 0", x));
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number series: 1/12, 1/120, 1/252, 1/240, 1/132, 691/32760.
  const double series =
      inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * 691.0 / 32760)))));
  return result + std::log(x) - 0.5 * inv - series;
}

double ksg_mi(std::span<const double> x, std::span<const double> y, const MiEstimatorConfig& config) {
  config.validate();
  if (x.size() != y.size()) throw DataError(fmt::format("ksg_mi: lengths differ ({} vs {})", x.size(), y.size()));
  const std::size_t n = x.size();
  const std::size_t k = config.k_neighbors;
  if (n <= k) throw DataError(fmt::format("ksg_mi: need more than k = {} samples (got {})", k, n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError("ksg_mi: non-finite sample");
  }

  Rng rng(config.seed);
  const auto xs = jittered(x, config.noise_relative, rng);
  const auto ys = jittered(y, config.noise_relative, rng);
  const KdTree2 tree(xs, ys);
  std::vector<double> sx = xs;
  std::vector<double> sy = ys;
  std::sort(sx.begin(), sx.end());
  std::sort(sy.begin(), sy.end());

  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = tree.kth_neighbor_distance(i, k);
    // Exclude the point itself from the marginal counts.
    const std::size_t nx = count_open_interval(sx, xs[i], eps) - 1;
    const std::size_t ny = count_open_interval(sy, ys[i], eps) - 1;
    acc += digamma(static_cast<double>(nx) + 1.0) + digamma(static_cast<double>(ny) + 1.0);
  }
  return digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) - acc / static_cast<double>(n);
}

EpisodeMetrics summarize_episode(const EpisodeTrace& trace, const Environment& env) {
  const double dt = env.battery.delta_t_h;
  const double lc = env.reward.target_load_kw;
  EpisodeMetrics m;
  m.privacy = privacy_deviation(trace, lc);
  m.cost = electricity_cost(trace, env.tariff, dt);
  m.additional = additional_cost(trace, env.tariff, dt);
  m.baseline_cost = baseline_cost(trace, env.tariff, dt);
  double base_f = 0.0;
  double abs_q = 0.0;
  for (const auto& s : trace.steps) {
    base_f += std::abs(s.demand_kw - lc) / lc;
    abs_q += std::abs(s.action_kw);
    m.total_reward += s.reward;
  }
  if (!trace.steps.empty()) {
    const double n = static_cast<double>(trace.steps.size());
    m.baseline_privacy = base_f / n;
    m.mean_abs_action_kw = abs_q / n;
  }
  return m;
}

MetricsReport evaluate_policy(const Policy& policy, const Environment& env, const std::vector<LoadProfile>& profiles,
                              double initial_loc, const MiEstimatorConfig& mi, std::vector<EpisodeTrace>* traces) {
  MetricsReport report;
  report.lambda = env.reward.lambda;
  std::vector<double> ys;
  std::vector<double> zs;
  for (const auto& p : profiles) {
    EpisodeTrace trace = run_episode(policy, p, initial_loc, env);
    const auto m = summarize_episode(trace, env);
    report.episodes.push_back(m);
    for (const auto& s : trace.steps) {
      ys.push_back(s.demand_kw);
      zs.push_back(s.grid_kw);
    }
    if (traces != nullptr) traces->push_back(std::move(trace));
  }
  if (report.episodes.empty()) return report;
  const double n = static_cast<double>(report.episodes.size());
  for (const auto& m : report.episodes) {
    report.F_avg += m.privacy / n;
    report.C_avg += m.cost / n;
    report.G_avg += m.additional / n;
    report.baseline_F_avg += m.baseline_privacy / n;
    report.baseline_C_avg += m.baseline_cost / n;
    report.mean_abs_action_kw += m.mean_abs_action_kw / n;
    report.reward_avg += m.total_reward / n;
  }
  report.mi_nats = ys.size() > mi.k_neighbors ? ksg_mi(ys, zs, mi) : std::numeric_limits<double>::quiet_NaN();
  return report;
}

std::vector<SweepRow> sweep_report(const std::vector<SweepInput>& inputs, const Environment& env,
                                   const std::vector<LoadProfile>& test, double initial_loc,
                                   const MiEstimatorConfig& mi) {
  std::vector<SweepRow> rows;
  for (const auto& in : inputs) {
    SweepRow row{in.lambda, std::nullopt};
    std::optional<Policy> policy = in.load ? in.load() : std::nullopt;
    if (policy) {
      Environment e = env;
      e.reward.lambda = in.lambda;
      e.reward.validate();
      row.report = evaluate_policy(*policy, e, test, initial_loc, mi);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_tradeoff_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "lambda,F,C,G,MI\n";
  for (const auto& r : rows) {
    os << csv_number(r.lambda);
    if (r.report) {
      os << ',' << csv_number(r.report->F_avg) << ',' << csv_number(r.report->C_avg) << ','
         << csv_number(r.report->G_avg) << ',' << csv_number(r.report->mi_nats);
    } else {
      os << ",,,,";
    }
    os << '\n';
  }
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "episode,total_reward,epsilon,loss_mean\n";
  for (const auto& c : curve) {
    os << c.episode << ',' << csv_number(c.total_reward) << ',' << csv_number(c.epsilon) << ','
       << csv_number(c.loss_mean) << '\n';
  }
}

void to_json(nlohmann::json& j, const EpisodeMetrics& m) {
  j = {{"F", m.privacy},
       {"C", m.cost},
       {"G", m.additional},
       {"baseline_C", m.baseline_cost},
       {"baseline_F", m.baseline_privacy},
       {"mean_abs_action_kw", m.mean_abs_action_kw},
       {"total_reward", m.total_reward}};
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"lambda", r.lambda},
       {"F_avg", r.F_avg},
       {"C_avg", r.C_avg},
       {"G_avg", r.G_avg},
       {"mi_nats", std::isfinite(r.mi_nats) ? nlohmann::json(r.mi_nats) : nlohmann::json(nullptr)},
       {"baseline_F_avg", r.baseline_F_avg},
       {"baseline_C_avg", r.baseline_C_avg},
       {"mean_abs_action_kw", r.mean_abs_action_kw},
       {"reward_avg", r.reward_avg},
       {"episodes", r.episodes}};
}

void to_json(nlohmann::json& j, const MiEstimatorConfig& c) {
  j = {{"k_neighbors", c.k_neighbors}, {"noise_relative", c.noise_relative}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, MiEstimatorConfig& c) {
  const MiEstimatorConfig d;
  c.k_neighbors = j.value("k_neighbors", d.k_neighbors);
  c.noise_relative = j.value("noise_relative", d.noise_relative);
  c.seed = j.value("seed", d.seed);
}

}  // namespace pcmu
