#include "pcmu/qtable.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "binary_io.hpp"
#include "pcmu/errors.hpp"

namespace pcmu {

namespace {

constexpr std::string_view kQTableMagic = "PCMUQTB1";
constexpr std::uint32_t kQTableVersion = 1;

std::size_t uniform_bin(double value, double lo, double hi, std::size_t n) {
  const double norm = (value - lo) / (hi - lo);
  if (!(norm > 0.0)) return 0;
  const auto bin = static_cast<std::size_t>(std::floor(norm * static_cast<double>(n)));
  return std::min(bin, n - 1);
}

}  // namespace

void Quantizer::validate() const {
  if (n_loc_bins == 0 || n_demand_bins == 0 || n_action_bins == 0) {
    throw ConfigError("quantizer: bin counts must be positive");
  }
  if (!(loc_max > loc_min)) throw ConfigError("quantizer: loc_max must exceed loc_min");
  if (!(demand_max_kw > 0.0) || !std::isfinite(demand_max_kw)) {
    throw ConfigError(fmt::format("quantizer: demand_max_kw must be > 0 (got {})", demand_max_kw));
  }
}

std::size_t Quantizer::loc_bin(double loc) const { return uniform_bin(loc, loc_min, loc_max, n_loc_bins); }

std::size_t Quantizer::demand_bin(double demand_kw) const {
  if (demand_kw > demand_max_kw) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      spdlog::warn("demand {:.3f} kW above quantizer ceiling {:.3f} kW; clamping to the last bin", demand_kw,
                   demand_max_kw);
    }
  }
  return uniform_bin(demand_kw, 0.0, demand_max_kw, n_demand_bins);
}

std::pair<std::size_t, std::size_t> Quantizer::quantize(const EnvState& state) const {
  return {loc_bin(state.battery.loc), demand_bin(state.demand_kw)};
}

std::size_t Quantizer::state_index(const EnvState& state) const {
  const auto [l, d] = quantize(state);
  return l * n_demand_bins + d;
}

QTable::QTable(std::size_t n_states, std::size_t n_actions)
    : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, 0.0), visits_(n_states * n_actions, 0) {
  if (n_states == 0 || n_actions == 0) throw ConfigError("QTable: empty shape");
}

std::size_t QTable::offset(std::size_t s, std::size_t a) const {
  if (s >= n_states_ || a >= n_actions_) {
    throw std::out_of_range(fmt::format("QTable index ({}, {}) outside {}x{}", s, a, n_states_, n_actions_));
  }
  return s * n_actions_ + a;
}

std::span<const double> QTable::row(std::size_t s) const {
  return std::span<const double>(values_).subspan(offset(s, 0), n_actions_);
}

std::pair<std::size_t, double> QTable::best(std::size_t s, std::span<const std::size_t> actions) const {
  if (actions.empty()) throw std::logic_error("QTable::best: empty action set");
  const auto r = row(s);
  std::size_t arg = actions.front();
  double v = -std::numeric_limits<double>::infinity();
  for (auto a : actions) {
    if (a >= n_actions_) throw std::out_of_range(fmt::format("QTable action {} out of range", a));
    if (r[a] > v) {
      v = r[a];
      arg = a;
    }
  }
  return {arg, v};
}

void update(QTable& table, std::size_t state, std::size_t action, double reward, std::size_t next_state,
            std::span<const std::size_t> feasible_next_actions, double alpha, double gamma, bool is_terminal) {
  double bootstrap = 0.0;
  if (!is_terminal) {
    if (feasible_next_actions.empty()) throw std::logic_error("update: no feasible next action on non-terminal step");
    bootstrap = gamma * table.best(next_state, feasible_next_actions).second;
  }
  double& q = table.value(state, action);
  q += alpha * (reward + bootstrap - q);
}

std::size_t select_action_epsilon_greedy(const QTable& table, std::size_t state,
                                         std::span<const std::size_t> feasible_actions, double epsilon, Rng& rng) {
  if (feasible_actions.empty()) throw std::logic_error("select_action_epsilon_greedy: empty feasible set");
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    return feasible_actions[std::uniform_int_distribution<std::size_t>(0, feasible_actions.size() - 1)(rng)];
  }
  return table.best(state, feasible_actions).first;
}

void CqlConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError(fmt::format("cql.gamma must be in [0, 1] (got {})", gamma));
  for (double a : {alpha_start, alpha_end}) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(fmt::format("cql.alpha must be in [0, 1] (got {})", a));
  }
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0)) {
    throw ConfigError("cql.epsilon endpoints must be in [0, 1]");
  }
  if (n_loc_bins == 0 || n_demand_bins == 0) throw ConfigError("cql: bin counts must be positive");
  if (!(demand_quantile > 0.0 && demand_quantile <= 1.0)) {
    throw ConfigError("cql.demand_quantile must be in (0, 1]");
  }
}

double CqlConfig::alpha_at(std::uint64_t step) const {
  return linear_schedule(alpha_start, alpha_end, alpha_decay_steps, step);
}

std::vector<CurvePoint> train_tabular(EpisodicTask& task, QTable& table, const CqlConfig& config, Rng& rng) {
  config.validate();
  if (table.state_count() != task.state_count() || table.action_count() != task.action_count()) {
    throw ConfigError("train_tabular: table shape does not match the task");
  }
  const std::uint64_t total_steps = static_cast<std::uint64_t>(config.n_episodes) * task.episode_length();
  std::uint64_t step = 0;
  std::vector<CurvePoint> curve;
  curve.reserve(config.n_episodes);
  for (std::size_t ep = 0; ep < config.n_episodes; ++ep) {
    task.reset(rng);
    std::size_t s = task.state_index();
    auto feasible = task.feasible_actions();
    double total = 0.0;
    double eps = config.epsilon.at(step, total_steps);
    for (;;) {
      eps = config.epsilon.at(step, total_steps);
      const std::size_t a = select_action_epsilon_greedy(table, s, feasible, eps, rng);
      const TaskStep out = task.step(a);
      const std::size_t next = out.terminal ? s : task.state_index();
      std::vector<std::size_t> next_feasible;
      if (!out.terminal) next_feasible = task.feasible_actions();
      update(table, s, a, out.reward, next, next_feasible, config.alpha_at(step), config.gamma, out.terminal);
      table.record_visit(s, a);
      total += out.reward;
      ++step;
      if (out.done) break;
      s = next;
      feasible = std::move(next_feasible);
    }
    curve.push_back({ep, total, eps, std::numeric_limits<double>::quiet_NaN()});
  }
  return curve;
}

CqlResult train_cql(const Environment& env, const std::vector<LoadProfile>& profiles, const CqlConfig& config,
                    std::uint64_t seed) {
  config.validate();
  if (profiles.empty()) throw DataError("train_cql: no training profiles");
  Quantizer quantizer;
  quantizer.n_loc_bins = config.n_loc_bins;
  quantizer.n_demand_bins = config.n_demand_bins;
  quantizer.n_action_bins = env.actions.size();
  quantizer.loc_min = env.battery.loc_min;
  quantizer.loc_max = env.battery.loc_max;
  quantizer.demand_max_kw = std::max(demand_quantile(profiles, config.demand_quantile), 1e-6);
  quantizer.validate();

  BatteryTask task(env, profiles, /*random_initial_loc=*/true, env.battery.loc_min);
  task.set_indexer({quantizer.state_count(), [quantizer](const EnvState& s) { return quantizer.state_index(s); }});
  QTable table(quantizer.state_count(), env.actions.size());
  Rng rng(seed);
  auto curve = train_tabular(task, table, config, rng);
  return {quantizer, std::move(table), std::move(curve)};
}

Policy greedy_policy(const QTable& table, const Quantizer& quantizer) {
  return [&table, quantizer](const EnvState& state, std::span<const std::size_t> feasible) {
    return table.best(quantizer.state_index(state), feasible).first;
  };
}

void save_qtable(const std::filesystem::path& path, const QTable& table, const Quantizer& quantizer,
                 std::uint64_t seed) {
  if (table.state_count() != quantizer.state_count() || table.action_count() != quantizer.n_action_bins) {
    throw ConfigError("save_qtable: table shape does not match the quantizer");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(fmt::format("cannot write {}", path.string()));
  detail::write_magic(os, kQTableMagic);
  detail::write_u32(os, kQTableVersion);
  detail::write_u64(os, quantizer.n_loc_bins);
  detail::write_u64(os, quantizer.n_demand_bins);
  detail::write_u64(os, quantizer.n_action_bins);
  detail::write_f64(os, quantizer.loc_min);
  detail::write_f64(os, quantizer.loc_max);
  detail::write_f64(os, quantizer.demand_max_kw);
  detail::write_u64(os, seed);
  for (double v : table.values()) detail::write_f64(os, v);
  if (!os) throw DataError(fmt::format("write failed for {}", path.string()));
}

LoadedQTable load_qtable(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(fmt::format("cannot open Q-table checkpoint {}", path.string()));
  detail::expect_magic(is, kQTableMagic);
  if (const auto v = detail::read_u32(is); v != kQTableVersion) {
    throw DataError(fmt::format("unsupported Q-table version {}", v));
  }
  Quantizer q;
  q.n_loc_bins = detail::read_u64(is);
  q.n_demand_bins = detail::read_u64(is);
  q.n_action_bins = detail::read_u64(is);
  q.loc_min = detail::read_f64(is);
  q.loc_max = detail::read_f64(is);
  q.demand_max_kw = detail::read_f64(is);
  const std::uint64_t seed = detail::read_u64(is);
  q.validate();
  QTable table(q.state_count(), q.n_action_bins);
  for (std::size_t s = 0; s < table.state_count(); ++s) {
    for (std::size_t a = 0; a < table.action_count(); ++a) table.value(s, a) = detail::read_f64(is);
  }
  return {std::move(table), q, seed};
}

void to_json(nlohmann::json& j, const EpsilonSchedule& e) {
  j = {{"start", e.start}, {"end", e.end}, {"decay_fraction", e.decay_fraction}};
}

void from_json(const nlohmann::json& j, EpsilonSchedule& e) {
  const EpsilonSchedule d;
  e.start = j.value("start", d.start);
  e.end = j.value("end", d.end);
  e.decay_fraction = j.value("decay_fraction", d.decay_fraction);
}

void to_json(nlohmann::json& j, const CqlConfig& c) {
  j = {{"gamma", c.gamma},
       {"alpha_start", c.alpha_start},
       {"alpha_end", c.alpha_end},
       {"alpha_decay_steps", c.alpha_decay_steps},
       {"n_episodes", c.n_episodes},
       {"epsilon", c.epsilon},
       {"n_loc_bins", c.n_loc_bins},
       {"n_demand_bins", c.n_demand_bins},
       {"demand_quantile", c.demand_quantile}};
}

void from_json(const nlohmann::json& j, CqlConfig& c) {
  const CqlConfig d;
  c.gamma = j.value("gamma", d.gamma);
  c.alpha_start = j.value("alpha_start", d.alpha_start);
  c.alpha_end = j.value("alpha_end", d.alpha_end);
  c.alpha_decay_steps = j.value("alpha_decay_steps", d.alpha_decay_steps);
  c.n_episodes = j.value("n_episodes", d.n_episodes);
  c.epsilon = j.contains("epsilon") ? j.at("epsilon").get<EpsilonSchedule>() : d.epsilon;
  c.n_loc_bins = j.value("n_loc_bins", d.n_loc_bins);
  c.n_demand_bins = j.value("n_demand_bins", d.n_demand_bins);
  c.demand_quantile = j.value("demand_quantile", d.demand_quantile);
}

}  // namespace pcmu
