// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails. Long-running trend checks honour --scale, which
// multiplies every training episode count; --derived runs the secondary
// sweep checks instead of the main criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "app/app.hpp"
#include "pcmu/knn.hpp"
#include "pcmu/neural.hpp"
#include "support/gradcheck.hpp"
#include "support/toy_mdp.hpp"

using namespace pcmu;
using namespace pcmu::app;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  fs::path out;
  double scale = 1.0;
  std::size_t seeds = 3;
  std::size_t jobs = 1;
};

std::size_t scaled(std::size_t n, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale)));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DataOptions synthetic_data() {
  DataOptions d;
  d.synthetic = true;
  d.synthetic_days = 1000;
  d.data_seed = 1;
  return d;
}

Outcome safety_fuzz(const Settings&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto env = Environment::make(BatteryConfig{}, TariffSchedule::ontario_winter(), RewardConfig{}, 161);
  const auto days = generate_synthetic(SyntheticConfig{}, 200).all_profiles();
  Rng rng(2024);
  std::uniform_real_distribution<double> start(0.0, 1.0);
  const Policy random = [&rng](const EnvState&, std::span<const std::size_t> f) {
    return f[std::uniform_int_distribution<std::size_t>(0, f.size() - 1)(rng)];
  };
  const std::size_t episodes = 10'000;
  std::size_t violations = 0;
  std::size_t steps = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto trace = run_episode(random, days[e % days.size()], start(rng), env);
    double loc = trace.steps.front().loc;
    for (const auto& s : trace.steps) {
      ++steps;
      const double next = loc_after(env.battery, s.loc, s.action_kw);
      const bool bad = s.loc < 0.0 || s.loc > 1.0 || next < -1e-12 || next > 1.0 + 1e-12 ||
                       std::abs(s.action_kw) > 4.0 + 1e-12 || s.grid_kw < -1e-12 || std::abs(s.loc - loc) > 1e-9;
      violations += bad ? 1 : 0;
      loc = next;
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 60.0,
          fmt::format("{} episodes, {} steps, {} violations, {:.1f} s", episodes, steps, violations, secs)};
}

Outcome oracle_equivalence(const Settings&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto qstar = testing::value_iteration(0.8);

  testing::ToyMdp tab_mdp;
  QTable table(3, 2);
  CqlConfig c;
  c.gamma = 0.8;
  c.alpha_start = 0.5;
  c.alpha_end = 0.5;
  c.n_episodes = 3000;
  Rng rng(1);
  train_tabular(tab_mdp, table, c, rng);
  double worst = 0.0;
  bool cql_policy = true;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t a = 0; a < 2; ++a) worst = std::max(worst, std::abs(table.value(s, a) - qstar[s][a]));
    cql_policy = cql_policy && testing::greedy_action(qstar[s]) == (table.value(s, 1) > table.value(s, 0) ? 1u : 0u);
  }

  testing::ToyMdp deep_mdp;
  DdqlConfig d;
  d.gamma = 0.8;
  d.n_episodes = 400;
  d.batch_size = 32;
  d.update_every = 1;
  d.copy_every = 100;
  d.learning_rate = 0.001;
  d.hidden = {16, 16};
  d.buffer_capacity = 2000;
  Rng drng(5);
  Mlp q({3, 16, 16, 2}, Activation::Identity, drng);
  q.layers().back().weight.setZero();
  Mlp target = q;
  train_ddql_task(deep_mdp, q, target, d, drng);
  bool ddql_policy = true;
  for (std::size_t s = 0; s < 3; ++s) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    x(static_cast<Eigen::Index>(s)) = 1.0;
    const auto out = q.predict(x);
    ddql_policy = ddql_policy && testing::greedy_action(qstar[s]) == (out(1) > out(0) ? 1u : 0u);
  }
  const double secs = seconds_since(t0);
  return {cql_policy && ddql_policy && worst < 1e-3 && secs < 120.0,
          fmt::format("tabular max |Q - Q*| = {:.2e}, tabular policy {}, deep policy {}, {:.1f} s", worst,
                      cql_policy ? "matches" : "differs", ddql_policy ? "matches" : "differs", secs)};
}

Outcome gradient_audit(const Settings&) {
  double worst = 0.0;
  for (auto output : {Activation::Identity, Activation::Sigmoid}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      worst = std::max(worst, testing::gradient_check({4, 8, 3}, output, seed));
      worst = std::max(worst, testing::gradient_check({4, 8, 8, 3}, output, seed));
      worst = std::max(worst, testing::gradient_check({4, 8, 8, 8, 3}, output, seed));
    }
  }
  return {worst < 1e-4, fmt::format("max relative error {:.2e} over 1-3 hidden layers", worst)};
}

Outcome rmsprop_exactness(const Settings&) {
  auto net = Mlp::zeros({1, 1}, Activation::Identity);
  RmsPropState opt(net, 0.00025);
  auto g = Gradients::zeros_like(net);
  g.weight[0](0, 0) = 1.0;
  rmsprop_step(net, g, opt);
  const double expected = -0.00025 / std::sqrt(0.1 + 1e-8);
  const double err = std::abs(net.layers()[0].weight(0, 0) - expected);
  return {err < 1e-12, fmt::format("w = {:.15e}, |error| = {:.1e}", net.layers()[0].weight(0, 0), err)};
}

Outcome ksg_validation(const Settings&) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = 5000;
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n);
  std::vector<double> y(n);
  for (auto& v : x) v = u(rng);
  for (auto& v : y) v = u(rng);
  const double independent = ksg_mi(x, y, {});

  std::normal_distribution<double> g(0.0, 1.0);
  const double rho = 0.9;
  std::vector<double> a(n);
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = g(rng);
    b[i] = rho * a[i] + std::sqrt(1.0 - rho * rho) * g(rng);
  }
  const double truth = -0.5 * std::log(1.0 - rho * rho);
  const double gaussian = ksg_mi(a, b, {});
  const double secs = seconds_since(t0);
  return {std::abs(independent) < 0.05 && std::abs(gaussian - truth) < 0.05 && secs < 60.0,
          fmt::format("uniforms {:.4f} nats; gaussian {:.4f} vs {:.4f}; {:.1f} s", independent, gaussian, truth, secs)};
}

Outcome reward_trend(const Settings& s) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t deep_eps = scaled(800, s.scale);
  const std::size_t tab_eps = scaled(25'000, s.scale);
  double deep = 0.0;
  double tab = 0.0;
  for (std::uint64_t seed = 1; seed <= s.seeds; ++seed) {
    for (auto agent : {AgentKind::Ddql, AgentKind::Cql}) {
      TrainOptions t;
      t.agent = agent;
      t.lambda = 0.0;
      t.data = synthetic_data();
      t.seed = seed;
      t.episodes = agent == AgentKind::Ddql ? deep_eps : tab_eps;
      t.out = s.out / "fig2" / fmt::format("{}_seed{}", to_string(agent), seed);
      cmd_train(t);
      const double r = cmd_evaluate({t.out, std::nullopt, Split::Test}).reward_avg;
      (agent == AgentKind::Ddql ? deep : tab) += r / static_cast<double>(s.seeds);
    }
  }
  return {deep >= tab, fmt::format("test reward/day: deep {} ep {:.3f} vs tabular {} ep {:.3f} ({} seeds, {:.0f} s)",
                                   deep_eps, deep, tab_eps, tab, s.seeds, seconds_since(t0))};
}

// Shared by the trade-off, MI and attack checks.
struct SweepFixture {
  fs::path dir;
  std::vector<SweepRow> rows;

  const MetricsReport* at(double lambda) const {
    for (const auto& r : rows) {
      if (r.lambda == lambda && r.report) return &*r.report;
    }
    return nullptr;
  }
};

SweepFixture run_sweep(const Settings& s) {
  SweepOptions o;
  o.lambdas = {0.0, 0.25, 0.5, 0.75, 1.0};
  o.data = synthetic_data();
  o.seed = 1;
  o.episodes = scaled(800, s.scale);
  o.out = s.out / "sweep";
  o.jobs = s.jobs;
  return {o.out, cmd_sweep(o).rows};
}

Outcome tradeoff_trend(const SweepFixture& f) {
  const auto* lo = f.at(0.0);
  const auto* hi = f.at(1.0);
  if (!lo || !hi) return {false, "sweep is missing lambda 0 or 1"};
  const bool ok = lo->F_avg < hi->F_avg && lo->C_avg > hi->C_avg && hi->mean_abs_action_kw < 0.05;
  return {ok, fmt::format("F {:.4f} < {:.4f}; C {:.4f} > {:.4f}; mean |q| at lambda 1 = {:.4f} kW", lo->F_avg,
                          hi->F_avg, lo->C_avg, hi->C_avg, hi->mean_abs_action_kw)};
}

Outcome mi_trend(const SweepFixture& f, std::size_t n_pairs) {
  const auto* lo = f.at(0.0);
  const auto* hi = f.at(1.0);
  if (!lo || !hi) return {false, "sweep is missing lambda 0 or 1"};
  return {lo->mi_nats < hi->mi_nats && n_pairs >= 5000,
          fmt::format("MI {:.3f} < {:.3f} nats over {} pairs", lo->mi_nats, hi->mi_nats, n_pairs)};
}

Outcome attack_trend(const Settings& s, const SweepFixture& f) {
  AttackOptions a;
  a.kind = AttackKind::OccupancyClassifier;
  a.checkpoints = {f.dir / "lambda_0"};
  a.out = s.out / "attack";
  const auto rows = cmd_attack(a);
  a.checkpoints.clear();
  a.data = synthetic_data();
  a.shuffle_labels = true;
  a.out = s.out / "attack_shuffled";
  const auto control = cmd_attack(a);
  if (rows.size() != 2 || control.empty()) return {false, "attack produced no rows"};
  const double base = rows[0].score.score;
  const double protected_ = rows[1].score.score;
  const double shuffled = control[0].score.score;
  return {base - protected_ >= 0.05 && shuffled >= 0.45 && shuffled <= 0.55,
          fmt::format("balanced accuracy: unprotected {:.4f}, lambda 0 {:.4f}, shuffled {:.4f}; ECO part not run",
                      base, protected_, shuffled)};
}

// Secondary checks on the same sweep and attack runs.

Outcome frontier_monotone(const SweepFixture& f) {
  std::vector<std::string> breaks;
  for (std::size_t i = 0; i + 1 < f.rows.size(); ++i) {
    const auto& a = f.rows[i].report;
    const auto& b = f.rows[i + 1].report;
    if (!a || !b) return {false, "sweep has missing rows"};
    if (a->F_avg > 1.05 * b->F_avg) breaks.push_back(fmt::format("F at {} vs {}", a->lambda, b->lambda));
    if (a->C_avg < 0.95 * b->C_avg) breaks.push_back(fmt::format("C at {} vs {}", a->lambda, b->lambda));
  }
  std::vector<std::string> cells;
  for (const auto& r : f.rows) {
    if (r.report) cells.push_back(fmt::format("{}: F {:.3f} C {:.3f}", r.lambda, r.report->F_avg, r.report->C_avg));
  }
  return {breaks.empty(), fmt::format("{}{}", fmt::join(cells, "; "),
                                      breaks.empty() ? "" : fmt::format(" (breaks: {})", fmt::join(breaks, ", ")))};
}

Outcome idle_optimum(const SweepFixture& f) {
  const auto* hi = f.at(1.0);
  if (!hi) return {false, "sweep is missing lambda 1"};
  const double rel = std::abs(hi->F_avg - hi->baseline_F_avg) / hi->baseline_F_avg;
  return {hi->G_avg < 0.01 && rel < 0.05,
          fmt::format("lambda 1: G {:.4f}/day, F {:.4f} vs no-battery {:.4f}", hi->G_avg, hi->F_avg, hi->baseline_F_avg)};
}

Outcome idle_attack(const Settings& s, const SweepFixture& f) {
  AttackOptions a;
  a.kind = AttackKind::OccupancyClassifier;
  a.checkpoints = {f.dir / "lambda_1"};
  a.out = s.out / "attack_idle";
  const auto rows = cmd_attack(a);
  if (rows.size() != 2) return {false, "attack produced no rows"};
  const double gap = std::abs(rows[1].score.score - rows[0].score.score);
  return {gap < 0.02, fmt::format("lambda 1 {:.4f} vs unprotected {:.4f}", rows[1].score.score, rows[0].score.score)};
}

Outcome determinism(const Settings& s) {
  const fs::path root = s.out / "determinism";
  std::vector<std::string> mismatched;
  auto compare = [&](const std::string& name, const fs::path& a, const fs::path& b) {
    if (!fs::exists(a) || slurp(a) != slurp(b)) mismatched.push_back(name);
  };
  DataOptions d = synthetic_data();
  d.synthetic_days = 60;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = root / std::to_string(rep);
    for (auto agent : {AgentKind::Ddql, AgentKind::Cql}) {
      TrainOptions t;
      t.agent = agent;
      t.lambda = 0.5;
      t.data = d;
      t.seed = 11;
      t.episodes = 5;
      t.out = dir / to_string(agent);
      cmd_train(t);
    }
    SweepOptions sw;
    sw.lambdas = {0.0, 1.0};
    sw.data = d;
    sw.seed = 11;
    sw.episodes = 3;
    sw.out = dir / "sweep";
    sw.jobs = rep + 1;
    cmd_sweep(sw);
    AttackOptions at;
    at.kind = AttackKind::OccupancyClassifier;
    at.checkpoints = {dir / "ddql"};
    at.epochs = 5;
    at.out = dir / "attack";
    cmd_attack(at);
    MiOptions mi;
    mi.checkpoint = dir / "cql";
    mi.out = dir / "mi";
    cmd_mi(mi);
  }
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "0")) {
    if (e.path().extension() != ".csv") continue;
    const auto rel = fs::relative(e.path(), root / "0");
    compare(rel.string(), e.path(), root / "1" / rel);
    ++compared;
  }
  if (compared == 0) return {false, "no CSV outputs were produced"};
  return {mismatched.empty(), mismatched.empty() ? fmt::format("{} CSV files byte-identical across repeats", compared)
                                                 : fmt::format("differs: {}", fmt::join(mismatched, ", "))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"pcmu acceptance suite"};
  Settings s;
  s.out = "acceptance_runs";
  std::vector<std::string> only;
  bool derived = false;
  cli.add_option("--out", s.out, "Scratch directory for training runs");
  cli.add_option("--scale", s.scale, "Multiplier on training episode counts")->check(CLI::PositiveNumber);
  cli.add_option("--seeds", s.seeds, "Seeds averaged in the reward comparison")->check(CLI::PositiveNumber);
  cli.add_option("--jobs", s.jobs, "Parallel sweep jobs")->check(CLI::PositiveNumber);
  cli.add_option("--only", only, "Run only the named criteria");
  cli.add_flag("--derived", derived, "Run the secondary sweep checks instead of the main criteria");
  CLI11_PARSE(cli, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const std::vector<std::string> main_checks{"safety_fuzz",    "oracle_equivalence", "gradient_audit",
                                             "rmsprop_exactness", "ksg_validation", "reward_trend",
                                             "tradeoff_trend", "attack_trend",      "mi_trend",
                                             "determinism"};
  const std::vector<std::string> derived_checks{"frontier_monotone", "idle_optimum", "idle_attack"};
  auto wanted = [&](const std::string& name) {
    const auto& pool = derived ? derived_checks : main_checks;
    if (std::find(pool.begin(), pool.end(), name) == pool.end()) return false;
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };

  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(name)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, fmt::format("error: {}", e.what())};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  };

  fs::create_directories(s.out);
  report("safety_fuzz", [&] { return safety_fuzz(s); });
  report("oracle_equivalence", [&] { return oracle_equivalence(s); });
  report("gradient_audit", [&] { return gradient_audit(s); });
  report("rmsprop_exactness", [&] { return rmsprop_exactness(s); });
  report("ksg_validation", [&] { return ksg_validation(s); });
  report("reward_trend", [&] { return reward_trend(s); });

  const std::vector<std::string> on_sweep{"tradeoff_trend", "attack_trend",  "mi_trend",
                                          "frontier_monotone", "idle_optimum", "idle_attack"};
  if (std::any_of(on_sweep.begin(), on_sweep.end(), wanted)) {
    SweepFixture sweep;
    std::string sweep_error;
    try {
      sweep = run_sweep(s);
    } catch (const std::exception& e) {
      sweep_error = e.what();
    }
    auto guarded = [&](const std::function<Outcome()>& fn) {
      return [&, fn] { return sweep_error.empty() ? fn() : Outcome{false, "sweep failed: " + sweep_error}; };
    };
    const std::size_t n_pairs = load_data(synthetic_data()).dataset.indices(Split::Test).size() * 96;
    report("tradeoff_trend", guarded([&] { return tradeoff_trend(sweep); }));
    report("attack_trend", guarded([&] { return attack_trend(s, sweep); }));
    report("mi_trend", guarded([&] { return mi_trend(sweep, n_pairs); }));
    report("frontier_monotone", guarded([&] { return frontier_monotone(sweep); }));
    report("idle_optimum", guarded([&] { return idle_optimum(sweep); }));
    report("idle_attack", guarded([&] { return idle_attack(s, sweep); }));
  }
  report("determinism", [&] { return determinism(s); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
