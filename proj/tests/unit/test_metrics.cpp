#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "pcmu/errors.hpp"
#include "pcmu/knn.hpp"
#include "pcmu/metrics.hpp"

using namespace pcmu;

namespace {

EpisodeTrace trace_from(const std::vector<double>& grid, const std::vector<double>& action = {}) {
  EpisodeTrace tr;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    StepRecord s;
    s.t = t;
    s.grid_kw = grid[t];
    s.action_kw = action.empty() ? 0.0 : action[t];
    s.demand_kw = s.grid_kw - s.action_kw;
    tr.steps.push_back(s);
  }
  return tr;
}

std::vector<double> standard_normals(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

Environment default_env(double lambda = 0.0) {
  RewardConfig r;
  r.lambda = lambda;
  return Environment::make(BatteryConfig{}, TariffSchedule::ontario_winter(), r, 161);
}

std::vector<LoadProfile> wavy_days(std::size_t n) {
  std::vector<LoadProfile> out;
  for (std::size_t d = 0; d < n; ++d) {
    LoadProfile p;
    for (std::size_t t = 0; t < 96; ++t) p.values.push_back(0.5 + 0.4 * std::sin(0.2 * double(t) + double(d)));
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("privacy deviation") {
  CHECK(privacy_deviation(trace_from(std::vector<double>(96, 0.7)), 0.7) == 0.0);
  CHECK(privacy_deviation(trace_from(std::vector<double>(96, 1.4)), 0.7) == doctest::Approx(1.0));
  std::vector<double> alt;
  for (int t = 0; t < 96; ++t) alt.push_back(t % 2 ? 1.05 : 0.35);
  CHECK(privacy_deviation(trace_from(alt), 0.7) == doctest::Approx(0.5));
}

TEST_CASE("electricity cost") {
  const auto tariff = TariffSchedule::ontario_winter();
  CHECK(electricity_cost(trace_from(std::vector<double>(96, 0.0)), tariff, 0.25) == 0.0);
  CHECK(electricity_cost(trace_from(std::vector<double>(96, 1.0)), tariff, 0.25) ==
        doctest::Approx(0.25 * (0.101 * 48 + 0.144 * 24 + 0.208 * 24)));
  CHECK(electricity_cost(trace_from(std::vector<double>(96, 1.0)), tariff, 0.25) == doctest::Approx(3.324));
  auto neg = std::vector<double>(96, 0.0);
  neg[5] = -1.0;
  CHECK(electricity_cost(trace_from(neg), tariff, 0.25) == 0.0);
}

TEST_CASE("additional cost") {
  const auto tariff = TariffSchedule::ontario_winter();
  const std::vector<double> zeros(96, 0.0);
  CHECK(additional_cost(trace_from(zeros, zeros), tariff, 0.25) == 0.0);
  auto q = zeros;
  q[32] = 4.0;
  CHECK(additional_cost(trace_from(std::vector<double>(96, 4.0), q), tariff, 0.25) == doctest::Approx(0.208));
  std::vector<double> pos;
  std::vector<double> neg;
  for (int t = 0; t < 96; ++t) {
    pos.push_back(0.05 * (t % 9));
    neg.push_back(-0.05 * (t % 9));
  }
  CHECK(additional_cost(trace_from(std::vector<double>(96, 1.0), pos), tariff, 0.25) ==
        additional_cost(trace_from(std::vector<double>(96, 1.0), neg), tariff, 0.25));
}

TEST_CASE("metrics agree with the per-step losses of the environment") {
  const auto env = default_env(0.5);
  Rng rng(9);
  const Policy random = [&rng](const EnvState&, std::span<const std::size_t> f) {
    return f[std::uniform_int_distribution<std::size_t>(0, f.size() - 1)(rng)];
  };
  for (const auto& day : wavy_days(5)) {
    const auto tr = run_episode(random, day, 0.5, env);
    double fp = 0.0;
    double g = 0.0;
    for (const auto& s : tr.steps) {
      fp += s.loss_privacy;
      g += s.loss_cost;
    }
    CHECK(std::abs(privacy_deviation(tr, 0.7) - fp / 96.0) < 1e-12);
    CHECK(std::abs(additional_cost(tr, env.tariff, 0.25) - g) < 1e-12);
    CHECK(electricity_cost(tr, env.tariff, 0.25) <= baseline_cost(tr, env.tariff, 0.25) +
                                                       additional_cost(tr, env.tariff, 0.25) + 1e-12);
  }
}

TEST_CASE("digamma against Boost") {
  for (double x : {1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 9.99, 10.0, 42.0, 1e3, 1e6}) {
    CAPTURE(x);
    CHECK(std::abs(digamma(x) - boost::math::digamma(x)) < 1e-10 * std::max(1.0, std::abs(digamma(x))));
  }
  CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-14));
}

TEST_CASE("kd-tree agrees with brute force") {
  Rng rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 400;
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = u(rng);
    ys[i] = std::round(u(rng) * 20.0) / 20.0;  // coarse grid forces ties
  }
  const KdTree2 tree(xs, ys);
  for (std::size_t k : {1u, 4u, 10u}) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> d;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) d.push_back(std::max(std::abs(xs[i] - xs[j]), std::abs(ys[i] - ys[j])));
      }
      std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
      CHECK(tree.kth_neighbor_distance(i, k) == d[k - 1]);
    }
  }
}

TEST_CASE("KSG on independent uniforms") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(5000);
  std::vector<double> y(5000);
  for (auto& v : x) v = u(rng);
  for (auto& v : y) v = u(rng);
  CHECK(std::abs(ksg_mi(x, y, {})) < 0.05);
}

TEST_CASE("KSG on a correlated Gaussian pair") {
  Rng rng(2);
  const double rho = 0.9;
  const auto a = standard_normals(5000, rng);
  const auto b = standard_normals(5000, rng);
  std::vector<double> y(5000);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = rho * a[i] + std::sqrt(1 - rho * rho) * b[i];
  const double truth = -0.5 * std::log(1 - rho * rho);
  CHECK(truth == doctest::Approx(0.8304).epsilon(1e-4));
  const double est = ksg_mi(a, y, {});
  CHECK(std::abs(est - truth) < 0.05);

  SUBCASE("symmetric") { CHECK(std::abs(ksg_mi(y, a, {}) - est) < 1e-3); }
  SUBCASE("invariant under monotone rescaling") {
    std::vector<double> ex(a.size());
    std::transform(a.begin(), a.end(), ex.begin(), [](double v) { return std::exp(v); });
    std::vector<double> cy(y.size());
    std::transform(y.begin(), y.end(), cy.begin(), [](double v) { return 3.0 * v * v * v + v; });
    CHECK(std::abs(ksg_mi(ex, cy, {}) - est) < 0.05);
  }
}

TEST_CASE("KSG on a copy relation grows with N") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(5000);
  for (auto& v : x) v = u(rng);
  const double big = ksg_mi(x, x, {});
  CHECK(big > 3.0);
  const std::vector<double> small(x.begin(), x.begin() + 500);
  CHECK(ksg_mi(small, small, {}) < big);
}

TEST_CASE("KSG input validation and determinism") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{1, 2, 3, 4};
  CHECK_THROWS_AS(ksg_mi(x, y, {}), DataError);
  CHECK_THROWS_AS(ksg_mi(y, y, {}), DataError);
  MiEstimatorConfig bad;
  bad.k_neighbors = 0;
  CHECK_THROWS_AS(ksg_mi(x, x, bad), ConfigError);
  Rng rng(4);
  const auto a = standard_normals(300, rng);
  const auto b = standard_normals(300, rng);
  CHECK(ksg_mi(a, b, {}) == ksg_mi(a, b, {}));
}

TEST_CASE("idle policy evaluation reproduces the no-battery baseline") {
  const auto env = default_env(1.0);
  const auto report = evaluate_policy(idle_policy(env), env, wavy_days(10), 0.5, {});
  CHECK(report.G_avg == 0.0);
  CHECK(report.mean_abs_action_kw == 0.0);
  CHECK(report.F_avg == doctest::Approx(report.baseline_F_avg));
  CHECK(report.C_avg == doctest::Approx(report.baseline_C_avg));
  CHECK(report.episodes.size() == 10);
}

TEST_CASE("sweep report rows and CSV") {
  const auto env = default_env();
  const auto days = wavy_days(3);
  std::vector<SweepInput> inputs{{1.0, [&env] { return std::optional<Policy>(idle_policy(env)); }},
                                 {0.5, [] { return std::optional<Policy>(); }}};
  const auto rows = sweep_report(inputs, env, days, 0.5, {});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].report.has_value());
  CHECK(rows[0].report->lambda == 1.0);
  CHECK(rows[0].report->G_avg == 0.0);
  CHECK_FALSE(rows[1].report.has_value());
  std::ostringstream os;
  write_tradeoff_csv(os, rows);
  const auto text = os.str();
  CHECK(text.rfind("lambda,F,C,G,MI\n1,", 0) == 0);
  CHECK(text.find("\n0.5,,,,\n") != std::string::npos);

  const auto single = sweep_report({inputs[0]}, env, days, 0.5, {});
  CHECK(single.size() == 1);
}
