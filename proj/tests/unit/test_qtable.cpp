#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcmu/errors.hpp"
#include "pcmu/qtable.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_mdp.hpp"

using namespace pcmu;

TEST_CASE("quantizer edges and midpoint") {
  Quantizer q;
  q.demand_max_kw = 3.0;
  CHECK(q.demand_bin(0.0) == 0);
  CHECK(q.demand_bin(3.0) == 99);
  CHECK(q.demand_bin(7.0) == 99);
  CHECK(q.loc_bin(0.5) == 400);
  CHECK(q.loc_bin(0.0) == 0);
  CHECK(q.loc_bin(1.0) == 799);
  CHECK(q.state_count() == 80000);
  const auto [l, d] = q.quantize({{0.25}, 1.5, 0});
  CHECK(l == 200);
  CHECK(d == 50);
  CHECK(q.state_index({{0.25}, 1.5, 0}) == 200 * 100 + 50);
}

TEST_CASE("default table shape") {
  Quantizer q;
  QTable t(q.state_count(), q.n_action_bins);
  CHECK(t.values().size() == 800u * 100u * 161u);
  CHECK(t.value(1234, 7) == 0.0);
}

TEST_CASE("single backups") {
  const std::vector<std::size_t> all{0, 1};
  SUBCASE("zero table") {
    QTable t(2, 2);
    update(t, 0, 1, 1.0, 1, all, 0.5, 0.8, false);
    CHECK(t.value(0, 1) == doctest::Approx(0.5));
  }
  SUBCASE("zero learning rate") {
    QTable t(2, 2);
    t.value(0, 0) = 0.3;
    t.value(1, 1) = 2.0;
    update(t, 0, 0, 1.0, 1, all, 0.0, 0.8, false);
    CHECK(t.value(0, 0) == 0.3);
  }
  SUBCASE("terminal step drops the bootstrap") {
    QTable t(2, 2);
    t.value(1, 0) = 5.0;
    update(t, 0, 0, -0.3, 1, all, 1.0, 0.8, true);
    CHECK(t.value(0, 0) == doctest::Approx(-0.3));
  }
  SUBCASE("bootstrap only over feasible next actions") {
    QTable t(2, 2);
    t.value(1, 0) = 1.0;
    t.value(1, 1) = 10.0;
    const std::vector<std::size_t> only0{0};
    update(t, 0, 0, 0.0, 1, only0, 1.0, 0.5, false);
    CHECK(t.value(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("out of range index") {
    QTable t(2, 2);
    CHECK_THROWS_AS(update(t, 2, 0, 0.0, 1, all, 0.5, 0.8, false), std::logic_error);
  }
}

TEST_CASE("epsilon-greedy selection") {
  QTable t(1, 8);
  Rng rng(42);
  SUBCASE("pure exploration is uniform over the feasible set") {
    const std::vector<std::size_t> f{1, 3, 4, 6, 7};
    std::map<std::size_t, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++counts[select_action_epsilon_greedy(t, 0, f, 1.0, rng)];
    CHECK(counts.size() == f.size());
    double chi2 = 0.0;
    const double expected = static_cast<double>(n) / static_cast<double>(f.size());
    for (auto [a, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 18.47);  // df = 4, p = 0.001
  }
  SUBCASE("pure exploitation picks the unique maximum") {
    t.value(0, 5) = 1.0;
    const std::vector<std::size_t> f{0, 2, 5, 6};
    for (int i = 0; i < 100; ++i) CHECK(select_action_epsilon_greedy(t, 0, f, 0.0, rng) == 5);
  }
  SUBCASE("ties go to the lowest index") {
    t.value(0, 2) = 1.0;
    t.value(0, 6) = 1.0;
    const std::vector<std::size_t> f{0, 2, 6};
    CHECK(select_action_epsilon_greedy(t, 0, f, 0.0, rng) == 2);
  }
  SUBCASE("the maximum outside the feasible set is ignored") {
    t.value(0, 7) = 9.0;
    t.value(0, 3) = 1.0;
    const std::vector<std::size_t> f{0, 3};
    CHECK(select_action_epsilon_greedy(t, 0, f, 0.0, rng) == 3);
  }
  SUBCASE("empty feasible set") {
    const std::vector<std::size_t> f;
    CHECK_THROWS_AS(select_action_epsilon_greedy(t, 0, f, 0.0, rng), std::logic_error);
  }
}

TEST_CASE("learning-rate schedule is linear then flat") {
  CqlConfig c;
  CHECK(c.alpha_at(0) == 0.5);
  CHECK(c.alpha_at(500000) == doctest::Approx(0.275));
  CHECK(c.alpha_at(1000000) == 0.05);
  CHECK(c.alpha_at(5000000) == 0.05);
}

TEST_CASE("tabular learning on the toy MDP reaches the value-iteration fixed point") {
  testing::ToyMdp mdp;
  QTable table(3, 2);
  CqlConfig c;
  c.gamma = 0.8;
  c.alpha_start = 0.5;
  c.alpha_end = 0.5;
  c.n_episodes = 3000;
  Rng rng(1);
  const auto curve = train_tabular(mdp, table, c, rng);
  CHECK(curve.size() == 3000);
  const auto q = testing::value_iteration(0.8);
  double worst = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t a = 0; a < 2; ++a) worst = std::max(worst, std::abs(table.value(s, a) - q[s][a]));
    const std::vector<std::size_t> both{0, 1};
    CHECK(table.best(s, both).first == testing::greedy_action(q[s]));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("zero episodes leave the table untouched") {
  testing::ToyMdp mdp;
  QTable table(3, 2);
  CqlConfig c;
  c.n_episodes = 0;
  Rng rng(1);
  CHECK(train_tabular(mdp, table, c, rng).empty());
  CHECK(table == QTable(3, 2));
}

namespace {

std::vector<LoadProfile> small_profiles() {
  std::vector<LoadProfile> ps;
  for (int d = 0; d < 4; ++d) {
    LoadProfile p;
    for (int t = 0; t < 96; ++t) p.values.push_back(0.2 + 0.1 * ((t + d) % 7));
    ps.push_back(p);
  }
  return ps;
}

CqlConfig small_cql() {
  CqlConfig c;
  c.n_loc_bins = 20;
  c.n_demand_bins = 10;
  c.n_episodes = 20;
  return c;
}

}  // namespace

TEST_CASE("battery training is deterministic and never touches unvisited entries") {
  const auto env = Environment::make(BatteryConfig{}, TariffSchedule::ontario_winter(), RewardConfig{}, 161);
  const auto a = train_cql(env, small_profiles(), small_cql(), 9);
  const auto b = train_cql(env, small_profiles(), small_cql(), 9);
  CHECK(a.table == b.table);
  REQUIRE(a.curve.size() == 20);
  std::size_t unvisited = 0;
  for (std::size_t s = 0; s < a.table.state_count(); ++s) {
    for (std::size_t act = 0; act < a.table.action_count(); ++act) {
      if (a.table.visits(s, act) == 0) {
        ++unvisited;
        CHECK(a.table.value(s, act) == 0.0);
      }
    }
  }
  CHECK(unvisited > 0);
  CHECK(a.quantizer.demand_max_kw == doctest::Approx(demand_quantile(small_profiles(), 0.995)));
}

TEST_CASE("greedy table policy stays feasible") {
  const auto env = Environment::make(BatteryConfig{}, TariffSchedule::ontario_winter(), RewardConfig{}, 161);
  const auto r = train_cql(env, small_profiles(), small_cql(), 3);
  const auto policy = greedy_policy(r.table, r.quantizer);
  for (const auto& p : small_profiles()) CHECK_NOTHROW(run_episode(policy, p, 0.5, env));
}

TEST_CASE("table checkpoint round trip") {
  testing::TempDir dir;
  Quantizer q;
  q.n_loc_bins = 4;
  q.n_demand_bins = 3;
  q.n_action_bins = 5;
  q.demand_max_kw = 2.5;
  QTable t(q.state_count(), q.n_action_bins);
  for (std::size_t s = 0; s < t.state_count(); ++s) {
    for (std::size_t a = 0; a < t.action_count(); ++a) t.value(s, a) = std::sin(static_cast<double>(s * 7 + a));
  }
  save_qtable(dir / "t.qtb", t, q, 77);
  const auto back = load_qtable(dir / "t.qtb");
  CHECK(back.quantizer == q);
  CHECK(back.seed == 77);
  CHECK(back.table.values() == t.values());
  CHECK_THROWS_AS(load_qtable(dir / "missing.qtb"), DataError);
}

TEST_CASE("CQL config JSON round trip") {
  CqlConfig c;
  c.gamma = 0.7;
  c.n_episodes = 12;
  c.epsilon.decay_fraction = 0.3;
  nlohmann::json j = c;
  CHECK(j.get<CqlConfig>() == c);
}
