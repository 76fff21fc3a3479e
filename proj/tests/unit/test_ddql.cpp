#include <doctest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcmu/ddql.hpp"
#include "pcmu/errors.hpp"
#include "support/toy_mdp.hpp"

using namespace pcmu;

namespace {

Transition make_transition(std::vector<double> s, std::size_t a, double r, std::vector<double> next, bool terminal,
                           std::vector<std::uint8_t> mask) {
  return {std::move(s), a, r, std::move(next), terminal, std::move(mask)};
}

std::vector<LoadProfile> small_profiles() {
  std::vector<LoadProfile> ps;
  for (int d = 0; d < 4; ++d) {
    LoadProfile p;
    for (int t = 0; t < 96; ++t) p.values.push_back(0.3 + 0.2 * std::sin(0.1 * (t + 9 * d)) + 0.2);
    ps.push_back(p);
  }
  return ps;
}

DdqlConfig small_ddql() {
  DdqlConfig c;
  c.n_episodes = 3;
  c.batch_size = 16;
  c.hidden = {8, 8};
  c.buffer_capacity = 500;
  c.copy_every = 50;
  return c;
}

}  // namespace

TEST_CASE("state encoding") {
  auto enc = [](double loc, double y) { return encode_state({{loc}, y, 0}, 2.0); };
  CHECK(enc(0.0, 0.0) == std::vector<double>{0.0, 0.0});
  CHECK(enc(1.0, 2.0) == std::vector<double>{1.0, 1.0});
  CHECK(enc(0.5, 0.5) == std::vector<double>{0.5, 0.25});
  CHECK(enc(0.5, 5.0)[1] == doctest::Approx(2.5));
}

TEST_CASE("replay buffer evicts the oldest transition") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push(make_transition({double(i)}, 0, 0.0, {0.0}, true, {1}));
  CHECK(buf.size() == 3);
  CHECK(buf.at(0).state[0] == 2.0);
  CHECK(buf.at(2).state[0] == 4.0);
  Rng rng(1);
  for (auto i : buf.sample_indices(100, rng)) CHECK(i < 3);
}

TEST_CASE("TD targets") {
  const auto q = Mlp::zeros({1, 2}, Activation::Identity);
  auto target = Mlp::zeros({1, 2}, Activation::Identity);
  const auto live = make_transition({0.0}, 0, 1.0, {1.0}, false, {1, 1});
  const auto end = make_transition({0.0}, 1, -0.5, {1.0}, true, {0, 0});
  std::vector<const Transition*> batch{&live, &end};

  SUBCASE("zero target network") {
    const auto y = td_targets(batch, q, target, 0.99);
    CHECK(y(0) == doctest::Approx(1.0));
    CHECK(y(1) == -0.5);
  }
  SUBCASE("gamma zero gives rewards") {
    target.layers()[0].bias << 3.0, 7.0;
    const auto y = td_targets(batch, q, target, 0.0);
    CHECK(y(0) == 1.0);
    CHECK(y(1) == -0.5);
  }
  SUBCASE("max is taken over the stored mask") {
    target.layers()[0].bias << 3.0, 7.0;
    const auto masked = make_transition({0.0}, 0, 1.0, {1.0}, false, {1, 0});
    std::vector<const Transition*> b{&masked, &live};
    const auto y = td_targets(b, q, target, 0.5);
    CHECK(y(0) == doctest::Approx(2.5));
    CHECK(y(1) == doctest::Approx(4.5));
  }
  SUBCASE("decoupled variant evaluates the online argmax") {
    target.layers()[0].bias << 3.0, 7.0;
    auto online = Mlp::zeros({1, 2}, Activation::Identity);
    online.layers()[0].bias << 1.0, 0.0;
    std::vector<const Transition*> b{&live};
    CHECK(td_targets(b, online, target, 0.5, true)(0) == doctest::Approx(2.5));
  }
  SUBCASE("empty mask on a live transition") {
    const auto broken = make_transition({0.0}, 0, 1.0, {1.0}, false, {0, 0});
    std::vector<const Transition*> b{&broken};
    CHECK_THROWS_AS(td_targets(b, q, target, 0.5), std::logic_error);
  }
}

TEST_CASE("batch loss equals the hand-computed MSE") {
  auto q = Mlp::zeros({1, 2}, Activation::Identity);
  q.layers()[0].bias << 0.2, -0.3;
  const auto target = Mlp::zeros({1, 2}, Activation::Identity);
  const auto a = make_transition({1.0}, 0, 1.0, {0.0}, true, {0, 0});
  const auto b = make_transition({1.0}, 1, 0.5, {0.0}, true, {0, 0});
  std::vector<const Transition*> batch{&a, &b};
  RmsPropState opt(q, 0.001);
  DdqlConfig c;
  CHECK(train_on_batch(q, target, batch, opt, c) == doctest::Approx(0.64));
}

TEST_CASE("repeated transition with gamma 0 regresses to the reward") {
  Rng rng(3);
  Mlp q({1, 8, 2}, Activation::Identity, rng);
  const Mlp target = q;
  ReplayBuffer buf(10);
  for (int i = 0; i < 4; ++i) buf.push(make_transition({0.5}, 1, 0.8, {0.5}, false, {1, 1}));
  DdqlConfig c;
  c.gamma = 0.0;
  c.batch_size = 4;
  RmsPropState opt(q, 0.001);
  double first = 0.0;
  double last = 0.0;
  for (int i = 0; i < 3000; ++i) {
    last = *train_step(q, target, buf, opt, c, rng);
    if (i == 0) first = last;
  }
  CHECK(last < 1e-4);
  CHECK(last < first);
  CHECK(q.predict(Eigen::VectorXd::Constant(1, 0.5))(1) == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("train step waits for a full batch and zero gradients change nothing") {
  Rng rng(4);
  Mlp q({1, 4, 2}, Activation::Identity, rng);
  const Mlp target = q;
  ReplayBuffer buf(10);
  buf.push(make_transition({0.5}, 0, 1.0, {0.5}, true, {0, 0}));
  DdqlConfig c;
  c.batch_size = 2;
  RmsPropState opt(q, 0.001);
  CHECK_FALSE(train_step(q, target, buf, opt, c, rng).has_value());
  CHECK(q.same_parameters(target));
  rmsprop_step(q, Gradients::zeros_like(q), opt);
  CHECK(q.same_parameters(target));
}

TEST_CASE("greedy selection") {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(5, 1.0);
  const std::vector<std::size_t> f{1, 3, 4};
  CHECK(feasible_argmax(v, f) == 1);
  v(4) = 2.0;
  v(0) = 9.0;
  CHECK(feasible_argmax(v, f) == 4);
  const std::vector<std::size_t> one{2};
  CHECK(feasible_argmax(v, one) == 2);

  const auto flat = Mlp::zeros({2, 161}, Activation::Identity);
  const auto policy = greedy_policy(flat, 1.0);
  const std::vector<std::size_t> fs{40, 41, 80};
  CHECK(policy({{0.5}, 0.5, 0}, fs) == 40);
}

TEST_CASE("deep learner on the toy MDP matches the value-iteration policy") {
  testing::ToyMdp mdp;
  DdqlConfig c;
  c.gamma = 0.8;
  c.n_episodes = 400;
  c.batch_size = 32;
  c.update_every = 1;
  c.copy_every = 100;
  c.learning_rate = 0.001;
  c.hidden = {16, 16};
  c.buffer_capacity = 2000;
  Rng rng(5);
  Mlp q({3, 16, 16, 2}, Activation::Identity, rng);
  q.layers().back().weight.setZero();
  Mlp target = q;
  const auto curve = train_ddql_task(mdp, q, target, c, rng);
  CHECK(curve.size() == 400);
  CHECK(q.same_parameters(target));  // 4000 steps, copy every 100
  const auto qstar = testing::value_iteration(0.8);
  for (std::size_t s = 0; s < 3; ++s) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    x(static_cast<Eigen::Index>(s)) = 1.0;
    const auto out = q.predict(x);
    CAPTURE(s);
    CHECK(testing::greedy_action(qstar[s]) == (out(1) > out(0) ? 1u : 0u));
  }
}

TEST_CASE("battery training: zero episodes, determinism, feasibility") {
  const auto env = Environment::make(BatteryConfig{}, TariffSchedule::ontario_winter(), RewardConfig{}, 161);
  auto cfg = small_ddql();
  cfg.n_episodes = 0;
  const auto none = train_ddql(env, small_profiles(), cfg, 1);
  CHECK(none.curve.empty());
  CHECK(none.q_net.same_parameters(none.target_net));
  CHECK(none.q_net.layers().back().weight.isZero());

  const auto a = train_ddql(env, small_profiles(), small_ddql(), 7);
  const auto b = train_ddql(env, small_profiles(), small_ddql(), 7);
  REQUIRE(a.curve.size() == 3);
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].total_reward == b.curve[i].total_reward);
  CHECK(a.q_net.same_parameters(b.q_net));

  const auto policy = greedy_policy(a.q_net, a.demand_scale);
  for (const auto& p : small_profiles()) CHECK_NOTHROW(run_episode(policy, p, 0.5, env));
}

TEST_CASE("DDQL config validation and JSON") {
  DdqlConfig c;
  c.batch_size = 20000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.copy_every = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.decoupled_double_q = true;
  c.hidden = {32};
  nlohmann::json j = c;
  CHECK(j.get<DdqlConfig>() == c);
}

TEST_CASE("a network preferring the idle action picks it in every state") {
  const auto env = Environment::make(BatteryConfig{}, TariffSchedule::ontario_winter(), RewardConfig{1.0, 0.7}, 161);
  auto net = Mlp::zeros({2, 161}, Activation::Identity);
  net.layers()[0].bias(80) = 1.0;
  const auto policy = greedy_policy(net, 2.0);
  for (double loc : {0.0, 0.3, 1.0}) {
    for (double y : {0.0, 0.7, 3.0}) {
      const EnvState s{{loc}, y, 0};
      const auto f = feasible_actions(s, env.battery, env.actions);
      CHECK(env.actions[policy(s, f)] == 0.0);
    }
  }
}
