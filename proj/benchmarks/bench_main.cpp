#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "pcmu/env.hpp"
#include "pcmu/ingest.hpp"
#include "pcmu/knn.hpp"
#include "pcmu/metrics.hpp"
#include "pcmu/neural.hpp"
#include "pcmu/qtable.hpp"

using namespace pcmu;

namespace {

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

std::vector<double> uniforms(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void BM_QNetworkForward(benchmark::State& state) {
  Rng rng(1);
  const Mlp net({2, 64, 64, 161}, Activation::Identity, rng);
  const auto x = random_batch(2, state.range(0), rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, x).output.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QNetworkForward)->Arg(1)->Arg(128);

void BM_QNetworkTrainStep(benchmark::State& state) {
  Rng rng(2);
  Mlp net({2, 64, 64, 161}, Activation::Identity, rng);
  RmsPropState opt(net, 0.00025);
  const auto x = random_batch(2, 128, rng);
  const auto y = random_batch(161, 128, rng);
  for (auto _ : state) {
    const auto cache = forward(net, x);
    rmsprop_step(net, backward(net, cache, mse_loss(cache.output, y).gradient), opt);
  }
}
BENCHMARK(BM_QNetworkTrainStep);

void BM_KdTreeBuild(benchmark::State& state) {
  Rng rng(3);
  const auto x = uniforms(static_cast<std::size_t>(state.range(0)), rng);
  const auto y = uniforms(x.size(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(KdTree2(x, y));
}
BENCHMARK(BM_KdTreeBuild)->Arg(5000)->Arg(20000);

void BM_KsgMi(benchmark::State& state) {
  Rng rng(4);
  const auto x = uniforms(static_cast<std::size_t>(state.range(0)), rng);
  const auto y = uniforms(x.size(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(ksg_mi(x, y, {}));
}
BENCHMARK(BM_KsgMi)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_EpisodeRollout(benchmark::State& state) {
  const auto env = Environment::make(BatteryConfig{}, TariffSchedule::ontario_winter(), RewardConfig{}, 161);
  const auto days = generate_synthetic(SyntheticConfig{}, 16).all_profiles();
  const auto idle = idle_policy(env);
  std::size_t d = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_episode(idle, days[d++ % days.size()], 0.5, env));
  state.SetItemsProcessed(state.iterations() * 96);
}
BENCHMARK(BM_EpisodeRollout);

void BM_QTableUpdate(benchmark::State& state) {
  const Quantizer q;
  QTable table(q.state_count(), q.n_action_bins);
  std::vector<std::size_t> feasible(161);
  for (std::size_t i = 0; i < feasible.size(); ++i) feasible[i] = i;
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> s(0, q.state_count() - 1);
  std::uniform_int_distribution<std::size_t> a(0, 160);
  for (auto _ : state) update(table, s(rng), a(rng), -0.1, s(rng), feasible, 0.5, 0.8, false);
}
BENCHMARK(BM_QTableUpdate);

}  // namespace

BENCHMARK_MAIN();
