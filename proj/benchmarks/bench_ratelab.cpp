#include <benchmark/benchmark.h>

#include "ratelab/agent.hpp"
#include "ratelab/baselines.hpp"
#include "ratelab/trainer.hpp"

using namespace ratelab;

namespace {

void BM_EncodeFrame(benchmark::State& state) {
  const EnvSetup setup;
  const auto model = setup.model();
  const FrameDescriptor f{1.2, 1.1, false, false};
  EnvState s = initial_state(setup.profile, 0.7, 32);
  s.t = 1;
  s.d_prev = 3e-3;
  double lambda = 256.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_frame(s, f, {lambda, 0.8}, model));
    lambda = lambda < 2000.0 ? lambda + 1.0 : 256.0;
  }
}
BENCHMARK(BM_EncodeFrame);

void BM_Episode32(benchmark::State& state) {
  const EnvSetup setup;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto env = setup.make_env(++seed, 32);
    FixedLambdaController c(724.0, env.profile());
    benchmark::DoNotOptimize(run_episode(env, c, BandwidthTrace::constant(0.7), {}));
  }
}
BENCHMARK(BM_Episode32);

void BM_ForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng(1);
  const int sizes[] = {12, 128, 128, 128, 1};
  const auto net = DenseNetwork::make(sizes, Activation::kRelu, Activation::kIdentity, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(12, batch);
  const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(1, batch);
  for (auto _ : state) {
    ForwardCache cache;
    benchmark::DoNotOptimize(forward_batch(net, x, &cache));
    benchmark::DoNotOptimize(backward(net, cache, up));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(32)->Arg(1024);

void BM_SacUpdate(benchmark::State& state) {
  const EnvSetup setup;
  TrainConfig cfg;
  Rng rng(3);
  SacAgent agent = make_agent(cfg, setup, rng);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  for (int i = 0; i < 64; ++i) {
    auto env = setup.make_env(static_cast<std::uint64_t>(i), 32);
    buffer.push(rollout(env, agent, BandwidthTrace::constant(0.7), {}, rng, RolloutMode::kSample).trajectory);
  }
  const auto step = cfg.step_config(100, 0);
  for (auto _ : state) {
    const auto batch = buffer.sample(rng, 32);
    benchmark::DoNotOptimize(agent.update(batch, step, rng));
  }
}
BENCHMARK(BM_SacUpdate)->Unit(benchmark::kMillisecond);

void BM_Oracle(benchmark::State& state) {
  const EnvSetup setup;
  const int n = static_cast<int>(state.range(0));
  auto env = setup.make_env(5, n);
  const auto grid = OracleGrid::spanning(env.profile(), 8, 3);
  for (auto _ : state) benchmark::DoNotOptimize(oracle_search(env.frames(), env.model(), 0.6, grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(oracle_size(grid.size(), n)));
}
BENCHMARK(BM_Oracle)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
