#include <random>

#include <benchmark/benchmark.h>

#include "alssl/nn.hpp"

using namespace alssl;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(gen);
  return m;
}

void BM_Forward(benchmark::State& state) {
  const auto batch = static_cast<Eigen::Index>(state.range(0));
  const auto m = nn::TaskModel::create({16, 64, 32, 3}, 1);
  const Matrix x = gaussian(batch, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::evaluate(m, x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(512)->Arg(4096);

void BM_GradParams(benchmark::State& state) {
  const auto batch = static_cast<Eigen::Index>(state.range(0));
  const auto m = nn::TaskModel::create({16, 64, 32, 3}, 1);
  std::vector<std::size_t> y(static_cast<std::size_t>(batch));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 3;
  nn::LossSpec spec;
  spec.supervised = nn::LossTerm{gaussian(batch, 16, 3), nn::one_hot(y, 3), 1.0};
  spec.consistency = nn::LossTerm{gaussian(batch, 16, 4), nn::one_hot(y, 3), 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(nn::grad_params(m, spec));
  state.SetItemsProcessed(state.iterations() * batch * 2);
}
BENCHMARK(BM_GradParams)->Arg(64)->Arg(512);

void BM_SgdStep(benchmark::State& state) {
  auto m = nn::TaskModel::create({16, 64, 32, 3}, 1);
  auto g = m.params().zeros_like();
  nn::OptimizerConfig cfg;
  for (auto _ : state) nn::sgd_step(m, g, cfg);
}
BENCHMARK(BM_SgdStep);

}  // namespace

BENCHMARK_MAIN();
