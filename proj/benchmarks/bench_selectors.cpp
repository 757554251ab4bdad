#include <random>

#include <benchmark/benchmark.h>

#include "alssl/aus.hpp"
#include "alssl/bus.hpp"
#include "alssl/nn.hpp"

using namespace alssl;

namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
  return m;
}

std::vector<std::uint64_t> iota_ids(std::size_t n) {
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

void BM_AusScorePool(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = nn::TaskModel::create({2, 64, 32, 3}, 1);
  const Matrix reps = uniform(static_cast<Eigen::Index>(n), 32, 2);
  const auto ids = iota_ids(n);
  aus::VatConfig cfg;
  cfg.xi = aus::default_xi(32);
  for (auto _ : state) benchmark::DoNotOptimize(aus::score_pool(m, reps, ids, cfg, 0, 0, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_AusScorePool)->Arg(256)->Arg(2048);

void BM_NeighborIndex(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix reps = uniform(static_cast<Eigen::Index>(n), 32, 3);
  const auto ids = iota_ids(n);
  for (auto _ : state) benchmark::DoNotOptimize(bus::NeighborIndex(reps, ids, 20, 1));
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_NeighborIndex)->Arg(256)->Arg(1024)->Arg(2048)->Complexity(benchmark::oNSquared);

void BM_BalancedSelection(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<bus::UncertaintyScore> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i].id = i;
    scores[i].weighted = u(gen);
    scores[i].predicted_class = i % 3;
  }
  for (auto _ : state) benchmark::DoNotOptimize(bus::select_balanced(scores, n / 40, 3));
}
BENCHMARK(BM_BalancedSelection)->Arg(2048)->Arg(16384);

void BM_UnstableTopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<aus::UnstabilityScore> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = {i, u(gen), 0, 0};
  for (auto _ : state) benchmark::DoNotOptimize(aus::select_unstable_topk(scores, n / 40));
}
BENCHMARK(BM_UnstableTopK)->Arg(2048)->Arg(16384);

}  // namespace
