#include <benchmark/benchmark.h>

#include <random>

#include "hprune/conv.hpp"
#include "hprune/layer_select.hpp"
#include "hprune/reference.hpp"
#include "hprune/sparse_approx.hpp"
#include "hprune/verify.hpp"

using namespace hprune;

namespace {

struct ConvCase {
  ConvLayer layer;
  Tensor input;
};

ConvCase conv_case(std::size_t channels, std::size_t side) {
  std::mt19937_64 rng(1);
  return {verify::random_layer(rng, channels, channels, 3, Activation::ReLU, true),
          verify::random_tensor(rng, {channels, side, side})};
}

void BM_ConvParallel(benchmark::State& state) {
  const auto c = conv_case(static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward(c.layer, c.input));
}

void BM_ConvSerialReference(benchmark::State& state) {
  const auto c = conv_case(static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv_forward(c.layer, c.input));
}

FilterMatrix filter_case(Eigen::Index rows, Eigen::Index cols) {
  std::mt19937_64 rng(2);
  return FilterMatrix(verify::random_matrix(rng, rows, cols));
}

// Five filters removed from a 256-filter layer of 3x3x64 kernels.
void BM_FilterBackward(benchmark::State& state) {
  const auto f = filter_case(576, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fp_backward_keep(f, static_cast<std::size_t>(state.range(0)) - 5));
}

void BM_FilterOmp(benchmark::State& state) {
  const auto f = filter_case(576, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fp_omp_keep(f, static_cast<std::size_t>(state.range(0)) - 5));
}

void BM_FilterOmpExplicitResidual(benchmark::State& state) {
  const auto f = filter_case(576, state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::fp_omp_keep(f, static_cast<std::size_t>(state.range(0)) - 5));
}

struct TreeCase {
  Network net;
  Dataset data;
  Candidates cands;
};

TreeCase tree_case(std::size_t depth) {
  std::mt19937_64 rng(3);
  TreeCase t;
  std::size_t in = 3;
  for (std::size_t c = 0; c < depth; ++c) {
    t.net.layers.push_back(verify::random_layer(rng, in, 16, 3, Activation::ReLU, false));
    in = 16;
  }
  for (int i = 0; i < 8; ++i) t.data.examples.push_back(verify::random_tensor(rng, {3, 16, 16}));
  PruneConfig cfg;
  cfg.alpha = 2;
  t.cands = build_candidates(t.net, cfg);
  return t;
}

void BM_FinalErrorsTree(benchmark::State& state) {
  const auto t = tree_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        final_output_errors(t.net, t.cands, t.data, ErrorPoint::PostActivation));
}

void BM_FinalErrorsNaive(benchmark::State& state) {
  const auto t = tree_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        reference::final_output_errors(t.net, t.cands, t.data, ErrorPoint::PostActivation));
}

}  // namespace

BENCHMARK(BM_ConvParallel)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvSerialReference)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_FilterBackward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FilterOmp)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FilterOmpExplicitResidual)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FinalErrorsTree)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FinalErrorsNaive)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
