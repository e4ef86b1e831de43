#include <benchmark/benchmark.h>

#include <vector>

#include "bpseg/enhance.hpp"
#include "bpseg/losses.hpp"
#include "bpseg/metrics.hpp"
#include "bpseg/network.hpp"
#include "bpseg/preprocess.hpp"
#include "bpseg/rng.hpp"
#include "bpseg/synthetic.hpp"

using namespace bpseg;

namespace {

GrayImage speckle(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(uniform_below(rng, 96));
  return img;
}

BinaryMask blob(int w, int h) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.at(x, y) = (x - w / 2) * (x - w / 2) + (y - h / 3) * (y - h / 3) < w * h / 20;
  }
  return m;
}

void BM_Clahe(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GrayImage img = speckle(n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(clahe(img));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_Clahe)->Arg(224)->Arg(512);

void BM_Augment(benchmark::State& state) {
  const GrayImage img = speckle(553, 492, 2);
  const BinaryMask mask = blob(553, 492);
  AugmentConfig cfg;
  for (auto _ : state) {
    ++cfg.seed;
    benchmark::DoNotOptimize(augment_sixfold(img, mask, cfg));
  }
}
BENCHMARK(BM_Augment);

void BM_LovaszHinge(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<double> s(n);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = static_cast<double>(uniform_below(rng, 20000)) / 5000.0 - 2.0;
    y[i] = uniform_below(rng, 4) == 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(lovasz_hinge(s, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_LovaszHinge)->Arg(224 * 224);

void BM_IoU(benchmark::State& state) {
  const BinaryMask a = blob(224, 224);
  const BinaryMask b = horizontal_flip(a);
  for (auto _ : state) benchmark::DoNotOptimize(iou(a, b));
}
BENCHMARK(BM_IoU);

void BM_NetworkForward(benchmark::State& state) {
  NetworkConfig cfg;
  cfg.base_channels = static_cast<int>(state.range(0));
  auto params = build_model<float>(cfg);
  Tensor<float> input(1, 1, 224, 224, 0.3f);
  Network<float> net(params);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(input, Mode::kInference).data.data());
}
BENCHMARK(BM_NetworkForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_NetworkTrainStep(benchmark::State& state) {
  NetworkConfig cfg;
  cfg.base_channels = 16;
  auto params = build_model<float>(cfg);
  Tensor<float> input(4, 1, 224, 224, 0.3f);
  Tensor<float> grad(4, 1, 224, 224, 1e-4f);
  Network<float> net(params);
  for (auto _ : state) {
    net.forward(input, Mode::kTrain);
    params.zero_grad();
    net.backward(grad);
  }
}
BENCHMARK(BM_NetworkTrainStep)->Unit(benchmark::kMillisecond);

void BM_Phantom(benchmark::State& state) {
  PhantomConfig cfg;
  int i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_phantom(cfg, i++));
}
BENCHMARK(BM_Phantom)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
