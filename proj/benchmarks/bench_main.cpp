// Copyright 2026 The BadVision Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include <random>

#include "badvision/badvision.hpp"

using namespace badvision;

namespace {

const Encoder& fixture() {
  static const Encoder enc = load_encoder_checkpoint(BADVISION_FIXTURE_ENCODER);
  return enc;
}

ImageBatch noise_batch(std::size_t n) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(n * 3 * 32 * 32);
  for (double& v : px) v = u(rng);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "b" + std::to_string(i);
  return ImageBatch(3, 32, 32, std::move(px), std::move(ids));
}

void BM_Forward(benchmark::State& state) {
  const ImageBatch batch = noise_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fixture().forward(batch, false).features);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(4)->Arg(32);

void BM_ForwardBackward(benchmark::State& state) {
  const ImageBatch batch = noise_batch(static_cast<std::size_t>(state.range(0)));
  const Encoder& enc = fixture();
  std::vector<double> pgrad(enc.param_count());
  std::vector<double> igrad(batch.pixels().size());
  for (auto _ : state) {
    const Activation act = enc.forward(batch, true);
    Eigen::MatrixXd d = Eigen::MatrixXd::Ones(act.features.rows(), act.features.cols());
    enc.backward(act, d, pgrad, igrad);
    benchmark::DoNotOptimize(pgrad.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(4)->Arg(32);

void BM_PairwiseMeanCos(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  FeatureMatrix f{Eigen::MatrixXd::Random(n, 64), false};
  for (auto _ : state) benchmark::DoNotOptimize(pairwise_mean_cos(f));
}
BENCHMARK(BM_PairwiseMeanCos)->Arg(16)->Arg(200)->Arg(1000);

void BM_ApplyTrigger(benchmark::State& state) {
  const ImageBatch batch = noise_batch(200);
  const Perturbation p = init_perturbation(3, 32, 32, 8.0 / 255.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(apply_trigger(batch, p));
}
BENCHMARK(BM_ApplyTrigger);

void BM_TriggerInversion(benchmark::State& state) {
  const ImageBatch probe = noise_batch(64);
  InversionConfig cfg;
  cfg.steps = 10;
  for (auto _ : state) benchmark::DoNotOptimize(invert_trigger(fixture(), probe, cfg).pl1);
}
BENCHMARK(BM_TriggerInversion)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
