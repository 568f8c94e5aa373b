// Copyright 2026 The handlefit Authors.
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

#include "handlefit/losses.hpp"
#include "handlefit/synthetic.hpp"

namespace handlefit {
namespace {

void BM_TotalLoss(benchmark::State& state) {
  SyntheticOptions o;
  o.frames = static_cast<int>(state.range(0));
  const SyntheticScene scene = make_synthetic_scene(o);
  const LossContext ctx =
      LossContext::create(*scene.system, scene.observations, static_cast<int>(state.range(1)));
  const LossWeights weights;
  for (auto _ : state) benchmark::DoNotOptimize(total_loss(ctx, scene.truth, weights));
  state.SetItemsProcessed(state.iterations() * o.frames);
}
BENCHMARK(BM_TotalLoss)
    ->ArgNames({"frames", "threads"})
    ->Args({3, 1})
    ->Args({8, 1})
    ->Args({8, 4})
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace handlefit
