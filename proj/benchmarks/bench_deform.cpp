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

#include <random>

#include "handlefit/deform.hpp"
#include "handlefit/mesh.hpp"
#include "handlefit/synthetic.hpp"

namespace handlefit {
namespace {

DeformSystem make_system(int subdivisions, int k) {
  const TriMesh m = icosphere(subdivisions);
  return DeformSystem::build(m, build_handle_map(m, farthest_point_sample(m, k)));
}

Eigen::MatrixX3d random_offsets(int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Eigen::MatrixX3d o(k, 3);
  for (Eigen::Index i = 0; i < o.size(); ++i) o.data()[i] = u(rng);
  return o;
}

void BM_BuildSystem(benchmark::State& state) {
  const TriMesh m = icosphere(static_cast<int>(state.range(0)));
  const HandleMap h = build_handle_map(m, farthest_point_sample(m, 16));
  for (auto _ : state) benchmark::DoNotOptimize(DeformSystem::build(m, h));
  state.counters["vertices"] = static_cast<double>(m.vertex_count());
}
BENCHMARK(BM_BuildSystem)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

void BM_DeformSolve(benchmark::State& state) {
  const DeformSystem sys = make_system(static_cast<int>(state.range(0)), 16);
  const Eigen::MatrixX3d h = sys.targets(random_offsets(16, 1));
  for (auto _ : state) benchmark::DoNotOptimize(sys.solve_for_targets(h));
}
BENCHMARK(BM_DeformSolve)->DenseRange(2, 4)->Unit(benchmark::kMicrosecond);

// The folded map replaces a sparse solve with one dense product.
void BM_DeformFolded(benchmark::State& state) {
  const DeformSystem sys = make_system(static_cast<int>(state.range(0)), 16);
  const Eigen::MatrixX3d h = sys.targets(random_offsets(16, 1));
  for (auto _ : state) benchmark::DoNotOptimize(sys.vertices_for_targets(h));
}
BENCHMARK(BM_DeformFolded)->DenseRange(2, 4)->Unit(benchmark::kMicrosecond);

void BM_SolverBackward(benchmark::State& state) {
  const DeformSystem sys = make_system(static_cast<int>(state.range(0)), 16);
  const Eigen::MatrixX3d h = sys.targets(random_offsets(16, 2));
  const Eigen::MatrixX3d v = sys.solve_for_targets(h);
  const Eigen::MatrixX3d grad = Eigen::MatrixX3d::Ones(v.rows(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(solver_backward(sys, h, v, grad));
}
BENCHMARK(BM_SolverBackward)->DenseRange(2, 4)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace handlefit
