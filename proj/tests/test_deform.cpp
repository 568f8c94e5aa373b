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


#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "handlefit/deform.hpp"
#include "handlefit/synthetic.hpp"
#include "support/expect_error.hpp"
#include "support/oracles.hpp"

namespace handlefit {
namespace {

Eigen::MatrixX3d random_offsets(int k, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixX3d m(k, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

DeformSystem ico_system(int subdivisions, int k) {
  const TriMesh m = icosphere(subdivisions);
  return DeformSystem::build(m, build_handle_map(m, farthest_point_sample(m, k)));
}

// W and b assembled densely from their definitions.
struct DenseNormalEquations {
  Eigen::MatrixXd w;
  Eigen::MatrixXd b;
};

DenseNormalEquations dense_normal_equations(const DeformSystem& sys, const Eigen::MatrixXd& a,
                                            const Eigen::MatrixX3d& htilde) {
  const Eigen::MatrixXd l = sys.laplacian().matrix.toDense();
  const double lambda = sys.handle_weight();
  return {l.transpose() * l + lambda * a.transpose() * a,
          l.transpose() * l * sys.template_mesh().vertices + lambda * a.transpose() * htilde};
}

TEST(DeformTest, ZeroOffsetsRecoverTemplate) {
  for (int sub : {0, 2}) {
    const DeformSystem sys = ico_system(sub, sub == 0 ? 2 : 8);
    const double bbox = sys.template_mesh().bbox_diagonal();
    const TriMesh out = deform(sys, Eigen::MatrixX3d::Zero(sys.handle_count(), 3));
    EXPECT_LT((out.vertices - sys.template_mesh().vertices).cwiseAbs().maxCoeff(), 1e-7 * bbox);
    EXPECT_EQ(out.faces, sys.template_mesh().faces);
  }
  const TriMesh t = tetrahedron();
  const std::vector<int> seeds = {0, 1};
  const DeformSystem tet = DeformSystem::build(t, build_handle_map(t, seeds));
  EXPECT_LT((tet.vertices_for_targets(tet.template_handles()) - t.vertices).cwiseAbs().maxCoeff(),
            1e-9);
}

TEST(DeformTest, ConstantOffsetTranslates) {
  const DeformSystem sys = ico_system(2, 8);
  const Eigen::RowVector3d o(0.3, -0.2, 0.7);
  const Eigen::MatrixX3d offsets = o.replicate(sys.handle_count(), 1);
  Eigen::MatrixX3d expected = sys.template_mesh().vertices;
  expected.rowwise() += o;
  EXPECT_LT((deform(sys, offsets).vertices - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(DeformTest, AffineInTargets) {
  const DeformSystem sys = ico_system(2, 8);
  const Eigen::MatrixX3d h1 = sys.targets(random_offsets(8, 0.2, 1));
  const Eigen::MatrixX3d h2 = sys.targets(random_offsets(8, 0.2, 2));
  for (double alpha : {-0.5, 0.25, 0.9, 2.0}) {
    const Eigen::MatrixX3d lhs = sys.solve_for_targets(alpha * h1 + (1 - alpha) * h2);
    const Eigen::MatrixX3d rhs =
        alpha * sys.solve_for_targets(h1) + (1 - alpha) * sys.solve_for_targets(h2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(DeformTest, FoldMatchesDirectSolve) {
  const DeformSystem sys = ico_system(2, 8);
  const double bbox = sys.template_mesh().bbox_diagonal();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Eigen::MatrixX3d h = sys.targets(random_offsets(8, 0.1 * bbox, s));
    EXPECT_LT((sys.solve_for_targets(h) - sys.vertices_for_targets(h)).cwiseAbs().maxCoeff(),
              1e-8 * bbox);
  }
}

TEST(DeformTest, SinglePulledHandleMatchesDenseOracle) {
  const DeformSystem sys = ico_system(2, 8);
  Eigen::MatrixX3d offsets = Eigen::MatrixX3d::Zero(8, 3);
  offsets.row(3) << 0.0, 0.4, 0.1;
  const Eigen::MatrixX3d h = sys.targets(offsets);
  const auto eq = dense_normal_equations(sys, sys.handles().weights, h);
  const Eigen::MatrixXd ref = testing::reference_solve(eq.w, eq.b);
  const Eigen::MatrixX3d v = sys.vertices_for_targets(h);
  EXPECT_LT((v - ref).cwiseAbs().maxCoeff(), 1e-7 * ref.cwiseAbs().maxCoeff());
}

TEST(DeformTest, SolutionIsStationary) {
  // Gradient of the quadratic objective vanishes at V*.
  const DeformSystem sys = ico_system(1, 5);
  const Eigen::MatrixX3d h = sys.targets(random_offsets(5, 0.3, 9));
  const auto eq = dense_normal_equations(sys, sys.handles().weights, h);
  const Eigen::MatrixX3d v = sys.vertices_for_targets(h);
  EXPECT_LT((eq.w * v - eq.b).cwiseAbs().maxCoeff(), 1e-9 * eq.b.cwiseAbs().maxCoeff());
}

TEST(DeformTest, HandleWeightChangesSolution) {
  const TriMesh m = icosphere(1);
  const HandleMap hm = build_handle_map(m, farthest_point_sample(m, 4));
  DeformOptions stiff;
  stiff.handle_weight = 10.0;
  const DeformSystem a = DeformSystem::build(m, hm);
  const DeformSystem b = DeformSystem::build(m, hm, stiff);
  const Eigen::MatrixX3d off = random_offsets(4, 0.3, 3);
  const Eigen::MatrixX3d va = a.vertices_for_offsets(off), vb = b.vertices_for_offsets(off);
  // Stiffer handles pull the handle positions closer to their targets.
  const double ra = (hm.weights * va - a.targets(off)).norm();
  const double rb = (hm.weights * vb - b.targets(off)).norm();
  EXPECT_LT(rb, ra);
}

TEST(DeformTest, RejectsInvalidHandleMap) {
  const TriMesh m = tetrahedron();
  HandleMap h;
  h.seeds = {0, 1};
  h.weights = Eigen::MatrixXd::Zero(2, 4);
  h.weights(0, 0) = 1.0;
  EXPECT_ERROR_KIND(ErrorKind::kInvalidArgument, DeformSystem::build(m, h));
}

TEST(DeformTest, RejectsWrongOffsetShape) {
  const DeformSystem sys = ico_system(0, 3);
  EXPECT_ERROR_KIND(ErrorKind::kDimensionMismatch, deform(sys, Eigen::MatrixX3d::Zero(4, 3)));
}

TEST(BackwardTest, ZeroUpstreamGivesZero) {
  const DeformSystem sys = ico_system(0, 3);
  const Eigen::MatrixX3d h = sys.targets(random_offsets(3, 0.2, 1));
  const SolverGradients g = solver_backward(sys, h, sys.vertices_for_targets(h),
                                            Eigen::MatrixX3d::Zero(sys.vertex_count(), 3));
  EXPECT_EQ(g.htilde.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.a.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BackwardTest, MatchesIndependentFiniteDifferences) {
  // N = 12, K = 3. The oracle re-solves the dense normal equations for every
  // perturbed H~ or A entry; rows of A are not renormalized.
  const DeformSystem sys = ico_system(0, 3);
  const Eigen::MatrixX3d h = sys.targets(random_offsets(3, 0.2, 11));
  const Eigen::MatrixX3d c = random_offsets(sys.vertex_count(), 1.0, 12);
  const Eigen::MatrixXd a0 = sys.handles().weights;
  auto probe = [&](const Eigen::MatrixXd& a, const Eigen::MatrixX3d& ht) {
    const auto eq = dense_normal_equations(sys, a, ht);
    return (c.array() * testing::reference_solve(eq.w, eq.b).array()).sum();
  };
  const SolverGradients g = solver_backward(sys, h, sys.vertices_for_targets(h), c);

  const Eigen::MatrixXd fd_h = testing::numeric_gradient(
      [&](const Eigen::MatrixXd& ht) { return probe(a0, ht); }, h, 1e-5);
  EXPECT_LT(testing::max_relative_error(g.htilde, fd_h), 1e-6);

  const Eigen::MatrixXd fd_a = testing::numeric_gradient(
      [&](const Eigen::MatrixXd& a) { return probe(a, h); }, a0, 1e-5);
  EXPECT_LT(testing::max_relative_error(g.a, fd_a), 1e-5);
}

TEST(BackwardTest, DroppedMatrixPathIsDetected) {
  const DeformSystem sys = ico_system(0, 3);
  const Eigen::MatrixX3d h = sys.targets(random_offsets(3, 0.2, 13));
  const Eigen::MatrixX3d v = sys.vertices_for_targets(h);
  const Eigen::MatrixX3d c = random_offsets(sys.vertex_count(), 1.0, 14);
  const SolverGradients good = solver_backward(sys, h, v, c);
  const SolverGradients bad = solver_backward(sys, h, v, c, BackwardFault::kDropWPath);
  EXPECT_EQ(good.htilde, bad.htilde);
  EXPECT_GT((good.a - bad.a).cwiseAbs().maxCoeff(), 1e-3 * good.a.cwiseAbs().maxCoeff());
}

TEST(GradcheckTest, PassesOnSeeds) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GradcheckReport r = gradcheck(seed);
    EXPECT_TRUE(r.pass) << seed << ": " << r.max_rel_err_htilde << " " << r.max_rel_err_a;
    EXPECT_LE(r.vertex_count, 20);
  }
}

TEST(GradcheckTest, DeterministicPerSeed) {
  EXPECT_EQ(gradcheck_report_to_json(gradcheck(7)), gradcheck_report_to_json(gradcheck(7)));
}

TEST(GradcheckTest, CorruptedBackwardFails) {
  EXPECT_FALSE(gradcheck(0, BackwardFault::kDropWPath).pass);
}

}  // namespace
}  // namespace handlefit
