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


#include <ostream>
#include <random>

#include <gtest/gtest.h>

#include "handlefit/deform.hpp"
#include "handlefit/sparse_solver.hpp"
#include "handlefit/synthetic.hpp"
#include "support/expect_error.hpp"
#include "support/oracles.hpp"

namespace handlefit {

void PrintTo(SolverKind kind, std::ostream* os) {
  *os << (kind == SolverKind::kCholesky ? "cholesky" : "cg");
}

namespace {

Eigen::MatrixXd random_spd(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m * m.transpose() + n * Eigen::MatrixXd::Identity(n, n);
}

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

class SolverKinds : public ::testing::TestWithParam<SolverKind> {};

TEST_P(SolverKinds, IdentitySolveEchoesRhs) {
  const SpdMatrix m = SpdMatrix::from_dense(Eigen::MatrixXd::Identity(5, 5));
  const Eigen::MatrixXd b = random_matrix(5, 3, 1);
  EXPECT_LT((solve_multi(factorize(m, {GetParam()}), b) - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_P(SolverKinds, DiagonalSolve) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 4;
  const Eigen::MatrixXd x = solve_multi(factorize(SpdMatrix::from_dense(d), {GetParam()}),
                                        Eigen::Vector2d(2, 8));
  EXPECT_NEAR(x(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(x(1, 0), 2.0, 1e-12);
}

TEST_P(SolverKinds, ZeroRhsGivesZero) {
  const auto f = factorize(SpdMatrix::from_dense(random_spd(20, 2)), {GetParam()});
  EXPECT_EQ(solve_multi(f, Eigen::MatrixXd::Zero(20, 3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST_P(SolverKinds, RecoversPlantedSolution) {
  const Eigen::MatrixXd w = random_spd(40, 3);
  const Eigen::MatrixXd g = random_matrix(40, 3, 4);
  const auto f = factorize(SpdMatrix::from_dense(w), {GetParam()});
  EXPECT_LT(rel_err(solve_multi(f, w * g), g), 1e-7);
}

TEST_P(SolverKinds, TetrahedronNormalMatrixResidual) {
  const TriMesh t = tetrahedron();
  const std::vector<int> seeds = {0, 1};
  DeformOptions opts;
  opts.solver.kind = GetParam();
  const DeformSystem sys = DeformSystem::build(t, build_handle_map(t, seeds), opts);
  const Eigen::MatrixXd w = sys.normal_matrix().matrix().toDense();
  const Eigen::MatrixXd b = random_matrix(4, 3, 5);
  const Eigen::MatrixXd x = solve_multi(sys.factorization(), b);
  EXPECT_LE((w * x - b).cwiseAbs().maxCoeff(), 1e-8 * b.cwiseAbs().maxCoeff());
  EXPECT_LT(rel_err(x, testing::reference_solve(w, b)), 1e-8);
}

INSTANTIATE_TEST_SUITE_P(All, SolverKinds,
                         ::testing::Values(SolverKind::kCholesky, SolverKind::kConjugateGradient),
                         [](const auto& info) {
                           return info.param == SolverKind::kCholesky ? "Cholesky" : "Cg";
                         });

TEST(SolverTest, RejectsDimensionMismatch) {
  const auto f = factorize(SpdMatrix::from_dense(Eigen::MatrixXd::Identity(3, 3)));
  EXPECT_ERROR_KIND(ErrorKind::kDimensionMismatch, solve_multi(f, Eigen::MatrixXd::Zero(4, 1)));
}

TEST(SolverTest, RejectsIndefiniteMatrix) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 2, 1;
  EXPECT_ERROR_KIND(ErrorKind::kNotPositiveDefinite, factorize(SpdMatrix::from_dense(m)));
}

TEST(SolverTest, RejectsAsymmetricMatrix) {
  Eigen::MatrixXd m(2, 2);
  m << 2, 1, 0, 2;
  EXPECT_ERROR_KIND(ErrorKind::kInvalidArgument, SpdMatrix::from_dense(m));
}

TEST(DenseOracleTest, HandArithmetic) {
  Eigen::MatrixXd m(2, 2);
  m << 2, 1, 1, 2;
  const Eigen::MatrixXd x = dense_oracle_solve(m, Eigen::Vector2d(1, 1));
  EXPECT_NEAR(x(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(x(1, 0), 1.0 / 3.0, 1e-15);
  const Eigen::MatrixXd b = random_matrix(4, 2, 6);
  EXPECT_EQ(dense_oracle_solve(Eigen::MatrixXd::Identity(4, 4), b), b);
}

TEST(DenseOracleTest, AgreesWithFactorization) {
  const Eigen::MatrixXd w = random_spd(50, 7);
  const Eigen::MatrixXd b = random_matrix(50, 3, 8);
  const Eigen::MatrixXd sparse = solve_multi(factorize(SpdMatrix::from_dense(w)), b);
  EXPECT_LT(rel_err(dense_oracle_solve(w, b), sparse), 1e-8);
  EXPECT_LT(rel_err(testing::reference_solve(w, b), sparse), 1e-8);
}

TEST(SolverTest, DenseFillUsesAccurateFactor) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  Eigen::MatrixXd b(40, 40);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
  const Eigen::MatrixXd w = b.transpose() * b + Eigen::MatrixXd::Identity(40, 40);
  Eigen::MatrixXd rhs(40, 3);
  for (Eigen::Index i = 0; i < rhs.size(); ++i) rhs.data()[i] = g(rng);
  const Eigen::MatrixXd x = factorize(SpdMatrix::from_dense(w)).solve(rhs);
  const Eigen::MatrixXd ref = testing::reference_solve(w, rhs);
  EXPECT_LT((x - ref).cwiseAbs().maxCoeff(), 1e-10 * ref.cwiseAbs().maxCoeff());
}

TEST(DenseOracleTest, RejectsSingular) {
  EXPECT_ERROR_KIND(ErrorKind::kSingularMatrix,
                    dense_oracle_solve(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Ones(3, 1)));
}

}  // namespace
}  // namespace handlefit
