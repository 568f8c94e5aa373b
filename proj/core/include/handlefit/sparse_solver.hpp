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

#pragma once

#include <memory>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace handlefit {

/// Symmetric sparse matrix, checked for symmetry on construction.
class SpdMatrix {
 public:
  using Storage = Eigen::SparseMatrix<double>;

  explicit SpdMatrix(Storage matrix);
  static SpdMatrix from_dense(const Eigen::MatrixXd& dense);

  int dimension() const { return static_cast<int>(matrix_.rows()); }
  const Storage& matrix() const { return matrix_; }

 private:
  Storage matrix_;
};

enum class SolverKind { kCholesky, kConjugateGradient };

struct SolverOptions {
  SolverKind kind = SolverKind::kCholesky;
  double cg_tolerance = 1e-10;
  /// 0 means 10 * n.
  int cg_max_iterations = 0;
};

/// A pivot at or below this fraction of the largest diagonal entry means the
/// matrix is treated as not positive definite.
inline constexpr double kPivotTolerance = 1e-14;

/// Immutable factor state bound to one matrix. Solves are const and may run
/// concurrently.
class SpdFactorization {
 public:
  ~SpdFactorization();
  SpdFactorization(SpdFactorization&&) noexcept;
  SpdFactorization& operator=(SpdFactorization&&) noexcept;

  int dimension() const;
  SolverKind kind() const;

  /// Column-wise solve of W X = B.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

 private:
  struct Impl;
  explicit SpdFactorization(std::unique_ptr<const Impl> impl);
  std::unique_ptr<const Impl> impl_;

  friend SpdFactorization factorize(const SpdMatrix&, const SolverOptions&);
};

SpdFactorization factorize(const SpdMatrix& matrix, const SolverOptions& options = {});

/// Throws kDimensionMismatch when rhs.rows() differs from the factor size.
Eigen::MatrixXd solve_multi(const SpdFactorization& factor, const Eigen::MatrixXd& rhs);

/// Gaussian elimination with partial pivoting. Reference path for tests and
/// gradient checks; limited to n <= 2000.
Eigen::MatrixXd dense_oracle_solve(const Eigen::MatrixXd& matrix, const Eigen::MatrixXd& rhs);

}  // namespace handlefit
