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

#include "handlefit/sparse_solver.hpp"

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include "handlefit/error.hpp"

namespace handlefit {
namespace {

using Sparse = Eigen::SparseMatrix<double>;
using Cholesky = Eigen::SimplicialLLT<Sparse, Eigen::Lower, Eigen::AMDOrdering<int>>;
using DenseCholesky = Eigen::LLT<Eigen::MatrixXd, Eigen::Lower>;
using Cg = Eigen::ConjugateGradient<Sparse, Eigen::Lower | Eigen::Upper,
                                    Eigen::DiagonalPreconditioner<double>>;

// Stored fill above which the blocked dense factor beats the simplicial one.
// Dense handle weights make A^T A, and hence W, nearly full.
constexpr double kDenseFillThreshold = 0.25;

double max_abs(const Sparse& m) {
  double out = 0.0;
  for (int c = 0; c < m.outerSize(); ++c) {
    for (Sparse::InnerIterator it(m, c); it; ++it) out = std::max(out, std::abs(it.value()));
  }
  return out;
}

}  // namespace

SpdMatrix::SpdMatrix(Storage matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() != matrix_.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "SPD matrix must be square");
  }
  matrix_.makeCompressed();
  const double scale = std::max(1.0, max_abs(matrix_));
  const Storage transposed = matrix_.transpose();
  const double asym = max_abs(Storage(matrix_ - transposed));
  if (asym > 1e-12 * scale) {
    throw Error(ErrorKind::kInvalidArgument,
                "matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  }
}

SpdMatrix SpdMatrix::from_dense(const Eigen::MatrixXd& dense) {
  return SpdMatrix(dense.sparseView(0.0, 0.0));
}

struct SpdFactorization::Impl {
  int n = 0;
  SolverKind kind = SolverKind::kCholesky;
  std::optional<Cholesky> cholesky;
  std::optional<DenseCholesky> dense;
  // CG keeps a reference to its matrix and mutable iteration counters, so the
  // matrix is owned here and every solve runs on a fresh solver object.
  Sparse matrix;
  double cg_tolerance = 0.0;
  int cg_max_iterations = 0;

  void setup_cg(Cg& cg) const {
    cg.setTolerance(cg_tolerance);
    cg.setMaxIterations(cg_max_iterations);
    cg.compute(matrix);
  }
};

SpdFactorization::SpdFactorization(std::unique_ptr<const Impl> impl) : impl_(std::move(impl)) {}
SpdFactorization::~SpdFactorization() = default;
SpdFactorization::SpdFactorization(SpdFactorization&&) noexcept = default;
SpdFactorization& SpdFactorization::operator=(SpdFactorization&&) noexcept = default;

int SpdFactorization::dimension() const { return impl_->n; }
SolverKind SpdFactorization::kind() const { return impl_->kind; }

Eigen::MatrixXd SpdFactorization::solve(const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != impl_->n) {
    throw Error(ErrorKind::kDimensionMismatch, "rhs has " + std::to_string(rhs.rows()) +
                                                   " rows, system has " +
                                                   std::to_string(impl_->n));
  }
  Eigen::MatrixXd out(rhs.rows(), rhs.cols());
  if (impl_->cholesky) {
    out = impl_->cholesky->solve(rhs);
  } else if (impl_->dense) {
    out = impl_->dense->solve(rhs);
  } else {
    Cg cg;
    impl_->setup_cg(cg);
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
      Eigen::VectorXd col = cg.solve(rhs.col(c));
      out.col(c) = col;
    }
  }
  return out;
}

SpdFactorization factorize(const SpdMatrix& matrix, const SolverOptions& options) {
  const Sparse& m = matrix.matrix();
  auto impl = std::make_unique<SpdFactorization::Impl>();
  impl->n = matrix.dimension();
  impl->kind = options.kind;

  const Eigen::VectorXd diag = m.diagonal();
  const double max_diag = diag.size() > 0 ? diag.maxCoeff() : 0.0;
  if (!(max_diag > 0.0)) {
    throw Error(ErrorKind::kNotPositiveDefinite, "matrix has no positive diagonal entry");
  }
  const double pivot_floor = kPivotTolerance * max_diag;

  auto check_pivots = [&](const Eigen::VectorXd& l_diag) {
    for (Eigen::Index i = 0; i < l_diag.size(); ++i) {
      if (!(l_diag[i] * l_diag[i] > pivot_floor)) {
        throw Error(ErrorKind::kNotPositiveDefinite,
                    "pivot " + std::to_string(i) + " below tolerance");
      }
    }
  };

  const double fill = impl->n > 0 ? static_cast<double>(m.nonZeros()) /
                                        (static_cast<double>(impl->n) * impl->n)
                                  : 0.0;
  if (options.kind == SolverKind::kCholesky && fill > kDenseFillThreshold) {
    auto& chol = impl->dense.emplace(Eigen::MatrixXd(m));
    if (chol.info() != Eigen::Success) {
      throw Error(ErrorKind::kNotPositiveDefinite, "Cholesky factorization failed");
    }
    check_pivots(chol.matrixLLT().diagonal());
  } else if (options.kind == SolverKind::kCholesky) {
    auto& chol = impl->cholesky.emplace();
    chol.compute(m);
    if (chol.info() != Eigen::Success) {
      throw Error(ErrorKind::kNotPositiveDefinite, "Cholesky factorization failed");
    }
    check_pivots(Sparse(chol.matrixL()).diagonal());
  } else {
    if ((diag.array() <= pivot_floor).any()) {
      throw Error(ErrorKind::kNotPositiveDefinite, "nonpositive diagonal entry");
    }
    impl->matrix = m;
    impl->cg_tolerance = options.cg_tolerance;
    impl->cg_max_iterations =
        options.cg_max_iterations > 0 ? options.cg_max_iterations : 10 * std::max(1, impl->n);
    Cg cg;
    impl->setup_cg(cg);
    if (cg.info() != Eigen::Success) {
      throw Error(ErrorKind::kNotPositiveDefinite, "CG preconditioner setup failed");
    }
  }
  return SpdFactorization(std::move(impl));
}

Eigen::MatrixXd solve_multi(const SpdFactorization& factor, const Eigen::MatrixXd& rhs) {
  return factor.solve(rhs);
}

Eigen::MatrixXd dense_oracle_solve(const Eigen::MatrixXd& matrix, const Eigen::MatrixXd& rhs) {
  const Eigen::Index n = matrix.rows();
  if (matrix.cols() != n || rhs.rows() != n) {
    throw Error(ErrorKind::kDimensionMismatch, "dense oracle expects square matrix and matching rhs");
  }
  if (n > 2000) throw Error(ErrorKind::kInvalidArgument, "dense oracle limited to n <= 2000");

  Eigen::MatrixXd a = matrix;
  Eigen::MatrixXd b = rhs;
  const double scale = n > 0 ? a.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index pivot = k;
    for (Eigen::Index r = k + 1; r < n; ++r) {
      if (std::abs(a(r, k)) > std::abs(a(pivot, k))) pivot = r;
    }
    if (!(std::abs(a(pivot, k)) > 1e-14 * scale)) {
      throw Error(ErrorKind::kSingularMatrix, "zero pivot in column " + std::to_string(k));
    }
    if (pivot != k) {
      a.row(k).swap(a.row(pivot));
      b.row(k).swap(b.row(pivot));
    }
    for (Eigen::Index r = k + 1; r < n; ++r) {
      const double factor = a(r, k) / a(k, k);
      if (factor == 0.0) continue;
      for (Eigen::Index c = k; c < n; ++c) a(r, c) -= factor * a(k, c);
      b.row(r) -= factor * b.row(k);
    }
  }
  Eigen::MatrixXd x(n, b.cols());
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    Eigen::RowVectorXd acc = b.row(k);
    for (Eigen::Index c = k + 1; c < n; ++c) acc -= a(k, c) * x.row(c);
    x.row(k) = acc / a(k, k);
  }
  return x;
}

}  // namespace handlefit
