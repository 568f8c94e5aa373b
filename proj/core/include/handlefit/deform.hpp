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

#include <cstdint>
#include <memory>

#include <Eigen/Core>

#include "handlefit/mesh.hpp"
#include "handlefit/sparse_solver.hpp"

namespace handlefit {

struct DeformOptions {
  /// Weight on the handle term ||A V - H~||^2. 1 gives the plain objective.
  double handle_weight = 1.0;
  SolverOptions solver;
};

// Laplacian surface editing through soft handle constraints:
//
//   V* = argmin 1/2 ||L V - L T||^2 + lambda/2 ||A V - H~||^2
//
// whose normal equations are W V* = L^T L T + lambda A^T H~ with
// W = L^T L + lambda A^T A. Because A, L and T are fixed the solution folds
// into the affine map V* = C + D H~, which is what deform() evaluates.
//
// A DeformSystem is immutable after build() and can be shared across threads.
class DeformSystem {
 public:
  static DeformSystem build(const TriMesh& templ, const HandleMap& handles,
                            const DeformOptions& options = {});

  const TriMesh& template_mesh() const { return template_; }
  const SparseLaplacian& laplacian() const { return laplacian_; }
  const HandleMap& handles() const { return handles_; }
  const SpdMatrix& normal_matrix() const { return *normal_matrix_; }
  const SpdFactorization& factorization() const { return *factorization_; }
  double handle_weight() const { return handle_weight_; }

  int vertex_count() const { return template_.vertex_count(); }
  int handle_count() const { return handles_.handle_count(); }

  /// L^T L T (N x 3).
  const Eigen::MatrixX3d& rhs_const() const { return rhs_const_; }
  /// C = W^-1 L^T L T (N x 3).
  const Eigen::MatrixX3d& fold_offset() const { return fold_offset_; }
  /// D = lambda W^-1 A^T (N x K).
  const Eigen::MatrixXd& fold_map() const { return fold_map_; }
  /// A T (K x 3), the template handle positions.
  const Eigen::MatrixX3d& template_handles() const { return template_handles_; }

  /// H~ = A T + offsets.
  Eigen::MatrixX3d targets(const Eigen::MatrixX3d& offsets) const;

  /// Folded evaluation C + D H~.
  Eigen::MatrixX3d vertices_for_targets(const Eigen::MatrixX3d& htilde) const;
  Eigen::MatrixX3d vertices_for_offsets(const Eigen::MatrixX3d& offsets) const;

  /// Direct solve of the normal equations through the factorization; agrees
  /// with the folded route up to solver tolerance.
  Eigen::MatrixX3d solve_for_targets(const Eigen::MatrixX3d& htilde) const;

 private:
  DeformSystem() = default;

  TriMesh template_;
  SparseLaplacian laplacian_;
  HandleMap handles_;
  double handle_weight_ = 1.0;
  std::shared_ptr<const SpdMatrix> normal_matrix_;
  std::shared_ptr<const SpdFactorization> factorization_;
  Eigen::MatrixX3d rhs_const_;
  Eigen::MatrixX3d fold_offset_;
  Eigen::MatrixXd fold_map_;
  Eigen::MatrixX3d template_handles_;
};

/// Deformed mesh for per-handle offsets (K x 3); faces are copied from the
/// template.
TriMesh deform(const DeformSystem& system, const Eigen::MatrixX3d& offsets);

struct SolverGradients {
  Eigen::MatrixX3d htilde;  // K x 3
  Eigen::MatrixXd a;        // K x N
};

/// Test hook used to verify that gradcheck detects a broken backward pass.
enum class BackwardFault { kNone, kDropWPath };

/// Backpropagates dg/dV* through the normal-equation solve.
///
///   grad_b      = W^-1 grad_v
///   grad_htilde = lambda A grad_b
///   grad_W      = -grad_b V*^T
///   grad_A      = lambda (H~ grad_b^T + A (grad_W + grad_W^T))
///
/// The last line combines the right-hand-side path (b depends on A through
/// A^T H~) with the matrix path (W depends on A through A^T A). grad_A is
/// taken over the unconstrained entries of A.
SolverGradients solver_backward(const DeformSystem& system, const Eigen::MatrixX3d& htilde,
                                const Eigen::MatrixX3d& v_star, const Eigen::MatrixX3d& grad_v,
                                BackwardFault fault = BackwardFault::kNone);

struct GradcheckReport {
  std::uint64_t seed = 0;
  int vertex_count = 0;
  int handle_count = 0;
  double max_rel_err_htilde = 0.0;
  double max_rel_err_a = 0.0;
  bool pass = false;
};

inline constexpr double kGradcheckTolerance = 1e-5;

/// Builds a random small system (N <= 20) from `seed` and compares the
/// analytic solver gradients to central finite differences of a linear probe
/// g(V*) = sum c_ij V*_ij. The finite-difference side re-solves the normal
/// equations with the dense oracle, without renormalizing rows of A.
GradcheckReport gradcheck(std::uint64_t seed, BackwardFault fault = BackwardFault::kNone);

std::string gradcheck_report_to_json(const GradcheckReport& report);

}  // namespace handlefit
