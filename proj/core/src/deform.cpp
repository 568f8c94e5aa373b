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

#include "handlefit/deform.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <json.hpp>

#include "handlefit/error.hpp"

namespace handlefit {
namespace {

using Sparse = Eigen::SparseMatrix<double>;

void check_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                 const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorKind::kDimensionMismatch,
                std::string(what) + " is " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
}

}  // namespace

DeformSystem DeformSystem::build(const TriMesh& templ, const HandleMap& handles,
                                 const DeformOptions& options) {
  validate_mesh(templ);
  validate_handle_map(handles, templ.vertex_count());
  if (!(options.handle_weight > 0.0) || !std::isfinite(options.handle_weight)) {
    throw Error(ErrorKind::kInvalidArgument, "handle weight must be positive");
  }

  DeformSystem sys;
  sys.template_ = templ;
  sys.handles_ = handles;
  sys.handle_weight_ = options.handle_weight;
  sys.laplacian_ = cotangent_laplacian(templ);

  const Sparse lap = sys.laplacian_.matrix;
  const Sparse a = handles.weights.sparseView(0.0, 0.0);
  const Sparse at = a.transpose();
  const Sparse lt = lap.transpose();
  Sparse w = Sparse(lt * lap) + options.handle_weight * Sparse(at * a);
  const Sparse wt = w.transpose();
  w = 0.5 * (w + wt);

  sys.normal_matrix_ = std::make_shared<const SpdMatrix>(std::move(w));
  sys.factorization_ =
      std::make_shared<const SpdFactorization>(factorize(*sys.normal_matrix_, options.solver));

  sys.rhs_const_ = lt * (lap * templ.vertices);
  sys.fold_offset_ = sys.factorization_->solve(sys.rhs_const_);
  sys.fold_map_ =
      options.handle_weight * sys.factorization_->solve(Eigen::MatrixXd(handles.weights.transpose()));
  sys.template_handles_ = handles.weights * templ.vertices;
  return sys;
}

Eigen::MatrixX3d DeformSystem::targets(const Eigen::MatrixX3d& offsets) const {
  check_shape(offsets, handle_count(), 3, "handle offsets");
  return template_handles_ + offsets;
}

Eigen::MatrixX3d DeformSystem::vertices_for_targets(const Eigen::MatrixX3d& htilde) const {
  check_shape(htilde, handle_count(), 3, "handle targets");
  return fold_offset_ + fold_map_ * htilde;
}

Eigen::MatrixX3d DeformSystem::vertices_for_offsets(const Eigen::MatrixX3d& offsets) const {
  return vertices_for_targets(targets(offsets));
}

Eigen::MatrixX3d DeformSystem::solve_for_targets(const Eigen::MatrixX3d& htilde) const {
  check_shape(htilde, handle_count(), 3, "handle targets");
  const Eigen::MatrixXd rhs =
      rhs_const_ + handle_weight_ * handles_.weights.transpose() * htilde;
  return factorization_->solve(rhs);
}

TriMesh deform(const DeformSystem& system, const Eigen::MatrixX3d& offsets) {
  TriMesh out;
  out.vertices = system.vertices_for_offsets(offsets);
  out.faces = system.template_mesh().faces;
  return out;
}

SolverGradients solver_backward(const DeformSystem& system, const Eigen::MatrixX3d& htilde,
                                const Eigen::MatrixX3d& v_star, const Eigen::MatrixX3d& grad_v,
                                BackwardFault fault) {
  const int n = system.vertex_count();
  const int k = system.handle_count();
  check_shape(htilde, k, 3, "handle targets");
  check_shape(v_star, n, 3, "solution vertices");
  check_shape(grad_v, n, 3, "vertex gradient");

  const double lambda = system.handle_weight();
  const Eigen::MatrixXd& a = system.handles().weights;
  const Eigen::MatrixX3d grad_b = system.factorization().solve(grad_v);
  const Eigen::MatrixX3d a_grad_b = a * grad_b;

  SolverGradients out;
  out.htilde = lambda * a_grad_b;
  // b-path: H~ grad_b^T. W-path: A (grad_W + grad_W^T) with grad_W = -grad_b V*^T,
  // expanded so the N x N matrix is never formed.
  out.a = htilde * grad_b.transpose();
  if (fault != BackwardFault::kDropWPath) {
    out.a -= a_grad_b * v_star.transpose();
    out.a -= (a * v_star) * grad_b.transpose();
  }
  out.a *= lambda;
  return out;
}

namespace {

// Jittered grid with alternating diagonals; rows * cols <= 20.
TriMesh random_grid_mesh(std::mt19937_64& rng) {
  const int rows = std::uniform_int_distribution<int>(3, 4)(rng);
  const int cols = std::uniform_int_distribution<int>(3, 5)(rng);
  std::uniform_real_distribution<double> jitter(-0.15, 0.15);
  TriMesh mesh;
  mesh.vertices.resize(rows * cols, 3);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      mesh.vertices.row(r * cols + c) << c + jitter(rng), r + jitter(rng), 0.5 * jitter(rng);
    }
  }
  mesh.faces.resize(2 * (rows - 1) * (cols - 1), 3);
  int f = 0;
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const int v00 = r * cols + c, v01 = v00 + 1, v10 = v00 + cols, v11 = v10 + 1;
      if ((r + c) % 2 == 0) {
        mesh.faces.row(f++) << v00, v01, v11;
        mesh.faces.row(f++) << v00, v11, v10;
      } else {
        mesh.faces.row(f++) << v00, v01, v10;
        mesh.faces.row(f++) << v01, v11, v10;
      }
    }
  }
  return mesh;
}

Eigen::MatrixXd dense_solve_vertices(const Eigen::MatrixXd& ltl, const Eigen::MatrixXd& rhs_const,
                                     const Eigen::MatrixXd& a, const Eigen::MatrixXd& htilde) {
  const Eigen::MatrixXd w = ltl + a.transpose() * a;
  const Eigen::MatrixXd b = rhs_const + a.transpose() * htilde;
  return dense_oracle_solve(w, b);
}

double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double floor = 1e-3 * numeric.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double f = numeric.data()[i];
    const double denom = std::max({std::abs(a), std::abs(f), floor});
    if (denom > 0.0) worst = std::max(worst, std::abs(a - f) / denom);
  }
  return worst;
}

}  // namespace

GradcheckReport gradcheck(std::uint64_t seed, BackwardFault fault) {
  std::mt19937_64 rng(seed);
  const TriMesh mesh = random_grid_mesh(rng);
  const int n = mesh.vertex_count();
  const int k = 3;

  std::uniform_real_distribution<double> positive(0.1, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  HandleMap handles;
  handles.weights.resize(k, n);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < n; ++c) handles.weights(r, c) = positive(rng);
    handles.weights.row(r) /= handles.weights.row(r).sum();
    handles.seeds.push_back(r);
  }
  const DeformSystem system = DeformSystem::build(mesh, handles);

  Eigen::MatrixX3d offsets(k, 3);
  Eigen::MatrixX3d probe(n, 3);
  for (Eigen::Index i = 0; i < offsets.size(); ++i) offsets.data()[i] = 0.3 * normal(rng);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = normal(rng);

  const Eigen::MatrixX3d htilde = system.targets(offsets);
  const Eigen::MatrixX3d v_star = system.solve_for_targets(htilde);
  const SolverGradients analytic = solver_backward(system, htilde, v_star, probe, fault);

  const Eigen::MatrixXd lap = Eigen::MatrixXd(system.laplacian().matrix);
  const Eigen::MatrixXd ltl = lap.transpose() * lap;
  const Eigen::MatrixXd rhs_const = ltl * mesh.vertices;
  const Eigen::MatrixXd& a0 = handles.weights;
  auto g = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& h) {
    return probe.cwiseProduct(dense_solve_vertices(ltl, rhs_const, a, h)).sum();
  };

  constexpr double kStep = 1e-5;
  Eigen::MatrixXd fd_h(k, 3);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < 3; ++c) {
      Eigen::MatrixXd hp = htilde, hm = htilde;
      hp(r, c) += kStep;
      hm(r, c) -= kStep;
      fd_h(r, c) = (g(a0, hp) - g(a0, hm)) / (2 * kStep);
    }
  }
  Eigen::MatrixXd fd_a(k, n);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < n; ++c) {
      Eigen::MatrixXd ap = a0, am = a0;
      ap(r, c) += kStep;
      am(r, c) -= kStep;
      fd_a(r, c) = (g(ap, htilde) - g(am, htilde)) / (2 * kStep);
    }
  }

  GradcheckReport report;
  report.seed = seed;
  report.vertex_count = n;
  report.handle_count = k;
  report.max_rel_err_htilde = relative_error(analytic.htilde, fd_h);
  report.max_rel_err_a = relative_error(analytic.a, fd_a);
  report.pass = report.max_rel_err_htilde < kGradcheckTolerance &&
                report.max_rel_err_a < kGradcheckTolerance;
  return report;
}

std::string gradcheck_report_to_json(const GradcheckReport& report) {
  nlohmann::json j;
  j["seed"] = report.seed;
  j["vertex_count"] = report.vertex_count;
  j["handle_count"] = report.handle_count;
  j["max_rel_err_htilde"] = report.max_rel_err_htilde;
  j["max_rel_err_a"] = report.max_rel_err_a;
  j["pass"] = report.pass;
  return j.dump();
}

}  // namespace handlefit
