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

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace handlefit {

/// Weak-perspective camera p = s * [R(q/|q|) x]_xy + t. Quaternion order is
/// (w, x, y, z). The camera looks down +z after rotation, so a smaller rotated
/// z is nearer.
struct WeakPerspectiveCamera {
  double scale = 1.0;
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);

  /// Rotation matrix of the normalized quaternion.
  Eigen::Matrix3d rotation_matrix() const;
};

/// Throws kInvalidArgument unless s > 0, |q| > 1e-9 and all fields are finite.
void validate_camera(const WeakPerspectiveCamera& cam);

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q);
/// Hamilton product a * b, (w, x, y, z) order.
Eigen::Vector4d quaternion_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b);
/// Rotation about the world vertical axis (+y) by `radians`.
Eigen::Vector4d azimuth_quaternion(double radians);

Eigen::MatrixX2d project(const WeakPerspectiveCamera& cam, const Eigen::MatrixX3d& points);

struct ProjectionWithDepth {
  Eigen::MatrixX2d image;
  Eigen::VectorXd depth;
};
ProjectionWithDepth project_with_depth(const WeakPerspectiveCamera& cam,
                                       const Eigen::MatrixX3d& points);

/// Per-point derivatives of `project`. d/dt is the 2x2 identity for every
/// point and is not stored.
struct ProjectionJacobians {
  Eigen::MatrixX2d d_scale;                       // M x 2
  std::vector<Eigen::Matrix<double, 2, 4>> d_rotation;  // M blocks, through q/|q|
  std::vector<Eigen::Matrix<double, 2, 3>> d_point;     // M blocks
  static Eigen::Matrix2d d_translation() { return Eigen::Matrix2d::Identity(); }
};
ProjectionJacobians projection_jacobians(const WeakPerspectiveCamera& cam,
                                         const Eigen::MatrixX3d& points);

/// Gradient of a scalar with respect to the camera parameters.
struct CameraGradient {
  double scale = 0.0;
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();

  CameraGradient& operator+=(const CameraGradient& other);
  CameraGradient operator*(double factor) const;
};

/// Chains dL/dp (M x 2, one row per projected point) back to the 3D points
/// and the camera parameters.
struct BackprojectedGradient {
  Eigen::MatrixX3d points;
  CameraGradient camera;
};
BackprojectedGradient backproject_gradient(const WeakPerspectiveCamera& cam,
                                           const Eigen::MatrixX3d& points,
                                           const Eigen::MatrixX2d& grad_image);

struct CameraHypothesis {
  WeakPerspectiveCamera camera;
  double azimuth = 0.0;  // radians, initial azimuth for reporting
  double last_loss = 0.0;
};

/// Camera hypotheses sharing one set of handle offsets.
struct CameraMultiplex {
  std::vector<CameraHypothesis> hypotheses;
  Eigen::MatrixX3d handle_offsets;
  std::vector<double> probabilities;
};

/// n_c cameras with azimuths 2*pi*i/n_c about the vertical axis, zero
/// elevation, scale `template_depth_scale`, t = 0, zero offsets for
/// `handle_count` handles and uniform probabilities.
CameraMultiplex init_multiplex(int count, double template_depth_scale, int handle_count = 0);

/// Softmin p_i = exp(-L_i) / sum_j exp(-L_j), shifted by the minimum loss.
std::vector<double> multiplex_probabilities(std::span<const double> losses);

std::string camera_to_json(const WeakPerspectiveCamera& cam);
WeakPerspectiveCamera camera_from_json(std::string_view text);
WeakPerspectiveCamera load_camera(const std::filesystem::path& path);
void save_camera(const WeakPerspectiveCamera& cam, const std::filesystem::path& path);

}  // namespace handlefit
