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

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "handlefit/camera.hpp"
#include "handlefit/deform.hpp"
#include "handlefit/observations.hpp"

namespace handlefit {

struct LossWeights {
  double motion = 1.0;
  double kp = 1.0;
  double rigid = 0.5;
  double boundary = 1.0;
};

/// Throws kInvalidArgument unless every weight is finite and >= 0.
void validate_weights(const LossWeights& weights);
LossWeights loss_weights_from_json(std::string_view text);
std::string loss_weights_to_json(const LossWeights& weights);

/// A single-frame term: value plus gradients w.r.t. the vertices (N x 3) and
/// the camera.
struct TermResult {
  double value = 0.0;
  Eigen::MatrixX3d grad_vertices;
  CameraGradient grad_camera;
};

struct MotionResult {
  double value = 0.0;
  Eigen::MatrixX3d grad_vertices_t;
  Eigen::MatrixX3d grad_vertices_t1;
  CameraGradient grad_camera_t;
  CameraGradient grad_camera_t1;
  int eligible = 0;
  /// Set when no vertex was eligible; value and gradients are then zero.
  bool no_eligible = false;
};

/// Mean l1 mismatch between sampled flow and mesh-induced displacement over
/// vertices with gamma_i = 1. gamma is held fixed.
MotionResult motion_loss(const Eigen::MatrixX3d& vertices_t, const Eigen::MatrixX3d& vertices_t1,
                         const WeakPerspectiveCamera& cam_t,
                         const WeakPerspectiveCamera& cam_t1, const FlowField& flow,
                         const std::vector<std::uint8_t>& gamma);

/// Computes gamma from z-buffer visibility in both frames (at the frame-t
/// mask resolution) and the frame-t mask, then evaluates the loss. Throws
/// kMissingFlow when obs_t has no forward flow.
MotionResult motion_loss(const Eigen::MatrixX3d& vertices_t, const Eigen::MatrixX3d& vertices_t1,
                         const Eigen::MatrixX3i& faces, const WeakPerspectiveCamera& cam_t,
                         const WeakPerspectiveCamera& cam_t1, const FrameObservation& obs_t);

/// Sum over visible keypoints of |k_j - pi(K_j V)|_1. Throws kMissingRegressor.
TermResult keypoint_loss(const Eigen::MatrixX3d& vertices, const WeakPerspectiveCamera& cam,
                         const KeypointSet& keypoints);

/// Mean over vertices with a nonempty neighbourhood of the mean absolute
/// change in distance to each neighbour, relative to the template.
TermResult rigidity_loss(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3d& template_vertices,
                         const std::vector<std::vector<int>>& neighborhoods);

struct BoundaryResult : TermResult {
  double inner = 0.0;  // mean distance-transform value at projected vertices
  double outer = 0.0;  // mean squared distance from boundary pixels to nearest projection
};

/// inner + outer. Throws kEmptyMask.
BoundaryResult boundary_loss(const Eigen::MatrixX3d& vertices, const WeakPerspectiveCamera& cam,
                             const FrameObservation& obs);

/// Reference evaluation of the outer boundary term by an explicit double loop.
double boundary_outer_bruteforce(const Eigen::MatrixX2d& projected,
                                 const std::vector<Eigen::Vector2d>& boundary);

struct FrameParameters {
  Eigen::MatrixX3d offsets;  // K x 3
  WeakPerspectiveCamera camera;
};

struct FrameGradient {
  Eigen::MatrixX3d offsets;
  CameraGradient camera;
};

struct FrameTerms {
  /// Motion from this frame to the next; absent on the last frame.
  bool has_motion = false;
  bool has_kp = false;
  bool has_rigid = false;
  bool has_boundary = false;
  bool motion_no_eligible = false;
  double motion = 0.0;
  double kp = 0.0;
  double rigid = 0.0;
  double boundary = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  /// Unweighted term sums over frames.
  double motion = 0.0;
  double kp = 0.0;
  double rigid = 0.0;
  double boundary = 0.0;
  std::vector<FrameTerms> frames;
  std::vector<FrameGradient> gradients;
};

/// Shared, per-sequence data the loss evaluation reads.
struct LossContext {
  const DeformSystem* system = nullptr;
  const std::vector<FrameObservation>* observations = nullptr;
  /// 2-ring neighbourhoods of the template.
  std::vector<std::vector<int>> neighborhoods;
  /// Worker threads for per-frame evaluation; results do not depend on it.
  int threads = 1;

  static LossContext create(const DeformSystem& system,
                            const std::vector<FrameObservation>& observations, int threads = 1);
};

/// Weighted sum of all available terms over the sequence; gradients are
/// accumulated per frame block and chained to the offsets through D^T.
/// Terms whose inputs are absent contribute 0 and are flagged. Terms with zero
/// weight are reported but contribute no gradient.
LossBreakdown total_loss(const LossContext& context, const std::vector<FrameParameters>& frames,
                         const LossWeights& weights);

}  // namespace handlefit
