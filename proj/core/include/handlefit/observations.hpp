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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "handlefit/camera.hpp"
#include "handlefit/mesh.hpp"

// Per-frame supervision: silhouettes, optical flow and 2D keypoints.
//
// Pixel convention throughout: the origin is the centre of the top-left
// pixel, x grows rightwards and y downwards, so pixel (i, j) is centred at
// the integer point (i, j).

namespace handlefit {

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 1 = foreground

  bool at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x] != 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  int foreground_count() const;
  bool empty() const { return foreground_count() == 0; }
};

/// Pixels at or above this value are foreground.
inline constexpr int kMaskThreshold = 128;

/// Binary (P5) or ASCII (P2) PGM with maxval 255.
Mask parse_pgm(std::string_view bytes);
Mask load_mask(const std::filesystem::path& path);
std::string format_pgm(const Mask& mask);  // P5, foreground written as 255
void save_mask(const Mask& mask, const std::filesystem::path& path);

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major interleaved (u, v)

  Eigen::Vector2d at(int x, int y) const {
    const size_t i = 2 * (static_cast<size_t>(y) * width + x);
    return {data[i], data[i + 1]};
  }
  bool valid(int x, int y) const;
};

inline constexpr float kFloMagic = 202021.25f;
/// Middlebury convention: components above this magnitude mark unknown flow.
inline constexpr double kInvalidFlowThreshold = 1e9;

FlowField parse_flo(std::string_view bytes);
FlowField load_flo(const std::filesystem::path& path);
std::string format_flo(const FlowField& flow);
void save_flo(const FlowField& flow, const std::filesystem::path& path);

struct FlowSample {
  Eigen::Vector2d value;
  /// d value / d p; zero when the nearest-valid fallback was used.
  Eigen::Matrix2d jacobian;
  bool interpolated = true;
};

/// Bilinear flow at image point p. Taps carrying nonzero weight must be in
/// bounds and valid, otherwise the nearest valid pixel is returned. Returns
/// nullopt when the field has no valid pixel. Throws kOutOfBounds when p lies
/// outside [-0.5, w-0.5] x [-0.5, h-0.5].
std::optional<FlowSample> sample_flow(const FlowField& flow, const Eigen::Vector2d& p);

struct Keypoint {
  std::string name;
  double x = 0.0;
  double y = 0.0;
  bool visible = true;
};

struct KeypointSet {
  std::vector<Keypoint> points;
  /// J x N right-stochastic regressor; row j maps mesh vertices to keypoint j.
  std::optional<Eigen::MatrixXd> regressor;
};

/// Validates regressor rows (sum to 1 within 1e-9, nonnegative) and that the
/// regressor has one row per point.
void validate_keypoints(const KeypointSet& keypoints);
KeypointSet keypoints_from_json(std::string_view text);
std::string keypoints_to_json(const KeypointSet& keypoints);
KeypointSet load_keypoints(const std::filesystem::path& path);
void save_keypoints(const KeypointSet& keypoints, const std::filesystem::path& path);

/// Per-pixel Euclidean distance to the nearest foreground pixel centre.
struct DistanceField {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major

  double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
};

/// Exact Euclidean distance transform. Throws kEmptyMask.
DistanceField distance_transform(const Mask& mask);

struct DistanceSample {
  double value = 0.0;
  Eigen::Vector2d gradient = Eigen::Vector2d::Zero();
};
/// Bilinear lookup with clamp-to-border outside the image; the gradient is
/// zero along a clamped axis.
DistanceSample sample_distance(const DistanceField& field, const Eigen::Vector2d& p);

/// Centres of foreground pixels with a 4-neighbour that is background or
/// outside the image, in row-major order.
std::vector<Eigen::Vector2d> boundary_points(const Mask& mask);

struct FrameObservation {
  Mask mask;
  std::optional<KeypointSet> keypoints;
  std::optional<FlowField> flow_to_next;
  /// Empty when the mask has no foreground.
  DistanceField distance;
  std::vector<Eigen::Vector2d> boundary;

  /// Derives the distance transform and boundary set; an empty mask is
  /// accepted and flagged through mask_empty().
  static FrameObservation create(Mask mask, std::optional<KeypointSet> keypoints = std::nullopt,
                                 std::optional<FlowField> flow_to_next = std::nullopt);

  bool mask_empty() const { return distance.values.empty(); }
};

/// Nearest image pixel of a projected point (round half away from zero).
Eigen::Vector2i pixel_of(const Eigen::Vector2d& p);

/// Z-buffer visibility per vertex at a width x height raster. A vertex is
/// visible when its pixel is in bounds and its depth is at most the buffer
/// depth plus tau_fraction * (vertex depth range). No back-face culling.
std::vector<std::uint8_t> vertex_visibility(const Eigen::MatrixX3d& vertices,
                                            const Eigen::MatrixX3i& faces,
                                            const WeakPerspectiveCamera& cam, int width,
                                            int height, double tau_fraction = 1e-3);
std::vector<std::uint8_t> vertex_visibility(const TriMesh& mesh, const WeakPerspectiveCamera& cam,
                                            int width, int height, double tau_fraction = 1e-3);

/// Motion-supervision eligibility: visible in both frames and projecting
/// (in frame t) onto a foreground pixel of the frame-t mask.
std::vector<std::uint8_t> motion_eligibility(const std::vector<std::uint8_t>& visible_t,
                                             const std::vector<std::uint8_t>& visible_t1,
                                             const Eigen::MatrixX2d& projected_t,
                                             const Mask& mask_t);

}  // namespace handlefit
