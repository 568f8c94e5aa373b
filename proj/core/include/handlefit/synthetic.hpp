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
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "handlefit/camera.hpp"
#include "handlefit/deform.hpp"
#include "handlefit/losses.hpp"
#include "handlefit/mesh.hpp"
#include "handlefit/observations.hpp"
#include "handlefit/refine.hpp"

// Procedural meshes and rendered supervision with known ground truth, used by
// tests, benchmarks and the `synth` command.

namespace handlefit {

/// Regular tetrahedron inscribed in the unit sphere.
TriMesh tetrahedron();

/// Unit icosphere: 0 -> 12, 1 -> 42, 2 -> 162, 3 -> 642 vertices.
TriMesh icosphere(int subdivisions);

/// Pixels whose centres are covered by at least one projected triangle.
Mask rasterize_silhouette(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3i& faces,
                          const WeakPerspectiveCamera& cam, int width, int height);

/// Forward flow from frame t to t+1 rendered through the visible surface
/// point of each covered pixel; uncovered pixels are marked invalid.
FlowField render_flow(const Eigen::MatrixX3d& vertices_t, const Eigen::MatrixX3d& vertices_t1,
                      const Eigen::MatrixX3i& faces, const WeakPerspectiveCamera& cam_t,
                      const WeakPerspectiveCamera& cam_t1, int width, int height);

struct SyntheticOptions {
  int subdivisions = 2;
  int handles = 8;
  int frames = 3;
  int width = 128;
  int height = 128;
  /// Upper bound on every handle offset norm, as a fraction of the bbox diagonal.
  double max_offset_fraction = 0.1;
  double base_azimuth_deg = 0.0;
  double camera_step_deg = 15.0;
  double elevation_deg = 10.0;
  /// Projected template radius as a fraction of the image width.
  double fill = 0.3;
  int keypoints = 12;
  bool with_flow = true;
  bool with_keypoints = true;
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  SyntheticOptions options;
  TriMesh templ;
  HandleMap handles;
  std::shared_ptr<const DeformSystem> system;
  std::vector<FrameParameters> truth;
  std::vector<FrameObservation> observations;
};

SyntheticScene make_synthetic_scene(const SyntheticOptions& options);

/// The rigid camera rotated by `degrees` about the vertical axis.
WeakPerspectiveCamera perturb_azimuth(const WeakPerspectiveCamera& cam, double degrees);

/// Sequence starting from zero offsets and the given cameras.
SequenceState initial_sequence(const SyntheticScene& scene,
                               const std::vector<WeakPerspectiveCamera>& cameras);

/// Writes mesh.obj, handles.json and frames/frame_%06d.{pgm,flo,json}; when
/// `cameras` is non-empty also frame_%06d.camera.json.
void write_project(const SyntheticScene& scene, const std::filesystem::path& dir,
                   const std::vector<WeakPerspectiveCamera>& cameras = {});

/// Mean Euclidean distance in pixels between the observed visible keypoints
/// and their regressed projections.
double mean_keypoint_error(const Eigen::MatrixX3d& vertices, const WeakPerspectiveCamera& cam,
                           const KeypointSet& keypoints);

/// Geodesic angle in radians between the rotations of two cameras.
double rotation_angle_between(const WeakPerspectiveCamera& a, const WeakPerspectiveCamera& b);

}  // namespace handlefit
