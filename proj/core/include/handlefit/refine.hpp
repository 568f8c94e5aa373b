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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "handlefit/camera.hpp"
#include "handlefit/deform.hpp"
#include "handlefit/losses.hpp"
#include "handlefit/observations.hpp"

namespace handlefit {

/// Frames of one sequence sharing a template and handle map.
struct SequenceState {
  std::shared_ptr<const DeformSystem> system;
  std::vector<int> frame_ids;
  std::vector<FrameObservation> observations;
  std::vector<FrameParameters> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

/// Validates sizes and per-frame parameters; throws on the first problem.
void validate_sequence(const SequenceState& seq);

struct LearningRates {
  double handles = 1e-2;  // multiplied by the template bbox diagonal
  double scale = 1e-2;
  double translation = 1e-1;
  double rotation = 1e-2;
};

struct PruneStep {
  double at = 1.0;  // fraction of the iteration budget
  int keep = 1;
};

struct RefineConfig {
  int iterations = 1000;
  LearningRates lr;
  LossWeights weights;
  /// Camera hypotheses per sequence; 1 disables the multiplex.
  int multiplex = 1;
  std::vector<PruneStep> prune = {{0.25, 4}, {0.6, 2}, {1.0, 1}};
  /// Stop once the relative change of the tracked loss stays below this for
  /// kConvergencePatience iterations; 0 disables the test.
  double tolerance = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;
  double handle_weight = 1.0;
  /// Initial camera scale used by the CLI when no camera file is given;
  /// derived from the mask extent when unset.
  std::optional<double> init_scale;
  bool record_timing = false;
};

inline constexpr int kConvergencePatience = 10;
inline constexpr double kMinCameraScale = 1e-4;

void validate_config(const RefineConfig& config);
RefineConfig refine_config_from_json(std::string_view text);
std::string refine_config_to_json(const RefineConfig& config);

struct HypothesisReport {
  int index = 0;
  double azimuth = 0.0;  // radians, initial azimuth offset
  double probability = 0.0;
  double loss = 0.0;
  /// Iteration at which it was pruned; -1 if it survived.
  int pruned_at = -1;
};

enum class TermStatus { kPresent, kDisabled, kAbsent };
std::string_view to_string(TermStatus status);

struct RefineReport {
  int iterations_run = 0;
  bool converged = false;
  double initial_total = 0.0;
  double final_total = 0.0;
  int best_iteration = 0;
  /// Tracked objective (minimum over live hypotheses) before each step.
  std::vector<double> trace;
  LossBreakdown initial;
  LossBreakdown final_breakdown;
  TermStatus motion = TermStatus::kAbsent;
  TermStatus kp = TermStatus::kAbsent;
  TermStatus rigid = TermStatus::kAbsent;
  TermStatus boundary = TermStatus::kAbsent;
  std::vector<HypothesisReport> hypotheses;
  int chosen_hypothesis = 0;
  std::optional<double> wall_clock_seconds;
};

struct RefineResult {
  SequenceState state;
  RefineReport report;
};

/// Adam on every frame's (offsets, s, t, q) against total_loss. With a
/// multiplex, each hypothesis carries its own per-frame cameras (the initial
/// cameras rotated by 2*pi*i/n about the vertical axis) while offsets are
/// shared and receive the probability-weighted gradient. Returns the best
/// iterate by tracked loss under its most probable hypothesis.
RefineResult refine(const SequenceState& seq, const RefineConfig& config);

/// refine() on a single frame with the motion term disabled.
RefineResult refine_single_image(const SequenceState& frame, const RefineConfig& config);

std::string refine_report_to_json(const RefineReport& report, const std::vector<int>& frame_ids,
                                  const std::vector<FrameParameters>& frames);

struct PcaResult {
  Eigen::MatrixX3d mean;
  std::vector<Eigen::MatrixX3d> modes;  // unit norm when flattened
  std::vector<double> variances;        // descending, 1/n normalization
};

/// Principal modes of flattened K x 3 deformations. Mode signs are fixed so
/// the largest-magnitude component is positive.
PcaResult pca_deformations(std::span<const Eigen::MatrixX3d> samples, int modes);
std::string pca_to_json(const PcaResult& pca);

/// {"offsets": [[x, y, z], ...]}
std::string offsets_to_json(const Eigen::MatrixX3d& offsets);
Eigen::MatrixX3d offsets_from_json(std::string_view text);
Eigen::MatrixX3d load_offsets(const std::filesystem::path& path);
void save_offsets(const Eigen::MatrixX3d& offsets, const std::filesystem::path& path);

}  // namespace handlefit
