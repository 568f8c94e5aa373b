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

#include "handlefit/observations.hpp"

// Randomised finite-difference checks of the analytic gradients. Each trial
// draws a fresh configuration from `seed` and returns the worst relative
// error over every parameter it touches.

namespace handlefit::testing {

inline constexpr double kTrialStep = 1e-6;

double projection_trial(std::uint64_t seed);
double motion_trial(std::uint64_t seed);
double keypoint_trial(std::uint64_t seed);
double rigidity_trial(std::uint64_t seed);
double boundary_trial(std::uint64_t seed);

/// Smooth, everywhere-valid flow used by the motion trials.
FlowField smooth_flow(int width, int height, double phase);

/// Filled disk of the given radius centred in a width x height mask.
Mask disk_mask(int width, int height, double radius);

}  // namespace handlefit::testing
