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

#include <stdexcept>
#include <string>
#include <string_view>

namespace handlefit {

enum class ErrorKind {
  kIo,
  kParse,
  kUnsupportedFormat,
  kIndexOutOfRange,
  kDisconnectedMesh,
  kDegenerateFace,
  kInvalidArgument,
  kDuplicateSeed,
  kNotPositiveDefinite,
  kSingularMatrix,
  kDimensionMismatch,
  kBadMagic,
  kTruncatedFile,
  kEmptyMask,
  kOutOfBounds,
  kZeroResolution,
  kMissingFlow,
  kMissingRegressor,
  kNonFiniteLoss,
  kInsufficientSamples,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this exception; `kind()` lets
// callers (CLI exit codes, HTTP status mapping, tests) branch without parsing
// the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace handlefit
