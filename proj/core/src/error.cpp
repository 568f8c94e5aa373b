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

#include "handlefit/error.hpp"

namespace handlefit {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kUnsupportedFormat: return "unsupported format";
    case ErrorKind::kIndexOutOfRange: return "index out of range";
    case ErrorKind::kDisconnectedMesh: return "disconnected mesh";
    case ErrorKind::kDegenerateFace: return "degenerate face";
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kDuplicateSeed: return "duplicate seed";
    case ErrorKind::kNotPositiveDefinite: return "not positive definite";
    case ErrorKind::kSingularMatrix: return "singular matrix";
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kBadMagic: return "bad magic";
    case ErrorKind::kTruncatedFile: return "truncated file";
    case ErrorKind::kEmptyMask: return "empty mask";
    case ErrorKind::kOutOfBounds: return "out of bounds";
    case ErrorKind::kZeroResolution: return "zero resolution";
    case ErrorKind::kMissingFlow: return "missing flow";
    case ErrorKind::kMissingRegressor: return "missing regressor";
    case ErrorKind::kNonFiniteLoss: return "non-finite loss";
    case ErrorKind::kInsufficientSamples: return "insufficient samples";
  }
  return "unknown error";
}

}  // namespace handlefit
