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

#include <functional>

#include <gtest/gtest.h>

#include "handlefit/error.hpp"

namespace handlefit::testing {

inline ::testing::AssertionResult throws_kind(ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() == kind) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "threw " << to_string(e.kind()) << ": " << e.what();
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "threw non-library exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "did not throw";
}

}  // namespace handlefit::testing

#define EXPECT_ERROR_KIND(kind, stmt) \
  EXPECT_TRUE(::handlefit::testing::throws_kind((kind), [&] { stmt; }))
