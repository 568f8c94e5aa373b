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
#include <memory>
#include <string>
#include <string_view>

#include "handlefit/deform.hpp"

namespace handlefit {

struct ServiceResponse {
  int status = 200;
  std::string body;  // JSON
};

// Request handling for the deformation service, independent of the HTTP
// transport. Holds one immutable DeformSystem; every method is const and safe
// to call concurrently.
class DeformService {
 public:
  explicit DeformService(std::shared_ptr<const DeformSystem> system);
  static DeformService load(const std::filesystem::path& mesh_path,
                            const std::filesystem::path& handles_path);

  const DeformSystem& system() const { return *system_; }

  /// {"vertices": [[x,y,z]], "faces": [[i,j,k]]}
  const std::string& mesh_json() const { return mesh_json_; }
  /// {"k": K, "seeds": [...], "template_positions": [[x,y,z]]}
  const std::string& handles_json() const { return handles_json_; }
  /// Body {"offsets": [[x,y,z]; K]} -> {"vertices": [[x,y,z]; N]}. 400 on a
  /// malformed body or wrong K, 422 on non-finite values.
  ServiceResponse deform(std::string_view body) const;

 private:
  std::shared_ptr<const DeformSystem> system_;
  std::string mesh_json_;
  std::string handles_json_;
};

}  // namespace handlefit
