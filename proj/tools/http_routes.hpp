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

// Eigen (via service.hpp) must come before httplib: <resolv.h>, pulled in by
// httplib, defines a `_res` macro that collides with Eigen parameter names.
#include "handlefit/service.hpp"

#include <httplib.h>

namespace handlefit::tools {

struct HttpOptions {
  bool cors = true;
  std::string cors_origin = "*";
};

/// GET /mesh, GET /handles, POST /deform (and CORS preflight) backed by
/// `service`, which must outlive the server.
void register_routes(httplib::Server& server, const DeformService& service,
                     const HttpOptions& options = {});

}  // namespace handlefit::tools
