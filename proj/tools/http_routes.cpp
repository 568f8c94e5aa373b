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

#include "http_routes.hpp"

namespace handlefit::tools {

void register_routes(httplib::Server& server, const DeformService& service,
                     const HttpOptions& options) {
  constexpr const char* kJson = "application/json";
  if (options.cors) {
    server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });
  }
  server.Get("/mesh", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(service.mesh_json(), kJson);
  });
  server.Get("/handles", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(service.handles_json(), kJson);
  });
  server.Post("/deform", [&service](const httplib::Request& req, httplib::Response& res) {
    const ServiceResponse out = service.deform(req.body);
    res.status = out.status;
    res.set_content(out.body, kJson);
  });
}

}  // namespace handlefit::tools
