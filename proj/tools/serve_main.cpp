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

#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "handlefit/error.hpp"
#include "handlefit/service.hpp"
#include "http_routes.hpp"

namespace {

httplib::Server* g_server = nullptr;

void stop(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serve handle-driven deformations of one mesh over HTTP"};
  std::string mesh, handles, bind = "127.0.0.1", origin = "*";
  int port = 7878;
  bool no_cors = false;
  app.add_option("--mesh", mesh, "Template OBJ")->required()->check(CLI::ExistingFile);
  app.add_option("--handles", handles, "Handle-map JSON")->required()->check(CLI::ExistingFile);
  app.add_option("--port", port, "Port; 0 picks a free one")->check(CLI::Range(0, 65535));
  app.add_option("--bind", bind, "Address to bind");
  app.add_option("--cors-origin", origin, "Access-Control-Allow-Origin value");
  app.add_flag("--no-cors", no_cors, "Do not send CORS headers");
  CLI11_PARSE(app, argc, argv);

  try {
    const handlefit::DeformService service = handlefit::DeformService::load(mesh, handles);
    httplib::Server server;
    handlefit::tools::register_routes(server, service, {!no_cors, origin});
    g_server = &server;
    std::signal(SIGINT, stop);
    std::signal(SIGTERM, stop);
    const int bound = port == 0 ? server.bind_to_any_port(bind) : port;
    if (port != 0 && !server.bind_to_port(bind, port)) {
      std::cerr << "error: cannot bind " << bind << ":" << port << "\n";
      return 1;
    }
    if (bound < 0) {
      std::cerr << "error: cannot bind " << bind << "\n";
      return 1;
    }
    std::cout << "listening on http://" << bind << ":" << bound << " (N="
              << service.system().vertex_count() << ", K=" << service.system().handle_count()
              << ")" << std::endl;
    server.listen_after_bind();
  } catch (const handlefit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
