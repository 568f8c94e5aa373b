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

#include "handlefit/service.hpp"

#include <cmath>

#include <json.hpp>

#include "handlefit/error.hpp"
#include "handlefit/mesh.hpp"

namespace handlefit {
namespace {

using json = nlohmann::json;

json rows_json(const Eigen::MatrixX3d& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

ServiceResponse error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

}  // namespace

DeformService::DeformService(std::shared_ptr<const DeformSystem> system)
    : system_(std::move(system)) {
  if (!system_) throw Error(ErrorKind::kInvalidArgument, "service needs a deformation system");
  const TriMesh& t = system_->template_mesh();
  json mesh;
  mesh["vertices"] = rows_json(t.vertices);
  json faces = json::array();
  for (Eigen::Index f = 0; f < t.faces.rows(); ++f) {
    faces.push_back({t.faces(f, 0), t.faces(f, 1), t.faces(f, 2)});
  }
  mesh["faces"] = faces;
  mesh_json_ = mesh.dump();

  json handles;
  handles["k"] = system_->handle_count();
  handles["seeds"] = system_->handles().seeds;
  handles["template_positions"] = rows_json(system_->template_handles());
  handles_json_ = handles.dump();
}

DeformService DeformService::load(const std::filesystem::path& mesh_path,
                                  const std::filesystem::path& handles_path) {
  const TriMesh mesh = load_obj(mesh_path);
  const HandleMap handles = load_handle_map(handles_path);
  return DeformService(std::make_shared<const DeformSystem>(DeformSystem::build(mesh, handles)));
}

ServiceResponse DeformService::deform(std::string_view body) const {
  const int k = system_->handle_count();
  Eigen::MatrixX3d offsets(k, 3);
  try {
    const json j = json::parse(body);
    if (!j.is_object() || !j.contains("offsets") || !j["offsets"].is_array()) {
      return error_response(400, "body must be {\"offsets\": [[x, y, z], ...]}");
    }
    const json& rows = j["offsets"];
    if (static_cast<int>(rows.size()) != k) {
      return error_response(400, "expected " + std::to_string(k) + " offsets, got " +
                                     std::to_string(rows.size()));
    }
    for (int r = 0; r < k; ++r) {
      const json& row = rows[static_cast<size_t>(r)];
      if (!row.is_array() || row.size() != 3) {
        return error_response(400, "offset " + std::to_string(r) + " must have three numbers");
      }
      for (int c = 0; c < 3; ++c) {
        if (!row[static_cast<size_t>(c)].is_number()) {
          return error_response(400, "offset " + std::to_string(r) + " has a non-numeric entry");
        }
        offsets(r, c) = row[static_cast<size_t>(c)].get<double>();
      }
    }
  } catch (const json::out_of_range& e) {
    // 406: a number literal overflows double, i.e. the offset is not finite.
    if (e.id == 406) return error_response(422, "offsets must be finite");
    return error_response(400, std::string("malformed json: ") + e.what());
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed json: ") + e.what());
  }
  if (!offsets.allFinite()) return error_response(422, "offsets must be finite");

  const Eigen::MatrixX3d v = system_->vertices_for_offsets(offsets);
  if (!v.allFinite()) return error_response(422, "deformation is not finite");
  json out;
  out["vertices"] = rows_json(v);
  return {200, out.dump()};
}

}  // namespace handlefit
