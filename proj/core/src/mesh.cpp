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

#include "handlefit/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "file_util.hpp"
#include "handlefit/error.hpp"

namespace handlefit {
namespace {

using json = nlohmann::json;

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

double parse_double(std::string_view token, int line_no) {
  std::string s(token);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty() || !std::isfinite(v)) {
    throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) +
                                       ": bad coordinate '" + s + "'");
  }
  return v;
}

long parse_index(std::string_view token, int line_no) {
  std::string s(token);
  char* end = nullptr;
  errno = 0;
  long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || s.empty() || errno == ERANGE) {
    throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) +
                                       ": bad face index '" + s + "'");
  }
  return v;
}

// Union-find over the face edge graph.
int count_components(int n, const Eigen::MatrixX3i& faces) {
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  int components = n;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int c = 0; c < 3; ++c) {
      int a = find(faces(f, c));
      int b = find(faces(f, (c + 1) % 3));
      if (a != b) {
        parent[std::max(a, b)] = std::min(a, b);
        --components;
      }
    }
  }
  return components;
}

}  // namespace

double TriMesh::bbox_diagonal() const {
  if (vertices.rows() == 0) return 0.0;
  Eigen::RowVector3d lo = vertices.colwise().minCoeff();
  Eigen::RowVector3d hi = vertices.colwise().maxCoeff();
  return (hi - lo).norm();
}

void validate_mesh(const TriMesh& mesh) {
  const int n = mesh.vertex_count();
  if (n < 3) throw Error(ErrorKind::kInvalidArgument, "mesh needs at least 3 vertices");
  if (mesh.face_count() < 1) throw Error(ErrorKind::kInvalidArgument, "mesh has no faces");
  if (!mesh.vertices.allFinite()) throw Error(ErrorKind::kInvalidArgument, "non-finite vertex");
  for (int f = 0; f < mesh.face_count(); ++f) {
    for (int c = 0; c < 3; ++c) {
      int v = mesh.faces(f, c);
      if (v < 0 || v >= n) {
        throw Error(ErrorKind::kIndexOutOfRange,
                    "face " + std::to_string(f) + " references vertex " +
                        std::to_string(v) + " of " + std::to_string(n));
      }
    }
    if (mesh.faces(f, 0) == mesh.faces(f, 1) || mesh.faces(f, 1) == mesh.faces(f, 2) ||
        mesh.faces(f, 0) == mesh.faces(f, 2)) {
      throw Error(ErrorKind::kParse, "face " + std::to_string(f) + " repeats a vertex");
    }
  }
  if (count_components(n, mesh.faces) != 1) {
    throw Error(ErrorKind::kDisconnectedMesh, "mesh edge graph is not connected");
  }
}

TriMesh parse_obj(std::istream& in) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0] == "v") {
      if (tokens.size() != 4) {
        throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) +
                                           ": vertex needs exactly 3 coordinates");
      }
      verts.emplace_back(parse_double(tokens[1], line_no), parse_double(tokens[2], line_no),
                         parse_double(tokens[3], line_no));
    } else if (tokens[0] == "f") {
      if (tokens.size() != 4) {
        throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) +
                                           ": only triangle faces are supported");
      }
      Eigen::Vector3i face;
      for (int c = 0; c < 3; ++c) {
        long idx = parse_index(tokens[c + 1], line_no);
        if (idx < 1 || idx > std::numeric_limits<int>::max()) {
          throw Error(ErrorKind::kIndexOutOfRange,
                      "line " + std::to_string(line_no) + ": face index " +
                          std::to_string(idx));
        }
        face[c] = static_cast<int>(idx - 1);
      }
      faces.push_back(face);
    } else {
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) +
                                         ": unsupported record '" +
                                         std::string(tokens[0]) + "'");
    }
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t i = 0; i < faces.size(); ++i) mesh.faces.row(i) = faces[i].transpose();
  validate_mesh(mesh);
  return mesh;
}

TriMesh load_obj(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  return parse_obj(in);
}

std::string format_obj(const TriMesh& mesh) {
  std::string out;
  char buf[128];
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", mesh.vertices(i, 0),
                  mesh.vertices(i, 1), mesh.vertices(i, 2));
    out += buf;
  }
  for (int f = 0; f < mesh.face_count(); ++f) {
    std::snprintf(buf, sizeof(buf), "f %d %d %d\n", mesh.faces(f, 0) + 1,
                  mesh.faces(f, 1) + 1, mesh.faces(f, 2) + 1);
    out += buf;
  }
  return out;
}

void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  detail::write_file(path, format_obj(mesh));
}

std::vector<Eigen::Triplet<double>> SparseLaplacian::triplets() const {
  std::vector<Eigen::Triplet<double>> out;
  out.reserve(static_cast<size_t>(matrix.nonZeros()));
  for (int r = 0; r < matrix.outerSize(); ++r) {
    for (decltype(matrix)::InnerIterator it(matrix, r); it; ++it) {
      out.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  return out;
}

SparseLaplacian cotangent_laplacian(const TriMesh& mesh) {
  const int n = mesh.vertex_count();
  const double diag = mesh.bbox_diagonal();
  const double min_area = 1e-12 * diag * diag;

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<size_t>(mesh.face_count()) * 6);
  for (int f = 0; f < mesh.face_count(); ++f) {
    const int idx[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    Eigen::Vector3d p[3];
    for (int c = 0; c < 3; ++c) p[c] = mesh.vertices.row(idx[c]).transpose();
    const double area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
    if (!(area >= min_area)) {
      throw Error(ErrorKind::kDegenerateFace, "face " + std::to_string(f) + " has area " +
                                                 std::to_string(area));
    }
    for (int c = 0; c < 3; ++c) {
      // Angle at corner c is opposite edge (c+1, c+2).
      const Eigen::Vector3d e1 = p[(c + 1) % 3] - p[c];
      const Eigen::Vector3d e2 = p[(c + 2) % 3] - p[c];
      double cot = e1.dot(e2) / e1.cross(e2).norm();
      cot = std::clamp(cot, -kCotangentClamp, kCotangentClamp);
      const int a = idx[(c + 1) % 3];
      const int b = idx[(c + 2) % 3];
      entries.emplace_back(a, b, -0.5 * cot);
      entries.emplace_back(b, a, -0.5 * cot);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> off(n, n);
  off.setFromTriplets(entries.begin(), entries.end());

  std::vector<Eigen::Triplet<double>> all;
  all.reserve(static_cast<size_t>(off.nonZeros()) + static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    double sum = 0.0;
    for (decltype(off)::InnerIterator it(off, r); it; ++it) {
      all.emplace_back(r, static_cast<int>(it.col()), it.value());
      sum -= it.value();
    }
    all.emplace_back(r, r, sum);
  }
  SparseLaplacian lap;
  lap.matrix.resize(n, n);
  lap.matrix.setFromTriplets(all.begin(), all.end());
  lap.matrix.makeCompressed();
  return lap;
}

std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh) {
  std::vector<std::vector<int>> adj(static_cast<size_t>(mesh.vertex_count()));
  for (int f = 0; f < mesh.face_count(); ++f) {
    for (int c = 0; c < 3; ++c) {
      int a = mesh.faces(f, c);
      int b = mesh.faces(f, (c + 1) % 3);
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

std::vector<std::vector<int>> two_ring_neighborhoods(const TriMesh& mesh) {
  const auto ring1 = vertex_neighbors(mesh);
  std::vector<std::vector<int>> out(ring1.size());
  for (size_t v = 0; v < ring1.size(); ++v) {
    std::set<int> acc;
    for (int u : ring1[v]) {
      acc.insert(u);
      for (int w : ring1[u]) acc.insert(w);
    }
    acc.erase(static_cast<int>(v));
    out[v].assign(acc.begin(), acc.end());
  }
  return out;
}

std::vector<double> geodesic_distances(const TriMesh& mesh, int source) {
  const int n = mesh.vertex_count();
  if (source < 0 || source >= n) {
    throw Error(ErrorKind::kIndexOutOfRange, "geodesic source " + std::to_string(source));
  }
  const auto adj = vertex_neighbors(mesh);
  std::vector<double> dist(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (int u : adj[v]) {
      const double nd = d + (mesh.vertices.row(v) - mesh.vertices.row(u)).norm();
      if (nd < dist[u]) {
        dist[u] = nd;
        queue.emplace(nd, u);
      }
    }
  }
  return dist;
}

std::vector<int> farthest_point_sample(const TriMesh& mesh, int count) {
  const int n = mesh.vertex_count();
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "empty mesh");
  const Eigen::RowVector3d centroid = mesh.vertices.colwise().mean();
  int first = 0;
  double best = -1.0;
  for (int v = 0; v < n; ++v) {
    const double d = (mesh.vertices.row(v) - centroid).squaredNorm();
    if (d > best) {
      best = d;
      first = v;
    }
  }
  return farthest_point_sample(mesh, count, first);
}

std::vector<int> farthest_point_sample(const TriMesh& mesh, int count, int first_seed) {
  const int n = mesh.vertex_count();
  if (count < 1 || count > n) {
    throw Error(ErrorKind::kInvalidArgument,
                "sample count " + std::to_string(count) + " not in [1, " + std::to_string(n) + "]");
  }
  if (first_seed < 0 || first_seed >= n) {
    throw Error(ErrorKind::kIndexOutOfRange, "first seed " + std::to_string(first_seed));
  }
  std::vector<int> seeds{first_seed};
  std::vector<char> chosen(static_cast<size_t>(n), 0);
  chosen[first_seed] = 1;
  std::vector<double> min_dist = geodesic_distances(mesh, first_seed);
  while (static_cast<int>(seeds.size()) < count) {
    int next = -1;
    double best = -1.0;
    for (int v = 0; v < n; ++v) {
      if (!chosen[v] && min_dist[v] > best) {
        best = min_dist[v];
        next = v;
      }
    }
    seeds.push_back(next);
    chosen[next] = 1;
    const auto d = geodesic_distances(mesh, next);
    for (int v = 0; v < n; ++v) min_dist[v] = std::min(min_dist[v], d[v]);
  }
  return seeds;
}

void validate_handle_map(const HandleMap& handles, int vertex_count) {
  const int k = handles.handle_count();
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "handle map has no rows");
  if (handles.vertex_count() != vertex_count) {
    throw Error(ErrorKind::kDimensionMismatch,
                "handle map has " + std::to_string(handles.vertex_count()) +
                    " columns, mesh has " + std::to_string(vertex_count) + " vertices");
  }
  if (static_cast<int>(handles.seeds.size()) != k) {
    throw Error(ErrorKind::kDimensionMismatch, "seed count differs from handle count");
  }
  for (int s : handles.seeds) {
    if (s < 0 || s >= vertex_count) {
      throw Error(ErrorKind::kIndexOutOfRange, "seed " + std::to_string(s));
    }
  }
  if (!handles.weights.allFinite() || (handles.weights.array() < 0.0).any()) {
    throw Error(ErrorKind::kInvalidArgument, "handle weights must be finite and nonnegative");
  }
  for (int r = 0; r < k; ++r) {
    const double sum = handles.weights.row(r).sum();
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw Error(ErrorKind::kInvalidArgument,
                  "handle row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
  }
}

Eigen::VectorXd handle_row_logits(std::span<const double> distances) {
  Eigen::VectorXd logits(static_cast<Eigen::Index>(distances.size()));
  for (size_t i = 0; i < distances.size(); ++i) {
    logits[static_cast<Eigen::Index>(i)] = 1.0 / std::max(distances[i], kGeodesicFloor);
  }
  if (logits.size() > 0) logits.array() -= logits.maxCoeff();
  return logits;
}

HandleMap build_handle_map(const TriMesh& mesh, std::span<const int> seeds) {
  const int n = mesh.vertex_count();
  std::set<int> seen;
  for (int s : seeds) {
    if (s < 0 || s >= n) throw Error(ErrorKind::kIndexOutOfRange, "seed " + std::to_string(s));
    if (!seen.insert(s).second) {
      throw Error(ErrorKind::kDuplicateSeed, "seed " + std::to_string(s) + " repeated");
    }
  }
  HandleMap out;
  out.seeds.assign(seeds.begin(), seeds.end());
  out.weights.resize(static_cast<Eigen::Index>(seeds.size()), n);
  for (size_t k = 0; k < seeds.size(); ++k) {
    const auto dist = geodesic_distances(mesh, seeds[k]);
    // Scalar exp: Eigen's packet exp clamps near -709 and returns subnormals
    // where the true value underflows to zero.
    Eigen::VectorXd w = handle_row_logits(dist).unaryExpr([](double x) { return std::exp(x); });
    out.weights.row(static_cast<Eigen::Index>(k)) = (w / w.sum()).transpose();
  }
  return out;
}

std::string handle_map_to_json(const HandleMap& handles) {
  json j;
  j["k"] = handles.handle_count();
  j["seeds"] = handles.seeds;
  json rows = json::array();
  for (int r = 0; r < handles.handle_count(); ++r) {
    std::vector<double> row(handles.weights.cols());
    for (Eigen::Index c = 0; c < handles.weights.cols(); ++c) row[c] = handles.weights(r, c);
    rows.push_back(row);
  }
  j["rows"] = std::move(rows);
  return j.dump();
}

HandleMap handle_map_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    HandleMap out;
    const int k = j.at("k").get<int>();
    out.seeds = j.at("seeds").get<std::vector<int>>();
    const auto& rows = j.at("rows");
    if (!rows.is_array() || static_cast<int>(rows.size()) != k || k < 1) {
      throw Error(ErrorKind::kParse, "handle map 'rows' must hold k rows");
    }
    const auto n = static_cast<Eigen::Index>(rows[0].size());
    out.weights.resize(k, n);
    for (int r = 0; r < k; ++r) {
      const auto row = rows[r].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != n) {
        throw Error(ErrorKind::kParse, "handle map rows have unequal length");
      }
      for (Eigen::Index c = 0; c < n; ++c) out.weights(r, c) = row[c];
    }
    if (static_cast<int>(out.seeds.size()) != k) {
      throw Error(ErrorKind::kParse, "handle map 'seeds' must hold k entries");
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("handle map json: ") + e.what());
  }
}

HandleMap load_handle_map(const std::filesystem::path& path) {
  return handle_map_from_json(detail::read_file(path));
}

void save_handle_map(const HandleMap& handles, const std::filesystem::path& path) {
  detail::write_file(path, handle_map_to_json(handles));
}

}  // namespace handlefit
