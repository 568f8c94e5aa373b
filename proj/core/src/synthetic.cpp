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

#include "handlefit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <utility>

#include "handlefit/error.hpp"

namespace handlefit {
namespace {

constexpr double kDegree = std::numbers::pi / 180.0;
constexpr float kInvalidFlow = 1e10f;

// Visits every pixel centre covered by a projected triangle (inclusive edges)
// with the face index and barycentric weights.
template <typename Fn>
void rasterize(const Eigen::MatrixX2d& image, const Eigen::MatrixX3i& faces, int width, int height,
               Fn&& fn) {
  constexpr double kEdgeEps = 1e-9;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const Eigen::Vector2d a = image.row(faces(f, 0)), b = image.row(faces(f, 1)),
                          c = image.row(faces(f, 2));
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}) - kEdgeEps)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}) + kEdgeEps)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}) - kEdgeEps)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}) + kEdgeEps)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Eigen::Vector2d p(x, y);
        const double wa = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
        const double wb = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
        const double wc = 1.0 - wa - wb;
        if (wa < -kEdgeEps || wb < -kEdgeEps || wc < -kEdgeEps) continue;
        fn(x, y, static_cast<int>(f), Eigen::Vector3d(wa, wb, wc));
      }
    }
  }
}

Eigen::Vector4d elevation_quaternion(double radians) {
  return {std::cos(radians / 2), std::sin(radians / 2), 0.0, 0.0};
}

}  // namespace

TriMesh tetrahedron() {
  TriMesh mesh;
  const double s = 1.0 / std::sqrt(3.0);
  mesh.vertices.resize(4, 3);
  mesh.vertices << s, s, s, s, -s, -s, -s, s, -s, -s, -s, s;
  mesh.faces.resize(4, 3);
  mesh.faces << 0, 1, 2, 0, 3, 1, 0, 2, 3, 1, 3, 2;
  return mesh;
}

TriMesh icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 6) {
    throw Error(ErrorKind::kInvalidArgument, "icosphere subdivisions must be in [0, 6]");
  }
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Eigen::Vector3i> f = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.emplace_back(tri[0], a, c);
      next.emplace_back(tri[1], b, a);
      next.emplace_back(tri[2], c, b);
      next.emplace_back(a, b, c);
    }
    f = std::move(next);
  }

  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
  for (size_t i = 0; i < v.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = v[i];
  mesh.faces.resize(static_cast<Eigen::Index>(f.size()), 3);
  for (size_t i = 0; i < f.size(); ++i) mesh.faces.row(static_cast<Eigen::Index>(i)) = f[i];
  return mesh;
}

Mask rasterize_silhouette(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3i& faces,
                          const WeakPerspectiveCamera& cam, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::kZeroResolution, "raster has zero size");
  Mask mask;
  mask.width = width;
  mask.height = height;
  mask.pixels.assign(static_cast<size_t>(width) * height, 0);
  rasterize(project(cam, vertices), faces, width, height,
            [&](int x, int y, int, const Eigen::Vector3d&) {
              mask.pixels[static_cast<size_t>(y) * width + x] = 1;
            });
  return mask;
}

FlowField render_flow(const Eigen::MatrixX3d& vertices_t, const Eigen::MatrixX3d& vertices_t1,
                      const Eigen::MatrixX3i& faces, const WeakPerspectiveCamera& cam_t,
                      const WeakPerspectiveCamera& cam_t1, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::kZeroResolution, "raster has zero size");
  const ProjectionWithDepth pt = project_with_depth(cam_t, vertices_t);
  const Eigen::MatrixX2d p1 = project(cam_t1, vertices_t1);
  const size_t count = static_cast<size_t>(width) * height;
  std::vector<double> depth(count, std::numeric_limits<double>::infinity());
  std::vector<int> face(count, -1);
  std::vector<Eigen::Vector3d> bary(count);
  rasterize(pt.image, faces, width, height, [&](int x, int y, int f, const Eigen::Vector3d& w) {
    const double z = w[0] * pt.depth[faces(f, 0)] + w[1] * pt.depth[faces(f, 1)] +
                     w[2] * pt.depth[faces(f, 2)];
    const size_t i = static_cast<size_t>(y) * width + x;
    if (z < depth[i]) {
      depth[i] = z;
      face[i] = f;
      bary[i] = w;
    }
  });

  FlowField flow;
  flow.width = width;
  flow.height = height;
  flow.data.assign(2 * count, kInvalidFlow);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t i = static_cast<size_t>(y) * width + x;
      if (face[i] < 0) continue;
      const Eigen::Vector3d& w = bary[i];
      const int f = face[i];
      const Eigen::RowVector2d target =
          w[0] * p1.row(faces(f, 0)) + w[1] * p1.row(faces(f, 1)) + w[2] * p1.row(faces(f, 2));
      flow.data[2 * i] = static_cast<float>(target[0] - x);
      flow.data[2 * i + 1] = static_cast<float>(target[1] - y);
    }
  }
  return flow;
}

WeakPerspectiveCamera perturb_azimuth(const WeakPerspectiveCamera& cam, double degrees) {
  WeakPerspectiveCamera out = cam;
  out.rotation = quaternion_multiply(cam.rotation, azimuth_quaternion(degrees * kDegree));
  out.rotation.normalize();
  return out;
}

SyntheticScene make_synthetic_scene(const SyntheticOptions& o) {
  if (o.frames < 1 || o.handles < 1 || o.keypoints < 0) {
    throw Error(ErrorKind::kInvalidArgument, "synthetic scene needs frames and handles");
  }
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticScene scene;
  scene.options = o;
  scene.templ = icosphere(o.subdivisions);
  const TriMesh& templ = scene.templ;
  const int n = templ.vertex_count();
  const int first_seed = std::uniform_int_distribution<int>(0, n - 1)(rng);
  const std::vector<int> seeds = farthest_point_sample(templ, o.handles, first_seed);
  scene.handles = build_handle_map(templ, seeds);
  scene.system = std::make_shared<const DeformSystem>(DeformSystem::build(templ, scene.handles));

  const double bound = o.max_offset_fraction * templ.bbox_diagonal();
  auto random_offsets = [&]() {
    Eigen::MatrixX3d m(o.handles, 3);
    for (int r = 0; r < o.handles; ++r) {
      Eigen::Vector3d d(normal(rng), normal(rng), normal(rng));
      m.row(r) = (d.normalized() * bound * (0.3 + 0.5 * unit(rng))).transpose();
    }
    return m;
  };
  const Eigen::MatrixX3d base = random_offsets();
  const Eigen::MatrixX3d drift = random_offsets();

  KeypointSet keypoints;
  if (o.with_keypoints && o.keypoints > 0) {
    const auto rings = vertex_neighbors(templ);
    Eigen::MatrixXd reg = Eigen::MatrixXd::Zero(o.keypoints, n);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (int j = 0; j < o.keypoints; ++j) {
      const int center = order[static_cast<size_t>(j) % n];
      reg(j, center) = 1.0 + unit(rng);
      for (int nb : rings[center]) reg(j, nb) = 0.2 + 0.3 * unit(rng);
      reg.row(j) /= reg.row(j).sum();
      keypoints.points.push_back({"kp" + std::to_string(j), 0.0, 0.0, true});
    }
    keypoints.regressor = std::move(reg);
  }

  const double radius = templ.vertices.rowwise().norm().maxCoeff();
  for (int f = 0; f < o.frames; ++f) {
    const double mix = o.frames > 1 ? static_cast<double>(f) / (o.frames - 1) : 0.0;
    Eigen::MatrixX3d offsets = 0.7 * base + 0.3 * mix * drift;
    for (int r = 0; r < o.handles; ++r) {
      const double len = offsets.row(r).norm();
      if (len > bound) offsets.row(r) *= bound / len;
    }
    FrameParameters p;
    p.offsets = offsets;
    p.camera.scale = o.fill * o.width / radius;
    p.camera.translation = {0.5 * (o.width - 1), 0.5 * (o.height - 1)};
    p.camera.rotation =
        quaternion_multiply(elevation_quaternion(o.elevation_deg * kDegree),
                            azimuth_quaternion((o.base_azimuth_deg + f * o.camera_step_deg) * kDegree));
    scene.truth.push_back(p);
  }

  std::vector<Eigen::MatrixX3d> verts;
  for (const auto& p : scene.truth) verts.push_back(scene.system->vertices_for_offsets(p.offsets));
  for (int f = 0; f < o.frames; ++f) {
    const WeakPerspectiveCamera& cam = scene.truth[f].camera;
    Mask mask = rasterize_silhouette(verts[f], templ.faces, cam, o.width, o.height);
    std::optional<KeypointSet> kps;
    if (keypoints.regressor) {
      KeypointSet k = keypoints;
      const Eigen::MatrixX2d proj = project(cam, *k.regressor * verts[f]);
      for (size_t j = 0; j < k.points.size(); ++j) {
        k.points[j].x = proj(static_cast<Eigen::Index>(j), 0);
        k.points[j].y = proj(static_cast<Eigen::Index>(j), 1);
      }
      kps = std::move(k);
    }
    std::optional<FlowField> flow;
    if (o.with_flow && f + 1 < o.frames) {
      flow = render_flow(verts[f], verts[f + 1], templ.faces, cam, scene.truth[f + 1].camera,
                         o.width, o.height);
    }
    scene.observations.push_back(
        FrameObservation::create(std::move(mask), std::move(kps), std::move(flow)));
  }
  return scene;
}

SequenceState initial_sequence(const SyntheticScene& scene,
                               const std::vector<WeakPerspectiveCamera>& cameras) {
  if (cameras.size() != scene.truth.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "one camera per frame expected");
  }
  SequenceState seq;
  seq.system = scene.system;
  seq.observations = scene.observations;
  for (size_t f = 0; f < cameras.size(); ++f) {
    seq.frame_ids.push_back(static_cast<int>(f));
    FrameParameters p;
    p.offsets = Eigen::MatrixX3d::Zero(scene.system->handle_count(), 3);
    p.camera = cameras[f];
    seq.frames.push_back(p);
  }
  return seq;
}

void write_project(const SyntheticScene& scene, const std::filesystem::path& dir,
                   const std::vector<WeakPerspectiveCamera>& cameras) {
  std::filesystem::create_directories(dir / "frames");
  save_obj(scene.templ, dir / "mesh.obj");
  save_handle_map(scene.handles, dir / "handles.json");
  for (size_t f = 0; f < scene.observations.size(); ++f) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "frame_%06zu", f);
    const std::filesystem::path base = dir / "frames" / stem;
    const FrameObservation& o = scene.observations[f];
    save_mask(o.mask, base.string() + ".pgm");
    if (o.flow_to_next) save_flo(*o.flow_to_next, base.string() + ".flo");
    if (o.keypoints) save_keypoints(*o.keypoints, base.string() + ".json");
    if (!cameras.empty()) save_camera(cameras.at(f), base.string() + ".camera.json");
  }
}

double mean_keypoint_error(const Eigen::MatrixX3d& vertices, const WeakPerspectiveCamera& cam,
                           const KeypointSet& keypoints) {
  if (!keypoints.regressor) throw Error(ErrorKind::kMissingRegressor, "keypoints lack a regressor");
  const Eigen::MatrixX2d proj = project(cam, *keypoints.regressor * vertices);
  double sum = 0.0;
  int count = 0;
  for (size_t j = 0; j < keypoints.points.size(); ++j) {
    const Keypoint& k = keypoints.points[j];
    if (!k.visible) continue;
    sum += (proj.row(static_cast<Eigen::Index>(j)) - Eigen::RowVector2d(k.x, k.y)).norm();
    ++count;
  }
  return count ? sum / count : 0.0;
}

double rotation_angle_between(const WeakPerspectiveCamera& a, const WeakPerspectiveCamera& b) {
  const double d = std::abs(a.rotation.normalized().dot(b.rotation.normalized()));
  return 2.0 * std::acos(std::min(d, 1.0));
}

}  // namespace handlefit
