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

#include "handlefit/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "file_util.hpp"
#include "handlefit/error.hpp"

namespace handlefit {
namespace {

using json = nlohmann::json;

// d(R(u) x)_{0,1} / du for a unit quaternion u = (w, x, y, z).
Eigen::Matrix<double, 2, 4> rotated_xy_wrt_unit_quat(const Eigen::Vector4d& u,
                                                     const Eigen::Vector3d& p) {
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  const double a = p[0], b = p[1], c = p[2];
  Eigen::Matrix<double, 2, 4> d;
  d(0, 0) = -2 * z * b + 2 * y * c;
  d(0, 1) = 2 * y * b + 2 * z * c;
  d(0, 2) = -4 * y * a + 2 * x * b + 2 * w * c;
  d(0, 3) = -4 * z * a - 2 * w * b + 2 * x * c;
  d(1, 0) = 2 * z * a - 2 * x * c;
  d(1, 1) = 2 * y * a - 4 * x * b - 2 * w * c;
  d(1, 2) = 2 * x * a + 2 * z * c;
  d(1, 3) = 2 * w * a - 4 * z * b + 2 * y * c;
  return d;
}

}  // namespace

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q) {
  const Eigen::Vector4d u = q / q.norm();
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Vector4d quaternion_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Eigen::Vector4d azimuth_quaternion(double radians) {
  return {std::cos(radians / 2), 0.0, std::sin(radians / 2), 0.0};
}

Eigen::Matrix3d WeakPerspectiveCamera::rotation_matrix() const {
  return quaternion_to_matrix(rotation);
}

void validate_camera(const WeakPerspectiveCamera& cam) {
  if (!std::isfinite(cam.scale) || !(cam.scale > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "camera scale must be positive");
  }
  if (!cam.translation.allFinite() || !cam.rotation.allFinite()) {
    throw Error(ErrorKind::kInvalidArgument, "camera has non-finite parameters");
  }
  if (!(cam.rotation.norm() > 1e-9)) {
    throw Error(ErrorKind::kInvalidArgument, "camera quaternion is zero");
  }
}

Eigen::MatrixX2d project(const WeakPerspectiveCamera& cam, const Eigen::MatrixX3d& points) {
  const Eigen::Matrix3d r = cam.rotation_matrix();
  Eigen::MatrixX2d out = cam.scale * (points * r.topRows<2>().transpose());
  out.rowwise() += cam.translation.transpose();
  return out;
}

ProjectionWithDepth project_with_depth(const WeakPerspectiveCamera& cam,
                                       const Eigen::MatrixX3d& points) {
  const Eigen::Matrix3d r = cam.rotation_matrix();
  ProjectionWithDepth out;
  out.image = cam.scale * (points * r.topRows<2>().transpose());
  out.image.rowwise() += cam.translation.transpose();
  out.depth = points * r.row(2).transpose();
  return out;
}

ProjectionJacobians projection_jacobians(const WeakPerspectiveCamera& cam,
                                         const Eigen::MatrixX3d& points) {
  const double qn = cam.rotation.norm();
  const Eigen::Vector4d u = cam.rotation / qn;
  const Eigen::Matrix4d normalize = (Eigen::Matrix4d::Identity() - u * u.transpose()) / qn;
  const Eigen::Matrix3d r = quaternion_to_matrix(cam.rotation);
  const Eigen::Matrix<double, 2, 3> r_xy = r.topRows<2>();

  const auto m = points.rows();
  ProjectionJacobians out;
  out.d_scale = points * r_xy.transpose();
  out.d_rotation.resize(static_cast<size_t>(m));
  out.d_point.assign(static_cast<size_t>(m), cam.scale * r_xy);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Vector3d p = points.row(i).transpose();
    out.d_rotation[i] = cam.scale * rotated_xy_wrt_unit_quat(u, p) * normalize;
  }
  return out;
}

CameraGradient& CameraGradient::operator+=(const CameraGradient& other) {
  scale += other.scale;
  translation += other.translation;
  rotation += other.rotation;
  return *this;
}

CameraGradient CameraGradient::operator*(double factor) const {
  CameraGradient out = *this;
  out.scale *= factor;
  out.translation *= factor;
  out.rotation *= factor;
  return out;
}

BackprojectedGradient backproject_gradient(const WeakPerspectiveCamera& cam,
                                           const Eigen::MatrixX3d& points,
                                           const Eigen::MatrixX2d& grad_image) {
  const double qn = cam.rotation.norm();
  const Eigen::Vector4d u = cam.rotation / qn;
  const Eigen::Matrix4d normalize = (Eigen::Matrix4d::Identity() - u * u.transpose()) / qn;
  const Eigen::Matrix3d r = quaternion_to_matrix(cam.rotation);
  const Eigen::Matrix<double, 2, 3> r_xy = r.topRows<2>();

  BackprojectedGradient out;
  out.points = cam.scale * (grad_image * r_xy);
  const Eigen::MatrixX2d rotated = points * r_xy.transpose();
  out.camera.scale = rotated.cwiseProduct(grad_image).sum();
  out.camera.translation = grad_image.colwise().sum().transpose();
  Eigen::RowVector4d d_unit = Eigen::RowVector4d::Zero();
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Eigen::RowVector2d g = grad_image.row(i);
    if (g.isZero(0.0)) continue;
    d_unit += g * rotated_xy_wrt_unit_quat(u, points.row(i).transpose());
  }
  out.camera.rotation = (cam.scale * d_unit * normalize).transpose();
  return out;
}

CameraMultiplex init_multiplex(int count, double template_depth_scale, int handle_count) {
  if (count < 1) throw Error(ErrorKind::kInvalidArgument, "multiplex needs at least one camera");
  if (!(template_depth_scale > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "multiplex scale must be positive");
  }
  CameraMultiplex out;
  out.handle_offsets = Eigen::MatrixX3d::Zero(std::max(handle_count, 0), 3);
  for (int i = 0; i < count; ++i) {
    CameraHypothesis h;
    h.azimuth = 2.0 * std::numbers::pi * i / count;
    h.camera.scale = template_depth_scale;
    h.camera.translation.setZero();
    h.camera.rotation = azimuth_quaternion(h.azimuth);
    out.hypotheses.push_back(h);
  }
  out.probabilities.assign(static_cast<size_t>(count), 1.0 / count);
  return out;
}

std::vector<double> multiplex_probabilities(std::span<const double> losses) {
  if (losses.empty()) return {};
  const double lo = *std::min_element(losses.begin(), losses.end());
  std::vector<double> p(losses.size());
  double sum = 0.0;
  for (size_t i = 0; i < losses.size(); ++i) {
    p[i] = std::exp(-(losses[i] - lo));
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::string camera_to_json(const WeakPerspectiveCamera& cam) {
  json j;
  j["s"] = cam.scale;
  j["t"] = {cam.translation[0], cam.translation[1]};
  j["q"] = {cam.rotation[0], cam.rotation[1], cam.rotation[2], cam.rotation[3]};
  return j.dump();
}

WeakPerspectiveCamera camera_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    WeakPerspectiveCamera cam;
    cam.scale = j.at("s").get<double>();
    const auto t = j.at("t").get<std::vector<double>>();
    const auto q = j.at("q").get<std::vector<double>>();
    if (t.size() != 2 || q.size() != 4) {
      throw Error(ErrorKind::kParse, "camera json needs t[2] and q[4]");
    }
    cam.translation = {t[0], t[1]};
    cam.rotation = {q[0], q[1], q[2], q[3]};
    validate_camera(cam);
    return cam;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("camera json: ") + e.what());
  }
}

WeakPerspectiveCamera load_camera(const std::filesystem::path& path) {
  return camera_from_json(detail::read_file(path));
}

void save_camera(const WeakPerspectiveCamera& cam, const std::filesystem::path& path) {
  detail::write_file(path, camera_to_json(cam));
}

}  // namespace handlefit
