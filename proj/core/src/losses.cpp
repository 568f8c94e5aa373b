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

#include "handlefit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include <json.hpp>

#include "handlefit/error.hpp"

namespace handlefit {
namespace {

using json = nlohmann::json;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

TermResult zero_term(Eigen::Index n) {
  TermResult out;
  out.grad_vertices = Eigen::MatrixX3d::Zero(n, 3);
  return out;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
// handled by exactly one worker, so per-index outputs are deterministic.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  const int workers = std::clamp(threads, 1, std::max(count, 1));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void validate_weights(const LossWeights& w) {
  for (double v : {w.motion, w.kp, w.rigid, w.boundary}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorKind::kInvalidArgument, "loss weights must be finite and nonnegative");
    }
  }
}

LossWeights loss_weights_from_json(std::string_view text) {
  LossWeights w;
  try {
    const json j = json::parse(text);
    w.motion = j.value("motion", w.motion);
    w.kp = j.value("kp", w.kp);
    w.rigid = j.value("rigid", w.rigid);
    w.boundary = j.value("boundary", w.boundary);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("loss weights json: ") + e.what());
  }
  validate_weights(w);
  return w;
}

std::string loss_weights_to_json(const LossWeights& w) {
  json j;
  j["motion"] = w.motion;
  j["kp"] = w.kp;
  j["rigid"] = w.rigid;
  j["boundary"] = w.boundary;
  return j.dump();
}

MotionResult motion_loss(const Eigen::MatrixX3d& vertices_t, const Eigen::MatrixX3d& vertices_t1,
                         const WeakPerspectiveCamera& cam_t,
                         const WeakPerspectiveCamera& cam_t1, const FlowField& flow,
                         const std::vector<std::uint8_t>& gamma) {
  const auto n = vertices_t.rows();
  if (vertices_t1.rows() != n || static_cast<Eigen::Index>(gamma.size()) != n) {
    throw Error(ErrorKind::kDimensionMismatch, "motion loss inputs have different vertex counts");
  }
  const Eigen::MatrixX2d p_t = project(cam_t, vertices_t);
  // Displacement as (s1 R1 x1 - s0 R0 x0) + (t1 - t0) so that a pure camera
  // translation cancels exactly instead of up to rounding of t.
  WeakPerspectiveCamera centred_t = cam_t, centred_t1 = cam_t1;
  centred_t.translation.setZero();
  centred_t1.translation.setZero();
  const Eigen::MatrixX2d c_t = project(centred_t, vertices_t);
  const Eigen::MatrixX2d c_t1 = project(centred_t1, vertices_t1);
  const Eigen::RowVector2d dt = (cam_t1.translation - cam_t.translation).transpose();

  Eigen::MatrixX2d g_t = Eigen::MatrixX2d::Zero(n, 2);
  Eigen::MatrixX2d g_t1 = Eigen::MatrixX2d::Zero(n, 2);
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!gamma[i]) continue;
    const std::optional<FlowSample> u = sample_flow(flow, p_t.row(i).transpose());
    if (!u) continue;
    const Eigen::Vector2d r = u->value - ((c_t1.row(i) - c_t.row(i)) + dt).transpose();
    sum += r.cwiseAbs().sum();
    const Eigen::Vector2d s(sign(r[0]), sign(r[1]));
    g_t.row(i) = (u->jacobian.transpose() * s + s).transpose();
    g_t1.row(i) = -s.transpose();
    ++count;
  }

  MotionResult out;
  out.eligible = count;
  if (count == 0) {
    out.no_eligible = true;
    out.grad_vertices_t = Eigen::MatrixX3d::Zero(n, 3);
    out.grad_vertices_t1 = Eigen::MatrixX3d::Zero(n, 3);
    return out;
  }
  out.value = sum / count;
  g_t /= count;
  g_t1 /= count;
  BackprojectedGradient bt = backproject_gradient(cam_t, vertices_t, g_t);
  BackprojectedGradient bt1 = backproject_gradient(cam_t1, vertices_t1, g_t1);
  out.grad_vertices_t = std::move(bt.points);
  out.grad_vertices_t1 = std::move(bt1.points);
  out.grad_camera_t = bt.camera;
  out.grad_camera_t1 = bt1.camera;
  return out;
}

MotionResult motion_loss(const Eigen::MatrixX3d& vertices_t, const Eigen::MatrixX3d& vertices_t1,
                         const Eigen::MatrixX3i& faces, const WeakPerspectiveCamera& cam_t,
                         const WeakPerspectiveCamera& cam_t1, const FrameObservation& obs_t) {
  if (!obs_t.flow_to_next) throw Error(ErrorKind::kMissingFlow, "frame has no forward flow");
  const int w = obs_t.mask.width, h = obs_t.mask.height;
  const auto vis_t = vertex_visibility(vertices_t, faces, cam_t, w, h);
  const auto vis_t1 = vertex_visibility(vertices_t1, faces, cam_t1, w, h);
  const auto gamma = motion_eligibility(vis_t, vis_t1, project(cam_t, vertices_t), obs_t.mask);
  return motion_loss(vertices_t, vertices_t1, cam_t, cam_t1, *obs_t.flow_to_next, gamma);
}

TermResult keypoint_loss(const Eigen::MatrixX3d& vertices, const WeakPerspectiveCamera& cam,
                         const KeypointSet& keypoints) {
  if (!keypoints.regressor) {
    throw Error(ErrorKind::kMissingRegressor, "keypoint loss needs a regressor");
  }
  const Eigen::MatrixXd& k = *keypoints.regressor;
  if (k.cols() != vertices.rows() ||
      k.rows() != static_cast<Eigen::Index>(keypoints.points.size())) {
    throw Error(ErrorKind::kDimensionMismatch, "regressor does not match mesh or keypoint count");
  }
  const Eigen::MatrixX3d regressed = k * vertices;
  const Eigen::MatrixX2d projected = project(cam, regressed);
  Eigen::MatrixX2d grad = Eigen::MatrixX2d::Zero(regressed.rows(), 2);
  TermResult out = zero_term(vertices.rows());
  bool any = false;
  for (size_t j = 0; j < keypoints.points.size(); ++j) {
    const Keypoint& kp = keypoints.points[j];
    if (!kp.visible) continue;
    any = true;
    const Eigen::Vector2d d = projected.row(j).transpose() - Eigen::Vector2d(kp.x, kp.y);
    out.value += d.cwiseAbs().sum();
    grad.row(j) << sign(d[0]), sign(d[1]);
  }
  if (!any) return out;
  const BackprojectedGradient b = backproject_gradient(cam, regressed, grad);
  out.grad_vertices = k.transpose() * b.points;
  out.grad_camera = b.camera;
  return out;
}

TermResult rigidity_loss(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3d& template_vertices,
                         const std::vector<std::vector<int>>& neighborhoods) {
  const auto n = vertices.rows();
  if (template_vertices.rows() != n || static_cast<Eigen::Index>(neighborhoods.size()) != n) {
    throw Error(ErrorKind::kDimensionMismatch, "rigidity inputs have different vertex counts");
  }
  TermResult out = zero_term(n);
  int counted = 0;
  for (const auto& nb : neighborhoods) counted += nb.empty() ? 0 : 1;
  if (counted == 0) return out;

  for (Eigen::Index u = 0; u < n; ++u) {
    const auto& nb = neighborhoods[u];
    if (nb.empty()) continue;
    const double scale = 1.0 / (static_cast<double>(nb.size()) * counted);
    for (int v : nb) {
      const Eigen::RowVector3d e = vertices.row(u) - vertices.row(v);
      const double d = e.norm();
      const Eigen::RowVector3d e0 = template_vertices.row(u) - template_vertices.row(v);
      const double d0 = e0.norm();
      out.value += scale * std::abs(d - d0);
      if (d > 0.0) {
        const Eigen::RowVector3d g = scale * sign(d - d0) / d * e;
        out.grad_vertices.row(u) += g;
        out.grad_vertices.row(v) -= g;
      }
    }
  }
  return out;
}

double boundary_outer_bruteforce(const Eigen::MatrixX2d& projected,
                                 const std::vector<Eigen::Vector2d>& boundary) {
  if (boundary.empty() || projected.rows() == 0) return 0.0;
  double sum = 0.0;
  for (const Eigen::Vector2d& b : boundary) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < projected.rows(); ++i) {
      const double dx = projected(i, 0) - b[0];
      const double dy = projected(i, 1) - b[1];
      best = std::min(best, dx * dx + dy * dy);
    }
    sum += best;
  }
  return sum / static_cast<double>(boundary.size());
}

BoundaryResult boundary_loss(const Eigen::MatrixX3d& vertices, const WeakPerspectiveCamera& cam,
                             const FrameObservation& obs) {
  if (obs.mask_empty()) throw Error(ErrorKind::kEmptyMask, "boundary loss needs a foreground");
  const auto n = vertices.rows();
  const Eigen::MatrixX2d p = project(cam, vertices);
  Eigen::MatrixX2d grad = Eigen::MatrixX2d::Zero(n, 2);

  BoundaryResult out;
  if (n > 0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const DistanceSample s = sample_distance(obs.distance, p.row(i).transpose());
      out.inner += s.value;
      grad.row(i) += s.gradient.transpose() / static_cast<double>(n);
    }
    out.inner /= static_cast<double>(n);

    const double b_count = static_cast<double>(obs.boundary.size());
    for (const Eigen::Vector2d& b : obs.boundary) {
      double best = std::numeric_limits<double>::infinity();
      Eigen::Index arg = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double dx = p(i, 0) - b[0];
        const double dy = p(i, 1) - b[1];
        const double d2 = dx * dx + dy * dy;
        if (d2 < best) {
          best = d2;
          arg = i;
        }
      }
      out.outer += best;
      grad.row(arg) += 2.0 / b_count * (p.row(arg) - b.transpose());
    }
    out.outer /= b_count;
  }
  out.value = out.inner + out.outer;
  const BackprojectedGradient bp = backproject_gradient(cam, vertices, grad);
  out.grad_vertices = bp.points;
  out.grad_camera = bp.camera;
  return out;
}

LossContext LossContext::create(const DeformSystem& system,
                                const std::vector<FrameObservation>& observations, int threads) {
  LossContext ctx;
  ctx.system = &system;
  ctx.observations = &observations;
  ctx.neighborhoods = two_ring_neighborhoods(system.template_mesh());
  ctx.threads = std::max(threads, 1);
  return ctx;
}

LossBreakdown total_loss(const LossContext& ctx, const std::vector<FrameParameters>& frames,
                         const LossWeights& weights) {
  validate_weights(weights);
  const DeformSystem& sys = *ctx.system;
  const auto& obs = *ctx.observations;
  const int count = static_cast<int>(frames.size());
  if (static_cast<int>(obs.size()) != count) {
    throw Error(ErrorKind::kDimensionMismatch, "frame parameters and observations differ in count");
  }
  const auto n = sys.vertex_count();
  const Eigen::MatrixX3i& faces = sys.template_mesh().faces;

  std::vector<Eigen::MatrixX3d> vertices(static_cast<size_t>(count));
  parallel_for(count, ctx.threads, [&](int f) {
    validate_camera(frames[f].camera);
    vertices[f] = sys.vertices_for_offsets(frames[f].offsets);
  });

  // Per-frame slots; motion pair (f, f+1) writes its frame-(f+1) half into a
  // separate slot so no two workers touch the same memory.
  LossBreakdown out;
  out.frames.assign(static_cast<size_t>(count), FrameTerms{});
  std::vector<Eigen::MatrixX3d> grad_v(static_cast<size_t>(count));
  std::vector<Eigen::MatrixX3d> grad_v_next(static_cast<size_t>(count));
  std::vector<CameraGradient> grad_c(static_cast<size_t>(count));
  std::vector<CameraGradient> grad_c_next(static_cast<size_t>(count));

  parallel_for(count, ctx.threads, [&](int f) {
    FrameTerms& terms = out.frames[f];
    const FrameObservation& o = obs[f];
    const WeakPerspectiveCamera& cam = frames[f].camera;
    Eigen::MatrixX3d gv = Eigen::MatrixX3d::Zero(n, 3);
    Eigen::MatrixX3d gv_next = Eigen::MatrixX3d::Zero(n, 3);
    CameraGradient gc, gc_next;

    if (o.flow_to_next && f + 1 < count) {
      const MotionResult m =
          motion_loss(vertices[f], vertices[f + 1], faces, cam, frames[f + 1].camera, o);
      terms.has_motion = true;
      terms.motion = m.value;
      terms.motion_no_eligible = m.no_eligible;
      if (weights.motion > 0.0) {
        gv += weights.motion * m.grad_vertices_t;
        gc += m.grad_camera_t * weights.motion;
        gv_next += weights.motion * m.grad_vertices_t1;
        gc_next += m.grad_camera_t1 * weights.motion;
      }
    }
    if (o.keypoints && o.keypoints->regressor) {
      const TermResult k = keypoint_loss(vertices[f], cam, *o.keypoints);
      terms.has_kp = true;
      terms.kp = k.value;
      if (weights.kp > 0.0) {
        gv += weights.kp * k.grad_vertices;
        gc += k.grad_camera * weights.kp;
      }
    }
    {
      const TermResult r = rigidity_loss(vertices[f], sys.template_mesh().vertices, ctx.neighborhoods);
      terms.has_rigid = true;
      terms.rigid = r.value;
      if (weights.rigid > 0.0) gv += weights.rigid * r.grad_vertices;
    }
    if (!o.mask_empty()) {
      const BoundaryResult b = boundary_loss(vertices[f], cam, o);
      terms.has_boundary = true;
      terms.boundary = b.value;
      if (weights.boundary > 0.0) {
        gv += weights.boundary * b.grad_vertices;
        gc += b.grad_camera * weights.boundary;
      }
    }
    grad_v[f] = std::move(gv);
    grad_v_next[f] = std::move(gv_next);
    grad_c[f] = gc;
    grad_c_next[f] = gc_next;
  });

  const Eigen::MatrixXd dt = sys.fold_map().transpose();
  out.gradients.resize(static_cast<size_t>(count));
  for (int f = 0; f < count; ++f) {
    Eigen::MatrixX3d gv = grad_v[f];
    CameraGradient gc = grad_c[f];
    if (f > 0) {
      gv += grad_v_next[f - 1];
      gc += grad_c_next[f - 1];
    }
    out.gradients[f].offsets = dt * gv;
    out.gradients[f].camera = gc;

    const FrameTerms& t = out.frames[f];
    out.motion += t.motion;
    out.kp += t.kp;
    out.rigid += t.rigid;
    out.boundary += t.boundary;
  }
  out.total = weights.motion * out.motion + weights.kp * out.kp + weights.rigid * out.rigid +
              weights.boundary * out.boundary;
  return out;
}

}  // namespace handlefit
