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

#include "handlefit/refine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "file_util.hpp"
#include "handlefit/error.hpp"

namespace handlefit {
namespace {

using json = nlohmann::json;

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

class Adam {
 public:
  explicit Adam(Eigen::Index size = 0)
      : m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

  // Returns false (and leaves x untouched) when the gradient is exactly zero
  // and no momentum has accumulated.
  bool step(double* x, const double* grad, double lr, int t) {
    const Eigen::Index n = m_.size();
    Eigen::Map<Eigen::VectorXd> xv(x, n);
    const Eigen::Map<const Eigen::VectorXd> g(grad, n);
    if (g.isZero(0.0) && m_.isZero(0.0)) return false;
    m_ = kBeta1 * m_ + (1 - kBeta1) * g;
    v_ = kBeta2 * v_ + (1 - kBeta2) * g.cwiseAbs2();
    const double c1 = 1 - std::pow(kBeta1, t);
    const double c2 = 1 - std::pow(kBeta2, t);
    xv.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kAdamEps);
    return true;
  }

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

struct CameraOptimizer {
  Adam scale{1};
  Adam translation{2};
  Adam rotation{4};
};

struct Hypothesis {
  int index = 0;
  double azimuth = 0.0;
  std::vector<WeakPerspectiveCamera> cameras;
  std::vector<CameraOptimizer> optimizers;
  LossBreakdown last;
  double probability = 0.0;
};

std::vector<FrameParameters> params_for(const std::vector<Eigen::MatrixX3d>& offsets,
                                        const Hypothesis& h) {
  std::vector<FrameParameters> out(offsets.size());
  for (size_t f = 0; f < offsets.size(); ++f) {
    out[f].offsets = offsets[f];
    out[f].camera = h.cameras[f];
  }
  return out;
}

void check_finite(const LossBreakdown& b, const LossWeights& w, const std::vector<int>& ids) {
  for (size_t f = 0; f < b.frames.size(); ++f) {
    const FrameTerms& t = b.frames[f];
    const auto bad = [&](bool has, double weight, double value) {
      return has && weight > 0.0 && !std::isfinite(value);
    };
    const char* term = nullptr;
    if (bad(t.has_motion, w.motion, t.motion)) term = "motion";
    else if (bad(t.has_kp, w.kp, t.kp)) term = "kp";
    else if (bad(t.has_rigid, w.rigid, t.rigid)) term = "rigid";
    else if (bad(t.has_boundary, w.boundary, t.boundary)) term = "boundary";
    else if (!b.gradients[f].offsets.allFinite() || !std::isfinite(b.gradients[f].camera.scale) ||
             !b.gradients[f].camera.translation.allFinite() ||
             !b.gradients[f].camera.rotation.allFinite()) {
      term = "gradient";
    }
    if (term != nullptr) {
      throw Error(ErrorKind::kNonFiniteLoss,
                  "frame " + std::to_string(ids[f]) + ", term " + term + " is not finite");
    }
  }
}

TermStatus status_of(const LossBreakdown& b, double weight, bool FrameTerms::*has) {
  const bool any = std::any_of(b.frames.begin(), b.frames.end(),
                               [&](const FrameTerms& t) { return t.*has; });
  if (!any) return TermStatus::kAbsent;
  return weight > 0.0 ? TermStatus::kPresent : TermStatus::kDisabled;
}

json camera_json(const WeakPerspectiveCamera& cam) {
  return json::parse(camera_to_json(cam));
}

json offsets_json(const Eigen::MatrixX3d& offsets) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < offsets.rows(); ++r) {
    rows.push_back({offsets(r, 0), offsets(r, 1), offsets(r, 2)});
  }
  return rows;
}

json breakdown_json(const LossBreakdown& b) {
  json j;
  j["total"] = b.total;
  j["motion"] = b.motion;
  j["kp"] = b.kp;
  j["rigid"] = b.rigid;
  j["boundary"] = b.boundary;
  return j;
}

}  // namespace

std::string_view to_string(TermStatus status) {
  switch (status) {
    case TermStatus::kPresent: return "present";
    case TermStatus::kDisabled: return "disabled";
    case TermStatus::kAbsent: return "absent";
  }
  return "unknown";
}

void validate_sequence(const SequenceState& seq) {
  if (!seq.system) throw Error(ErrorKind::kInvalidArgument, "sequence has no deformation system");
  if (seq.frames.empty()) throw Error(ErrorKind::kInvalidArgument, "sequence has no frames");
  if (seq.observations.size() != seq.frames.size() || seq.frame_ids.size() != seq.frames.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "sequence frame lists differ in length");
  }
  const int k = seq.system->handle_count();
  for (const FrameParameters& f : seq.frames) {
    if (f.offsets.rows() != k) {
      throw Error(ErrorKind::kDimensionMismatch, "frame offsets must have K rows");
    }
    if (!f.offsets.allFinite()) throw Error(ErrorKind::kInvalidArgument, "frame offsets must be finite");
    validate_camera(f.camera);
  }
}

void validate_config(const RefineConfig& c) {
  if (c.iterations < 0) throw Error(ErrorKind::kInvalidArgument, "iterations must be >= 0");
  for (double lr : {c.lr.handles, c.lr.scale, c.lr.translation, c.lr.rotation}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
      throw Error(ErrorKind::kInvalidArgument, "learning rates must be positive");
    }
  }
  validate_weights(c.weights);
  if (c.multiplex < 1) throw Error(ErrorKind::kInvalidArgument, "multiplex count must be >= 1");
  double prev = 0.0;
  for (const PruneStep& p : c.prune) {
    if (!(p.at > prev) || p.at > 1.0) {
      throw Error(ErrorKind::kInvalidArgument, "prune schedule must increase within (0, 1]");
    }
    if (p.keep < 1) throw Error(ErrorKind::kInvalidArgument, "prune keep must be >= 1");
    prev = p.at;
  }
  if (!(c.tolerance >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "tolerance must be >= 0");
  if (c.threads < 1) throw Error(ErrorKind::kInvalidArgument, "threads must be >= 1");
  if (!(c.handle_weight > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "handle weight must be positive");
  }
  if (c.init_scale && !(*c.init_scale > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "init_scale must be positive");
  }
}

RefineConfig refine_config_from_json(std::string_view text) {
  RefineConfig c;
  try {
    const json j = json::parse(text);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("lr")) {
      const json& lr = j["lr"];
      c.lr.handles = lr.value("handles", c.lr.handles);
      c.lr.scale = lr.value("scale", c.lr.scale);
      c.lr.translation = lr.value("translation", c.lr.translation);
      c.lr.rotation = lr.value("rotation", c.lr.rotation);
    }
    if (j.contains("weights")) c.weights = loss_weights_from_json(j["weights"].dump());
    if (j.contains("multiplex")) {
      const json& m = j["multiplex"];
      c.multiplex = m.value("count", c.multiplex);
      if (m.contains("prune")) {
        c.prune.clear();
        for (const json& p : m["prune"]) {
          c.prune.push_back({p.at("at").get<double>(), p.at("keep").get<int>()});
        }
      }
    }
    c.tolerance = j.value("tolerance", c.tolerance);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.handle_weight = j.value("handle_weight", c.handle_weight);
    if (j.contains("init_scale") && !j["init_scale"].is_null()) {
      c.init_scale = j["init_scale"].get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("refine config json: ") + e.what());
  }
  validate_config(c);
  return c;
}

std::string refine_config_to_json(const RefineConfig& c) {
  json j;
  j["iterations"] = c.iterations;
  j["lr"] = {{"handles", c.lr.handles},
             {"scale", c.lr.scale},
             {"translation", c.lr.translation},
             {"rotation", c.lr.rotation}};
  j["weights"] = json::parse(loss_weights_to_json(c.weights));
  json prune = json::array();
  for (const PruneStep& p : c.prune) prune.push_back({{"at", p.at}, {"keep", p.keep}});
  j["multiplex"] = {{"count", c.multiplex}, {"prune", prune}};
  j["tolerance"] = c.tolerance;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["handle_weight"] = c.handle_weight;
  j["init_scale"] = c.init_scale ? json(*c.init_scale) : json(nullptr);
  return j.dump(2);
}

RefineResult refine(const SequenceState& seq, const RefineConfig& config) {
  validate_config(config);
  validate_sequence(seq);
  const auto start = std::chrono::steady_clock::now();

  const DeformSystem& sys = *seq.system;
  const int frames = seq.frame_count();
  const LossContext ctx = LossContext::create(sys, seq.observations, config.threads);
  const double lr_handles = config.lr.handles * sys.template_mesh().bbox_diagonal();

  std::vector<Eigen::MatrixX3d> offsets(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) offsets[f] = seq.frames[f].offsets;
  std::vector<Adam> offset_opt(static_cast<size_t>(frames), Adam(sys.handle_count() * 3));

  std::vector<Hypothesis> live;
  for (int h = 0; h < config.multiplex; ++h) {
    Hypothesis hyp;
    hyp.index = h;
    hyp.azimuth = 2.0 * std::numbers::pi * h / config.multiplex;
    const Eigen::Vector4d turn = azimuth_quaternion(hyp.azimuth);
    for (int f = 0; f < frames; ++f) {
      WeakPerspectiveCamera cam = seq.frames[f].camera;
      if (h > 0) cam.rotation = quaternion_multiply(cam.rotation, turn);
      hyp.cameras.push_back(cam);
    }
    hyp.optimizers.resize(static_cast<size_t>(frames));
    live.push_back(std::move(hyp));
  }

  RefineReport report;
  std::vector<HypothesisReport> hyp_reports;
  for (const Hypothesis& h : live) hyp_reports.push_back({h.index, h.azimuth, 0.0, 0.0, -1});

  // Prune steps scheduled strictly before the end run inside the loop; the
  // rest run once it finishes.
  size_t next_prune = 0;
  auto prune_to = [&](int keep, int iteration) {
    if (static_cast<int>(live.size()) <= keep) return;
    std::vector<size_t> order(live.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return live[a].probability > live[b].probability;
    });
    std::vector<Hypothesis> kept;
    std::vector<bool> keep_flag(live.size(), false);
    for (int i = 0; i < keep; ++i) keep_flag[order[i]] = true;
    for (size_t i = 0; i < live.size(); ++i) {
      if (keep_flag[i]) {
        kept.push_back(std::move(live[i]));
      } else {
        hyp_reports[live[i].index].pruned_at = iteration;
      }
    }
    live = std::move(kept);
  };

  struct Snapshot {
    std::vector<Eigen::MatrixX3d> offsets;
    std::vector<WeakPerspectiveCamera> cameras;
    int hypothesis = 0;
    LossBreakdown breakdown;
    double loss = std::numeric_limits<double>::infinity();
  } best;

  int stall = 0;
  double previous = 0.0;
  int it = 0;
  for (;; ++it) {
    while (next_prune < config.prune.size() && config.prune[next_prune].at < 1.0 &&
           it >= static_cast<int>(std::floor(config.prune[next_prune].at * config.iterations))) {
      prune_to(config.prune[next_prune].keep, it);
      ++next_prune;
    }

    std::vector<double> losses;
    for (Hypothesis& h : live) {
      h.last = total_loss(ctx, params_for(offsets, h), config.weights);
      check_finite(h.last, config.weights, seq.frame_ids);
      losses.push_back(h.last.total);
    }
    const std::vector<double> p = multiplex_probabilities(losses);
    size_t arg = 0;
    for (size_t i = 0; i < live.size(); ++i) {
      live[i].probability = p[i];
      hyp_reports[live[i].index].probability = p[i];
      hyp_reports[live[i].index].loss = losses[i];
      if (losses[i] < losses[arg]) arg = i;
    }
    const double tracked = losses[arg];
    report.trace.push_back(tracked);
    if (it == 0) {
      report.initial_total = tracked;
      report.initial = live[arg].last;
    }
    if (tracked < best.loss) {
      best.loss = tracked;
      best.offsets = offsets;
      best.cameras = live[arg].cameras;
      best.hypothesis = live[arg].index;
      best.breakdown = live[arg].last;
      report.best_iteration = it;
    }

    if (it > 0 && config.tolerance > 0.0) {
      const double rel = std::abs(previous - tracked) / std::max(std::abs(previous), 1e-300);
      stall = rel < config.tolerance ? stall + 1 : 0;
      if (stall >= kConvergencePatience) {
        report.converged = true;
        break;
      }
    }
    previous = tracked;
    if (it >= config.iterations) break;

    const int t = it + 1;
    for (int f = 0; f < frames; ++f) {
      Eigen::MatrixX3d g = Eigen::MatrixX3d::Zero(sys.handle_count(), 3);
      for (const Hypothesis& h : live) g += h.probability * h.last.gradients[f].offsets;
      offset_opt[f].step(offsets[f].data(), g.data(), lr_handles, t);
    }
    for (Hypothesis& h : live) {
      for (int f = 0; f < frames; ++f) {
        const CameraGradient& g = h.last.gradients[f].camera;
        WeakPerspectiveCamera& cam = h.cameras[f];
        CameraOptimizer& opt = h.optimizers[f];
        if (opt.scale.step(&cam.scale, &g.scale, config.lr.scale, t)) {
          cam.scale = std::max(cam.scale, kMinCameraScale);
        }
        opt.translation.step(cam.translation.data(), g.translation.data(), config.lr.translation, t);
        if (opt.rotation.step(cam.rotation.data(), g.rotation.data(), config.lr.rotation, t)) {
          cam.rotation.normalize();
        }
      }
    }
  }
  report.iterations_run = it;

  for (; next_prune < config.prune.size(); ++next_prune) {
    prune_to(config.prune[next_prune].keep, it);
  }

  report.final_total = best.loss;
  report.final_breakdown = best.breakdown;
  report.chosen_hypothesis = best.hypothesis;
  report.hypotheses = hyp_reports;
  report.motion = status_of(best.breakdown, config.weights.motion, &FrameTerms::has_motion);
  report.kp = status_of(best.breakdown, config.weights.kp, &FrameTerms::has_kp);
  report.rigid = status_of(best.breakdown, config.weights.rigid, &FrameTerms::has_rigid);
  report.boundary = status_of(best.breakdown, config.weights.boundary, &FrameTerms::has_boundary);
  if (config.record_timing) {
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  RefineResult result;
  result.state = seq;
  for (int f = 0; f < frames; ++f) {
    result.state.frames[f].offsets = best.offsets[f];
    result.state.frames[f].camera = best.cameras[f];
  }
  result.report = std::move(report);
  return result;
}

RefineResult refine_single_image(const SequenceState& frame, const RefineConfig& config) {
  if (frame.frame_count() != 1) {
    throw Error(ErrorKind::kInvalidArgument, "single-image refinement takes exactly one frame");
  }
  RefineConfig c = config;
  c.weights.motion = 0.0;
  RefineResult r = refine(frame, c);
  r.report.motion = TermStatus::kAbsent;
  return r;
}

std::string refine_report_to_json(const RefineReport& report, const std::vector<int>& frame_ids,
                                  const std::vector<FrameParameters>& frames) {
  json j;
  j["iterations_run"] = report.iterations_run;
  j["converged"] = report.converged;
  j["initial_total"] = report.initial_total;
  j["final_total"] = report.final_total;
  j["best_iteration"] = report.best_iteration;
  j["trace"] = report.trace;
  j["initial"] = breakdown_json(report.initial);
  j["final"] = breakdown_json(report.final_breakdown);
  j["terms"] = {{"motion", to_string(report.motion)},
                {"kp", to_string(report.kp)},
                {"rigid", to_string(report.rigid)},
                {"boundary", to_string(report.boundary)}};
  j["chosen_hypothesis"] = report.chosen_hypothesis;
  json hyps = json::array();
  for (const HypothesisReport& h : report.hypotheses) {
    hyps.push_back({{"index", h.index},
                    {"azimuth_deg", h.azimuth * 180.0 / std::numbers::pi},
                    {"probability", h.probability},
                    {"loss", h.loss},
                    {"pruned_at", h.pruned_at}});
  }
  j["hypotheses"] = hyps;
  json per_frame = json::array();
  for (size_t f = 0; f < frames.size(); ++f) {
    json e;
    e["id"] = f < frame_ids.size() ? frame_ids[f] : static_cast<int>(f);
    if (f < report.final_breakdown.frames.size()) {
      const FrameTerms& t = report.final_breakdown.frames[f];
      e["motion"] = t.has_motion ? json(t.motion) : json(nullptr);
      e["kp"] = t.has_kp ? json(t.kp) : json(nullptr);
      e["rigid"] = t.has_rigid ? json(t.rigid) : json(nullptr);
      e["boundary"] = t.has_boundary ? json(t.boundary) : json(nullptr);
      e["motion_no_eligible"] = t.motion_no_eligible;
    }
    e["camera"] = camera_json(frames[f].camera);
    e["offsets"] = offsets_json(frames[f].offsets);
    per_frame.push_back(e);
  }
  j["frames"] = per_frame;
  if (report.wall_clock_seconds) j["wall_clock_seconds"] = *report.wall_clock_seconds;
  return j.dump(2);
}

PcaResult pca_deformations(std::span<const Eigen::MatrixX3d> samples, int modes) {
  const int n = static_cast<int>(samples.size());
  if (n < 2) throw Error(ErrorKind::kInsufficientSamples, "pca needs at least two samples");
  const auto k = samples.front().rows();
  const int dim = static_cast<int>(3 * k);
  if (modes < 1) throw Error(ErrorKind::kInvalidArgument, "pca needs at least one mode");
  if (modes > std::min(n - 1, dim)) {
    throw Error(ErrorKind::kInsufficientSamples,
                std::to_string(modes) + " modes need more than " + std::to_string(n) + " samples");
  }
  Eigen::MatrixXd x(n, dim);
  for (int i = 0; i < n; ++i) {
    if (samples[i].rows() != k) {
      throw Error(ErrorKind::kDimensionMismatch, "pca samples differ in handle count");
    }
    for (Eigen::Index r = 0; r < k; ++r) {
      for (int c = 0; c < 3; ++c) x(i, 3 * r + c) = samples[i](r, c);
    }
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);

  PcaResult out;
  out.mean.resize(k, 3);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (int c = 0; c < 3; ++c) out.mean(r, c) = mean[3 * r + c];
  }
  for (int m = 0; m < modes; ++m) {
    const int col = dim - 1 - m;
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v[big] < 0.0) v = -v;
    Eigen::MatrixX3d mode(k, 3);
    for (Eigen::Index r = 0; r < k; ++r) {
      for (int c = 0; c < 3; ++c) mode(r, c) = v[3 * r + c];
    }
    out.modes.push_back(std::move(mode));
    out.variances.push_back(std::max(eig.eigenvalues()[col], 0.0));
  }
  return out;
}

std::string pca_to_json(const PcaResult& pca) {
  json j;
  j["mean"] = offsets_json(pca.mean);
  json modes = json::array();
  for (const auto& m : pca.modes) modes.push_back(offsets_json(m));
  j["modes"] = modes;
  j["variances"] = pca.variances;
  return j.dump(2);
}

std::string offsets_to_json(const Eigen::MatrixX3d& offsets) {
  json j;
  j["offsets"] = offsets_json(offsets);
  return j.dump();
}

Eigen::MatrixX3d offsets_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    const auto rows = j.at("offsets").get<std::vector<std::vector<double>>>();
    Eigen::MatrixX3d out(static_cast<Eigen::Index>(rows.size()), 3);
    for (size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != 3) throw Error(ErrorKind::kParse, "offset rows need three values");
      for (int c = 0; c < 3; ++c) out(static_cast<Eigen::Index>(r), c) = rows[r][c];
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("offsets json: ") + e.what());
  }
}

Eigen::MatrixX3d load_offsets(const std::filesystem::path& path) {
  return offsets_from_json(detail::read_file(path));
}

void save_offsets(const Eigen::MatrixX3d& offsets, const std::filesystem::path& path) {
  detail::write_file(path, offsets_to_json(offsets));
}

}  // namespace handlefit
