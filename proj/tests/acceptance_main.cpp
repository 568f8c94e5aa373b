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


// Acceptance suite: one PASS/FAIL line per criterion with its tolerance and
// runtime budget. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "handlefit/deform.hpp"
#include "handlefit/losses.hpp"
#include "handlefit/mesh.hpp"
#include "handlefit/observations.hpp"
#include "handlefit/refine.hpp"
#include "handlefit/sparse_solver.hpp"
#include "handlefit/synthetic.hpp"
#include "support/gradient_trials.hpp"
#include "support/oracles.hpp"
#include "support/pca_fixture.hpp"

namespace handlefit {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Eigen::MatrixX3d uniform_block(int rows, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixX3d m(rows, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

DeformSystem sphere_system(int subdivisions, int k) {
  const TriMesh m = icosphere(subdivisions);
  return DeformSystem::build(m, build_handle_map(m, farthest_point_sample(m, k)));
}

Outcome laplacian_correctness() {
  double worst_sym = 0.0, worst_row = 0.0, worst_const = 0.0;
  bool pass = true;
  for (const TriMesh& m : {tetrahedron(), icosphere(2), icosphere(3)}) {
    const Eigen::MatrixXd l = cotangent_laplacian(m).matrix.toDense();
    const double tol = 1e-9 * l.cwiseAbs().maxCoeff();
    const double sym = (l - l.transpose()).cwiseAbs().maxCoeff();
    const double row = l.rowwise().sum().cwiseAbs().maxCoeff();
    const double cst = (l * Eigen::MatrixXd::Constant(l.cols(), 3, 2.5)).cwiseAbs().maxCoeff();
    pass = pass && sym <= tol && row <= tol && cst <= 1e-9 * m.vertex_count();
    worst_sym = std::max(worst_sym, sym / l.cwiseAbs().maxCoeff());
    worst_row = std::max(worst_row, row / l.cwiseAbs().maxCoeff());
    worst_const = std::max(worst_const, cst);
  }
  return {pass, "N=4,162,642; asym " + fmt("%.1e", worst_sym) + ", row sum " + fmt("%.1e", worst_row) +
                    " (tol 1e-9 max|L|), |L 1| " + fmt("%.1e", worst_const)};
}

Outcome deformation_identities() {
  std::mt19937_64 rng(1);
  bool pass = true;
  double fixed = 0.0, trans = 0.0, lin = 0.0;
  for (int sub : {2, 3}) {
    const DeformSystem sys = sphere_system(sub, 8);
    const double bbox = sys.template_mesh().bbox_diagonal();
    const Eigen::MatrixX3d& t = sys.template_mesh().vertices;
    const double f = (deform(sys, Eigen::MatrixX3d::Zero(8, 3)).vertices - t).cwiseAbs().maxCoeff();
    const Eigen::RowVector3d o = uniform_block(1, 0.3, rng).row(0);
    Eigen::MatrixX3d moved = t;
    moved.rowwise() += o;
    const double tr = (deform(sys, o.replicate(8, 1)).vertices - moved).cwiseAbs().maxCoeff();
    const Eigen::MatrixX3d h1 = sys.targets(uniform_block(8, 0.1 * bbox, rng));
    const Eigen::MatrixX3d h2 = sys.targets(uniform_block(8, 0.1 * bbox, rng));
    const double a = 0.37;
    const double li = (sys.solve_for_targets(a * h1 + (1 - a) * h2) -
                       (a * sys.solve_for_targets(h1) + (1 - a) * sys.solve_for_targets(h2)))
                          .cwiseAbs()
                          .maxCoeff();
    pass = pass && f < 1e-7 * bbox && tr < 1e-9 * bbox && li < 1e-9 * bbox;
    fixed = std::max(fixed, f / bbox);
    trans = std::max(trans, tr / bbox);
    lin = std::max(lin, li / bbox);
  }
  return {pass, "fixed point " + fmt("%.1e", fixed) + " bbox (tol 1e-7), translation " +
                    fmt("%.1e", trans) + ", linearity " + fmt("%.1e", lin) + " bbox (tol 1e-9)"};
}

Outcome fold_equivalence() {
  const DeformSystem sys = sphere_system(2, 8);
  const double bbox = sys.template_mesh().bbox_diagonal();
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::MatrixX3d h = sys.targets(uniform_block(8, 0.1 * bbox, rng));
    worst = std::max(worst,
                     (sys.solve_for_targets(h) - sys.vertices_for_targets(h)).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-8 * bbox,
          "100 draws, max |solve - (C + D H)| " + fmt("%.1e", worst / bbox) + " bbox (tol 1e-8)"};
}

Outcome backward_gradcheck() {
  double worst_h = 0.0, worst_a = 0.0;
  bool pass = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GradcheckReport r = gradcheck(seed);
    pass = pass && r.pass && r.vertex_count <= 20 && r.max_rel_err_htilde < 1e-5 &&
           r.max_rel_err_a < 1e-5;
    worst_h = std::max(worst_h, r.max_rel_err_htilde);
    worst_a = std::max(worst_a, r.max_rel_err_a);
  }
  return {pass, "20 seeds, max rel err dH " + fmt("%.1e", worst_h) + ", dA " + fmt("%.1e", worst_a) +
                    " (tol 1e-5)"};
}

Outcome loss_gradients() {
  struct Term {
    const char* name;
    double (*trial)(std::uint64_t);
  };
  const Term terms[] = {{"camera", testing::projection_trial},
                        {"motion", testing::motion_trial},
                        {"keypoint", testing::keypoint_trial},
                        {"rigidity", testing::rigidity_trial},
                        {"boundary", testing::boundary_trial}};
  bool pass = true;
  std::string detail = "100 trials each, max rel err:";
  for (const Term& t : terms) {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) worst = std::max(worst, t.trial(1000 + s));
    pass = pass && worst < 1e-4;
    detail += std::string(" ") + t.name + " " + fmt("%.1e", worst);
  }
  return {pass, detail + " (tol 1e-4)"};
}

FlowField constant_flow(int w, int h, float u, float v) {
  FlowField f{w, h, {}};
  for (int i = 0; i < w * h; ++i) {
    f.data.push_back(u);
    f.data.push_back(v);
  }
  return f;
}

Outcome motion_exactness() {
  const TriMesh m = icosphere(1);
  WeakPerspectiveCamera cam;
  cam.scale = 10.0;
  cam.translation = {16.0, 16.0};
  const Mask full{32, 32, std::vector<std::uint8_t>(32 * 32, 1)};
  const double a =
      motion_loss(m.vertices, m.vertices, m.faces, cam, cam,
                  FrameObservation::create(full, std::nullopt, constant_flow(32, 32, 0, 0)))
          .value;
  WeakPerspectiveCamera moved = cam;
  moved.translation += Eigen::Vector2d(3, 4);
  const double b =
      motion_loss(m.vertices, m.vertices, m.faces, cam, moved,
                  FrameObservation::create(full, std::nullopt, constant_flow(32, 32, 3, 4)))
          .value;
  Eigen::MatrixX3d vt(2, 3);
  vt << 2, 2, 0, 5, 5, 0;
  Eigen::MatrixX3d vt1 = vt;
  vt1.row(0) += Eigen::RowVector3d(1, 1, 0);
  const WeakPerspectiveCamera unit;
  const double c = motion_loss(vt, vt1, unit, unit, constant_flow(8, 8, 0, 0), {1, 1}).value;
  return {a == 0.0 && b == 0.0 && c == 1.0,
          "values " + fmt("%.17g", a) + ", " + fmt("%.17g", b) + ", " + fmt("%.17g", c) +
              " (expected exactly 0, 0, 1)"};
}

Outcome brute_force_agreement() {
  std::string detail;
  bool pass = true;

  // Sparse factorization vs dense Gaussian elimination and full-pivot LU.
  const DeformSystem sys = sphere_system(2, 8);
  const Eigen::MatrixXd w = sys.normal_matrix().matrix().toDense();
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd rhs = uniform_block(sys.vertex_count(), 1.0, rng);
  double solve_err = 0.0;
  for (SolverKind kind : {SolverKind::kCholesky, SolverKind::kConjugateGradient}) {
    const Eigen::MatrixXd x = solve_multi(factorize(sys.normal_matrix(), {kind}), rhs);
    for (const Eigen::MatrixXd& ref : {dense_oracle_solve(w, rhs), testing::reference_solve(w, rhs)}) {
      solve_err = std::max(solve_err, (x - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff());
    }
  }
  pass = pass && solve_err < 1e-8;
  detail += "solve rel " + fmt("%.1e", solve_err) + " (tol 1e-8)";

  // Boundary outer term vs the double loop, bit for bit.
  int outer_mismatch = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const FrameObservation obs =
        FrameObservation::create(testing::disk_mask(48, 48, 6.0 + static_cast<double>(s)));
    std::mt19937_64 r(s);
    std::uniform_real_distribution<double> u(0.0, 47.0);
    Eigen::MatrixX3d v(40, 3);
    for (int i = 0; i < 40; ++i) v.row(i) << u(r), u(r), 0.0;
    WeakPerspectiveCamera unit;
    const double lib = boundary_loss(v, unit, obs).outer;
    if (lib != testing::brute_force_outer(v.leftCols<2>(), obs.boundary)) ++outer_mismatch;
  }
  pass = pass && outer_mismatch == 0;
  detail += "; boundary term2 mismatches " + std::to_string(outer_mismatch) + "/20";

  // Distance transform vs exhaustive search.
  int dt_mismatch = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    std::mt19937_64 r(s);
    std::bernoulli_distribution fg(s % 2 ? 0.03 : 0.3);
    Mask m{24 + static_cast<int>(s % 5), 17 + static_cast<int>(s % 3), {}};
    m.pixels.resize(static_cast<size_t>(m.width) * m.height);
    for (auto& p : m.pixels) p = fg(r) ? 1 : 0;
    m.pixels[s] = 1;
    if (distance_transform(m).values != testing::brute_force_distance(m)) ++dt_mismatch;
  }
  pass = pass && dt_mismatch == 0;
  detail += "; distance transform mismatches " + std::to_string(dt_mismatch) + "/20";

  // Z-buffer visibility vs per-triangle depth tests.
  WeakPerspectiveCamera cam;
  cam.scale = 10.0;
  cam.translation = {16.0, 16.0};
  const TriMesh stack = testing::stacked_triangles(0.0, 2.0);
  const auto vis = vertex_visibility(stack, cam, 32, 32);
  const bool vis_ok = vis == testing::brute_force_visibility(stack.vertices, stack.faces, cam, 32, 32) &&
                      vis == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0};
  pass = pass && vis_ok;
  detail += std::string("; two-triangle visibility ") + (vis_ok ? "agrees" : "differs");
  return {pass, detail};
}

Outcome sequence_recovery() {
  SyntheticOptions o;  // icosphere-162, K = 8, 3 frames 15 deg apart, 128 px
  o.seed = 0;
  const SyntheticScene scene = make_synthetic_scene(o);
  std::vector<WeakPerspectiveCamera> cams;
  for (const auto& f : scene.truth) cams.push_back(perturb_azimuth(f.camera, 10.0));
  RefineConfig c;
  c.iterations = 1000;
  c.lr = {1e-3, 1e-3, 1e-2, 1e-3};
  const RefineResult r = refine(initial_sequence(scene, cams), c);

  double kp_err = 0.0;
  for (int f = 0; f < scene.options.frames; ++f) {
    const Eigen::MatrixX3d v = scene.system->vertices_for_offsets(r.state.frames[f].offsets);
    kp_err = std::max(kp_err, mean_keypoint_error(v, r.state.frames[f].camera,
                                                  *scene.observations[f].keypoints));
  }
  const double limit = 0.02 * scene.options.width;
  const double ratio = r.report.final_breakdown.motion / r.report.initial.motion;
  return {kp_err < limit && ratio <= 0.2,
          "keypoint error " + fmt("%.3f", kp_err) + " px (tol " + fmt("%.2f", limit) +
              "), L_motion final/initial " + fmt("%.3f", ratio) + " (tol 0.20)"};
}

Outcome camera_multiplex() {
  int hits = 0;
  double worst = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    SyntheticOptions o;
    o.seed = 100 + static_cast<std::uint64_t>(seed);
    o.frames = 1;
    o.base_azimuth_deg = 170.0;
    o.with_flow = false;
    const SyntheticScene scene = make_synthetic_scene(o);
    const SequenceState seq = initial_sequence(scene, {perturb_azimuth(scene.truth[0].camera, -170.0)});
    RefineConfig c;
    c.iterations = 400;
    c.multiplex = 8;
    const RefineResult r = refine_single_image(seq, c);
    const double err =
        rotation_angle_between(r.state.frames[0].camera, scene.truth[0].camera) * 180.0 / std::numbers::pi;
    worst = std::max(worst, err);
    if (err <= 45.0) ++hits;
  }
  return {hits >= 9, std::to_string(hits) + "/10 survivors within 45 deg of GT (need 9), worst " +
                         fmt("%.1f", worst) + " deg"};
}

Outcome pca_recovery() {
  const testing::PlantedModes planted = testing::planted_modes(8, 100, 42);
  const PcaResult p = pca_deformations(planted.samples, 2);
  const double d1 = testing::sign_free_distance(p.modes[0], planted.m1);
  const double d2 = testing::sign_free_distance(p.modes[1], planted.m2);
  const double v1 = std::abs(p.variances[0] / planted.var_a - 1.0);
  const double v2 = std::abs(p.variances[1] / planted.var_b - 1.0);
  return {d1 < 1e-6 && d2 < 1e-6 && v1 < 0.02 && v2 < 0.02,
          "mode error " + fmt("%.1e", std::max(d1, d2)) + " (tol 1e-6), variance rel " +
              fmt("%.1e", std::max(v1, v2)) + " (tol 0.02)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome refine_determinism() {
  const fs::path dir = fs::temp_directory_path() / "handlefit_acceptance_determinism";
  fs::remove_all(dir);
  std::ostringstream out, err;
  auto cli = [&](const std::vector<std::string>& args) { return tools::run_cli(args, out, err); };
  bool ok = cli({"synth", "--out", (dir / "project").string(), "--frames", "3", "--seed", "7",
                 "--cameras", "--perturb-deg", "10"}) == 0;
  std::ofstream(dir / "config.json") << R"({"iterations": 150, "multiplex": {"count": 2}, "seed": 7})";
  for (const char* run : {"a", "b"}) {
    ok = ok && cli({"refine", "--project", (dir / "project").string(), "--config",
                    (dir / "config.json").string(), "--out", (dir / run).string()}) == 0;
  }
  const std::string a = slurp(dir / "a" / "report.json");
  const bool same = ok && !a.empty() && a == slurp(dir / "b" / "report.json");
  fs::remove_all(dir);
  return {same, ok ? (same ? "report.json byte-identical across two runs (" +
                                 std::to_string(a.size()) + " bytes)"
                           : "reports differ")
                   : "cli failed: " + err.str()};
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace handlefit

int main() {
  using namespace handlefit;
  const Criterion criteria[] = {
      {"laplacian-correctness", 1.0, laplacian_correctness},
      {"deformation-fixed-point-equivariance", 1.0, deformation_identities},
      {"fold-equivalence", 5.0, fold_equivalence},
      {"solver-backward-gradcheck", 30.0, backward_gradcheck},
      {"projection-and-loss-gradients", 60.0, loss_gradients},
      {"motion-loss-exactness", 1.0, motion_exactness},
      {"brute-force-oracle-agreement", 30.0, brute_force_agreement},
      {"synthetic-sequence-recovery", 120.0, sequence_recovery},
      {"camera-multiplex", 120.0, camera_multiplex},
      {"pca-recovery", 5.0, pca_recovery},
      {"refine-determinism", 60.0, refine_determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.budget_seconds;
    if (!pass) ++failures;
    std::printf("%s %-38s %s; runtime %.2f s (limit %.0f s)\n", pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures,
              std::size(criteria));
  return failures == 0 ? 0 : 1;
}
