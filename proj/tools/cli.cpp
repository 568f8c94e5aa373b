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

#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>

#include <CLI11.hpp>
#include <json.hpp>

#include "handlefit/deform.hpp"
#include "handlefit/error.hpp"
#include "handlefit/mesh.hpp"
#include "handlefit/observations.hpp"
#include "handlefit/refine.hpp"
#include "handlefit/synthetic.hpp"

namespace handlefit::tools {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string frame_stem(int id) {
  char stem[32];
  std::snprintf(stem, sizeof(stem), "frame_%06d", id);
  return stem;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

// Rigid placement from the mask when no camera file is given: centre the
// template on the foreground centroid and match its radius to half the mask
// extent (or use the configured scale).
WeakPerspectiveCamera place_camera(const TriMesh& templ, const Mask& mask,
                                   const std::optional<double>& init_scale) {
  if (mask.empty()) throw Error(ErrorKind::kEmptyMask, "cannot place a camera from an empty mask");
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int xmin = mask.width, xmax = -1, ymin = mask.height, ymax = -1, count = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      sum += Eigen::Vector2d(x, y);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      ++count;
    }
  }
  const Eigen::RowVector3d center = templ.vertices.colwise().mean();
  const double radius = (templ.vertices.rowwise() - center).rowwise().norm().maxCoeff();
  const double extent = std::max(xmax - xmin, ymax - ymin) + 1.0;
  WeakPerspectiveCamera cam;
  cam.scale = init_scale ? *init_scale : 0.5 * extent / std::max(radius, 1e-12);
  cam.translation = sum / count - cam.scale * Eigen::Vector2d(center[0], center[1]);
  return cam;
}

SequenceState load_project(const fs::path& dir, const RefineConfig& config) {
  const TriMesh mesh = load_obj(dir / "mesh.obj");
  const HandleMap handles = load_handle_map(dir / "handles.json");
  const fs::path frames_dir = dir / "frames";
  if (!fs::is_directory(frames_dir)) {
    throw Error(ErrorKind::kIo, "missing frames directory " + frames_dir.string());
  }
  std::vector<int> ids;
  const std::regex pattern(R"(frame_(\d{6})\.pgm)");
  for (const auto& entry : fs::directory_iterator(frames_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) ids.push_back(std::stoi(m[1]));
  }
  if (ids.empty()) throw Error(ErrorKind::kInvalidArgument, "no frames in " + frames_dir.string());
  std::sort(ids.begin(), ids.end());

  DeformOptions options;
  options.handle_weight = config.handle_weight;
  SequenceState seq;
  seq.system = std::make_shared<const DeformSystem>(DeformSystem::build(mesh, handles, options));
  for (int id : ids) {
    const fs::path base = frames_dir / frame_stem(id);
    const fs::path flo = base.string() + ".flo";
    const fs::path kp = base.string() + ".json";
    const fs::path cam = base.string() + ".camera.json";
    Mask mask = load_mask(base.string() + ".pgm");
    std::optional<FlowField> flow;
    if (fs::exists(flo)) flow = load_flo(flo);
    std::optional<KeypointSet> keypoints;
    if (fs::exists(kp)) {
      keypoints = load_keypoints(kp);
      if (!keypoints->regressor && config.weights.kp > 0.0) {
        throw Error(ErrorKind::kMissingRegressor, kp.string() + " has no regressor");
      }
      if (keypoints->regressor && keypoints->regressor->cols() != mesh.vertex_count()) {
        throw Error(ErrorKind::kDimensionMismatch, kp.string() + " regressor width differs from mesh");
      }
    }
    FrameParameters params;
    params.offsets = Eigen::MatrixX3d::Zero(handles.handle_count(), 3);
    params.camera = fs::exists(cam) ? load_camera(cam) : place_camera(mesh, mask, config.init_scale);
    seq.frame_ids.push_back(id);
    seq.frames.push_back(params);
    seq.observations.push_back(
        FrameObservation::create(std::move(mask), std::move(keypoints), std::move(flow)));
  }
  validate_sequence(seq);
  return seq;
}

struct Common {
  bool json = false;
};

int cmd_init_handles(const std::string& mesh_path, int k, std::optional<int> first_seed,
                     const std::string& out_path, const Common& common, std::ostream& out) {
  const TriMesh mesh = load_obj(mesh_path);
  validate_mesh(mesh);
  const std::vector<int> seeds =
      first_seed ? farthest_point_sample(mesh, k, *first_seed) : farthest_point_sample(mesh, k);
  const HandleMap handles = build_handle_map(mesh, seeds);
  save_handle_map(handles, out_path);
  if (common.json) {
    out << json{{"k", k}, {"seeds", seeds}, {"out", out_path}}.dump() << "\n";
  } else {
    out << "wrote " << k << " handles to " << out_path << "\n";
  }
  return 0;
}

int cmd_deform(const std::string& mesh_path, const std::string& handles_path,
               const std::string& offsets_path, const std::string& out_path, const Common& common,
               std::ostream& out) {
  const TriMesh mesh = load_obj(mesh_path);
  const HandleMap handles = load_handle_map(handles_path);
  const Eigen::MatrixX3d offsets = load_offsets(offsets_path);
  const DeformSystem system = DeformSystem::build(mesh, handles);
  save_obj(deform(system, offsets), out_path);
  if (common.json) {
    out << json{{"vertices", mesh.vertex_count()}, {"out", out_path}}.dump() << "\n";
  } else {
    out << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, bool corrupt, std::ostream& out) {
  const GradcheckReport report =
      gradcheck(seed, corrupt ? BackwardFault::kDropWPath : BackwardFault::kNone);
  out << gradcheck_report_to_json(report) << "\n";
  return report.pass ? 0 : 1;
}

int cmd_refine(const std::string& project, const std::string& config_path,
               const std::string& out_dir, bool single_image, bool timing,
               std::optional<int> threads, const Common& common, std::ostream& out) {
  RefineConfig config;
  if (!config_path.empty()) config = refine_config_from_json(read_text(config_path));
  if (threads) config.threads = *threads;
  config.record_timing = timing;
  validate_config(config);

  const SequenceState seq = load_project(project, config);
  if (single_image && seq.frame_count() != 1) {
    throw Error(ErrorKind::kInvalidArgument, "--single-image needs a project with one frame");
  }
  const RefineResult result = single_image ? refine_single_image(seq, config) : refine(seq, config);

  const fs::path dest = out_dir.empty() ? fs::path(project) / "output" : fs::path(out_dir);
  fs::create_directories(dest);
  const std::string report =
      refine_report_to_json(result.report, result.state.frame_ids, result.state.frames);
  write_text(dest / "report.json", report + "\n");
  for (int f = 0; f < result.state.frame_count(); ++f) {
    const std::string stem = frame_stem(result.state.frame_ids[f]);
    const FrameParameters& p = result.state.frames[f];
    save_obj(deform(*result.state.system, p.offsets), dest / (stem + ".obj"));
    save_camera(p.camera, dest / (stem + ".camera.json"));
    save_offsets(p.offsets, dest / (stem + ".offsets.json"));
  }
  if (common.json) {
    out << report << "\n";
  } else {
    out << "frames " << seq.frame_count() << ", iterations " << result.report.iterations_run
        << ", loss " << result.report.initial_total << " -> " << result.report.final_total
        << "\nwrote " << dest.string() << "\n";
  }
  return 0;
}

int cmd_pca(const std::string& dir, int modes, const std::string& out_path, std::ostream& out) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Eigen::MatrixX3d> samples;
  for (const fs::path& file : files) {
    const std::string text = read_text(file);
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("offsets")) continue;
    samples.push_back(offsets_from_json(text));
  }
  const PcaResult pca = pca_deformations(samples, modes);
  const std::string text = pca_to_json(pca);
  if (!out_path.empty()) write_text(out_path, text + "\n");
  out << text << "\n";
  return 0;
}

struct SynthArgs {
  std::string out;
  int subdivisions = 2;
  int handles = 8;
  int frames = 3;
  int size = 128;
  std::uint64_t seed = 0;
  double perturb_deg = 10.0;
  bool cameras = false;
  bool no_flow = false;
  bool no_keypoints = false;
};

int cmd_synth(const SynthArgs& a, const Common& common, std::ostream& out) {
  SyntheticOptions o;
  o.subdivisions = a.subdivisions;
  o.handles = a.handles;
  o.frames = a.frames;
  o.width = a.size;
  o.height = a.size;
  o.seed = a.seed;
  o.with_flow = !a.no_flow;
  o.with_keypoints = !a.no_keypoints;
  const SyntheticScene scene = make_synthetic_scene(o);
  std::vector<WeakPerspectiveCamera> cams;
  if (a.cameras) {
    for (const auto& t : scene.truth) cams.push_back(perturb_azimuth(t.camera, a.perturb_deg));
  }
  const fs::path dir(a.out);
  write_project(scene, dir, cams);
  fs::create_directories(dir / "truth");
  for (size_t f = 0; f < scene.truth.size(); ++f) {
    const std::string stem = frame_stem(static_cast<int>(f));
    save_offsets(scene.truth[f].offsets, dir / "truth" / (stem + ".offsets.json"));
    save_camera(scene.truth[f].camera, dir / "truth" / (stem + ".camera.json"));
  }
  if (common.json) {
    out << json{{"out", a.out}, {"frames", a.frames}, {"vertices", scene.templ.vertex_count()}}.dump()
        << "\n";
  } else {
    out << "wrote synthetic project to " << a.out << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Handle-based mesh deformation and per-sequence refinement"};
  app.name("handlefit");
  app.require_subcommand(1);
  Common common;
  app.add_flag("--json", common.json, "Machine-readable JSON on stdout");

  std::string mesh, handles, out_path, offsets_path;
  int k = 0;
  std::optional<int> first_seed;
  auto* init = app.add_subcommand("init-handles", "Pick K handles by farthest point sampling");
  init->add_option("--mesh", mesh, "Template OBJ")->required();
  init->add_option("--k", k, "Number of handles")->required()->check(CLI::PositiveNumber);
  init->add_option("--out", out_path, "Output handle-map JSON")->required();
  init->add_option("--first-seed", first_seed, "First FPS seed vertex");

  auto* def = app.add_subcommand("deform", "Deform a mesh by per-handle offsets");
  def->add_option("--mesh", mesh, "Template OBJ")->required();
  def->add_option("--handles", handles, "Handle-map JSON")->required();
  def->add_option("--offsets", offsets_path, "Offsets JSON {\"offsets\": [[x,y,z],...]}")
      ->required();
  def->add_option("--out", out_path, "Output OBJ")->required();

  std::uint64_t seed = 0;
  bool corrupt = false;
  auto* grad = app.add_subcommand("gradcheck", "Check solver gradients against finite differences");
  grad->add_option("--seed", seed, "Random seed");
  grad->add_flag("--corrupt-backward", corrupt, "Drop the matrix path of the backward pass");

  std::string project, config_path, out_dir;
  bool single_image = false, timing = false;
  std::optional<int> threads;
  auto* ref = app.add_subcommand("refine", "Refine per-frame handles and cameras of a project");
  ref->add_option("--project", project, "Project directory")->required();
  ref->add_option("--config", config_path, "Refine config JSON");
  ref->add_option("--out", out_dir, "Output directory (default PROJECT/output)");
  ref->add_flag("--single-image", single_image, "Single-image mode: no motion term");
  ref->add_flag("--timing", timing, "Record wall-clock time in the report");
  ref->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string deformations;
  int modes = 0;
  auto* pca = app.add_subcommand("pca", "Principal modes of recovered handle offsets");
  pca->add_option("--deformations", deformations, "Directory of offsets JSON files")->required();
  pca->add_option("--modes", modes, "Number of modes")->required()->check(CLI::PositiveNumber);
  pca->add_option("--out", out_path, "Also write the result here");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write a synthetic project with known ground truth");
  synth->add_option("--out", synth_args.out, "Project directory")->required();
  synth->add_option("--subdivisions", synth_args.subdivisions, "Icosphere subdivisions")
      ->check(CLI::Range(0, 4));
  synth->add_option("--handles", synth_args.handles, "Handle count")->check(CLI::PositiveNumber);
  synth->add_option("--frames", synth_args.frames, "Frame count")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_args.size, "Image size in pixels")->check(CLI::Range(8, 4096));
  synth->add_option("--seed", synth_args.seed, "Random seed");
  synth->add_option("--perturb-deg", synth_args.perturb_deg, "Azimuth error of written cameras");
  synth->add_flag("--cameras", synth_args.cameras, "Write perturbed initial cameras");
  synth->add_flag("--no-flow", synth_args.no_flow, "Omit flow files");
  synth->add_flag("--no-keypoints", synth_args.no_keypoints, "Omit keypoint files");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*init) return cmd_init_handles(mesh, k, first_seed, out_path, common, out);
    if (*def) return cmd_deform(mesh, handles, offsets_path, out_path, common, out);
    if (*grad) return cmd_gradcheck(seed, corrupt, out);
    if (*ref) {
      return cmd_refine(project, config_path, out_dir, single_image, timing, threads, common, out);
    }
    if (*pca) return cmd_pca(deformations, modes, out_path, out);
    if (*synth) return cmd_synth(synth_args, common, out);
  } catch (const Error& e) {
    if (common.json) {
      out << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump()
          << "\n";
    }
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    if (common.json) out << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace handlefit::tools
