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


#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include <json.hpp>

#include "cli.hpp"
#include "handlefit/mesh.hpp"
#include "handlefit/refine.hpp"
#include "handlefit/synthetic.hpp"
#include "support/pca_fixture.hpp"

namespace handlefit {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = tools::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("handlefit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_mesh(const TriMesh& m, const std::string& name = "mesh.obj") {
    save_obj(m, path(name));
    return path(name);
  }

  fs::path dir_;
};

TEST_F(CliTest, InitHandles) {
  const std::string mesh = write_mesh(tetrahedron());
  const CliRun r = run({"init-handles", "--mesh", mesh, "--k", "2", "--out", path("h.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const HandleMap h = load_handle_map(path("h.json"));
  ASSERT_EQ(h.handle_count(), 2);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(h.weights.row(k).sum(), 1.0, 1e-9);

  EXPECT_EQ(run({"init-handles", "--mesh", mesh, "--k", "0", "--out", path("z.json")}).code, 2);

  const std::string ico = write_mesh(icosphere(2), "ico.obj");
  ASSERT_EQ(run({"init-handles", "--mesh", ico, "--k", "16", "--out", path("h16.json")}).code, 0);
  std::vector<int> seeds = load_handle_map(path("h16.json")).seeds;
  std::sort(seeds.begin(), seeds.end());
  EXPECT_EQ(std::unique(seeds.begin(), seeds.end()) - seeds.begin(), 16);
}

TEST_F(CliTest, DeformRoundTrips) {
  const TriMesh m = icosphere(2);
  const std::string mesh = write_mesh(m);
  ASSERT_EQ(run({"init-handles", "--mesh", mesh, "--k", "8", "--out", path("h.json")}).code, 0);
  auto deform_with = [&](const Eigen::MatrixX3d& o) {
    save_offsets(o, path("o.json"));
    const CliRun r = run({"deform", "--mesh", mesh, "--handles", path("h.json"), "--offsets",
                       path("o.json"), "--out", path("out.obj")});
    EXPECT_EQ(r.code, 0) << r.err;
    return load_obj(path("out.obj"));
  };
  EXPECT_LT((deform_with(Eigen::MatrixX3d::Zero(8, 3)).vertices - m.vertices).cwiseAbs().maxCoeff(),
            1e-7);
  const Eigen::RowVector3d o(0.5, 0, -0.25);
  Eigen::MatrixX3d moved = m.vertices;
  moved.rowwise() += o;
  EXPECT_LT((deform_with(o.replicate(8, 1)).vertices - moved).cwiseAbs().maxCoeff(), 1e-9);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  Eigen::MatrixX3d rand(8, 3);
  for (Eigen::Index i = 0; i < rand.size(); ++i) rand.data()[i] = u(rng);
  const TriMesh cli = deform_with(rand);
  const DeformSystem sys = DeformSystem::build(load_obj(mesh), load_handle_map(path("h.json")));
  EXPECT_EQ(format_obj(cli), format_obj(deform(sys, rand)));
}

TEST_F(CliTest, DeformReportsWrongHandleCount) {
  const std::string mesh = write_mesh(icosphere(1));
  ASSERT_EQ(run({"init-handles", "--mesh", mesh, "--k", "4", "--out", path("h.json")}).code, 0);
  save_offsets(Eigen::MatrixX3d::Zero(3, 3), path("o.json"));
  const CliRun r = run({"--json", "deform", "--mesh", mesh, "--handles", path("h.json"), "--offsets",
                     path("o.json"), "--out", path("out.obj")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.out)["error"], "dimension mismatch");
}

TEST_F(CliTest, Gradcheck) {
  const CliRun ok = run({"gradcheck", "--seed", "0"});
  EXPECT_EQ(ok.code, 0);
  const json j = json::parse(ok.out);
  EXPECT_TRUE(j.contains("max_rel_err_htilde"));
  EXPECT_TRUE(j.contains("max_rel_err_a"));
  EXPECT_TRUE(j["pass"].get<bool>());
  EXPECT_EQ(run({"gradcheck", "--seed", "0", "--corrupt-backward"}).code, 1);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"deform", "--mesh", "x.obj"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, RefineSyntheticProject) {
  const std::string project = path("proj");
  ASSERT_EQ(run({"synth", "--out", project, "--subdivisions", "1", "--handles", "5", "--frames",
                 "2", "--size", "64", "--seed", "2", "--cameras", "--perturb-deg", "10"})
                .code,
            0);
  std::ofstream(path("cfg.json")) << R"({"iterations": 80})";
  const CliRun r = run({"--json", "refine", "--project", project, "--config", path("cfg.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = json::parse(r.out);
  EXPECT_LT(report["final_total"].get<double>(), 0.8 * report["initial_total"].get<double>());
  EXPECT_TRUE(fs::exists(fs::path(project) / "output" / "report.json"));
  EXPECT_TRUE(fs::exists(fs::path(project) / "output" / "frame_000001.obj"));
  EXPECT_TRUE(fs::exists(fs::path(project) / "output" / "frame_000000.offsets.json"));
}

TEST_F(CliTest, RefineWithoutCameraFiles) {
  const std::string project = path("proj");
  ASSERT_EQ(run({"synth", "--out", project, "--subdivisions", "1", "--handles", "4", "--frames",
                 "2", "--size", "64"})
                .code,
            0);
  std::ofstream(path("cfg.json")) << R"({"iterations": 5})";
  EXPECT_EQ(run({"refine", "--project", project, "--config", path("cfg.json")}).code, 0);
}

TEST_F(CliTest, RefineEmptyFramesFailsFast) {
  const std::string project = path("proj");
  fs::create_directories(fs::path(project) / "frames");
  write_mesh(icosphere(1), "proj/mesh.obj");
  ASSERT_EQ(run({"init-handles", "--mesh", path("proj/mesh.obj"), "--k", "4", "--out",
                 path("proj/handles.json")})
                .code,
            0);
  const CliRun r = run({"--json", "refine", "--project", project});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(json::parse(r.out).contains("error"));
  EXPECT_FALSE(fs::exists(fs::path(project) / "output" / "report.json"));
}

TEST_F(CliTest, SingleImageMode) {
  const std::string one = path("one");
  ASSERT_EQ(run({"synth", "--out", one, "--subdivisions", "1", "--handles", "4", "--frames", "1",
                 "--size", "64", "--no-flow", "--cameras"})
                .code,
            0);
  std::ofstream(path("cfg.json")) << R"({"iterations": 10})";
  const CliRun r = run({"--json", "refine", "--project", one, "--config", path("cfg.json"),
                     "--single-image"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["terms"]["motion"], "absent");

  const std::string two = path("two");
  ASSERT_EQ(run({"synth", "--out", two, "--subdivisions", "1", "--handles", "4", "--frames", "2",
                 "--size", "64", "--cameras"})
                .code,
            0);
  EXPECT_EQ(run({"refine", "--project", two, "--config", path("cfg.json"), "--single-image"}).code, 1);
}

TEST_F(CliTest, RefineReportIsDeterministic) {
  const std::string project = path("proj");
  ASSERT_EQ(run({"synth", "--out", project, "--subdivisions", "1", "--handles", "5", "--frames",
                 "3", "--size", "64", "--cameras"})
                .code,
            0);
  std::ofstream(path("cfg.json")) << R"({"iterations": 30, "multiplex": {"count": 2}, "seed": 4})";
  ASSERT_EQ(run({"refine", "--project", project, "--config", path("cfg.json"), "--out", path("a")}).code, 0);
  ASSERT_EQ(run({"refine", "--project", project, "--config", path("cfg.json"), "--out", path("b"),
                 "--threads", "3"})
                .code,
            0);
  EXPECT_EQ(slurp(path("a/report.json")), slurp(path("b/report.json")));
  EXPECT_EQ(slurp(path("a/frame_000002.obj")), slurp(path("b/frame_000002.obj")));
}

TEST_F(CliTest, Pca) {
  const testing::PlantedModes planted = testing::planted_modes(4, 30, 9);
  fs::create_directories(dir_ / "defs");
  for (size_t i = 0; i < planted.samples.size(); ++i) {
    save_offsets(planted.samples[i], dir_ / "defs" / ("s" + std::to_string(100 + i) + ".json"));
  }
  std::ofstream(dir_ / "defs" / "notes.json") << R"({"comment": "ignored"})";
  const CliRun r = run({"pca", "--deformations", path("defs"), "--modes", "2", "--out", path("pca.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  ASSERT_EQ(j["variances"].size(), 2u);
  EXPECT_NEAR(j["variances"][0].get<double>(), planted.var_a, 1e-9);
  EXPECT_EQ(json::parse(slurp(path("pca.json"))), j);
  EXPECT_EQ(run({"pca", "--deformations", path("defs"), "--modes", "40"}).code, 1);
}

}  // namespace
}  // namespace handlefit
