#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "perfowave/io.hpp"

namespace perfowave {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("perfowave_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  int run(const std::string& args) {
    const std::string cmd = std::string(PERFOWAVE_CLI) + " " + args + " > " + (dir_ / "log.txt").string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }

  fs::path dir_;
};

constexpr const char* kSmallRun = R"(
seed = 5
[grid]
h = 0.0625
eps = 0.25
[stepper]
dt = 0.0625
T = 0.25
snapshot_stride = 2
[initial]
u_amplitude = 0.1
)";

TEST_F(CliTest, UnknownSubcommandIsUsageError) { EXPECT_EQ(run("bogus"), 2); }

TEST_F(CliTest, MissingConfigIsUsageError) { EXPECT_EQ(run("cell --out " + (dir_ / "x").string()), 2); }

TEST_F(CliTest, CellOnNoHoleConfigGivesIdentity) {
  const auto cfg = write_config("cell.toml", "[cell]\nhole = \"none\"\n[cell_solver]\nh_c = [0.0625, 0.03125, 0.015625]\n");
  ASSERT_EQ(run("cell --config " + cfg.string() + " --out " + (dir_ / "out" / "A_star.json").string()), 0);
  const auto j = read_json(dir_ / "out" / "A_star.json");
  const auto A = matrix_from_json(j.at("tensor"));
  EXPECT_LE((A - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "config.toml"));
}

TEST_F(CliTest, BadConfigWritesErrorReport) {
  const auto cfg = write_config("bad.toml", "[grid]\nh = 0.1\n[noise1]\nalphas = [-1.0]\n");
  EXPECT_EQ(run("micro --config " + cfg.string() + " --out " + (dir_ / "out").string()), 1);
  const auto err = read_json(dir_ / "out" / "error.json");
  EXPECT_EQ(err.at("type"), "config");
  bool grid = false, noise = false;
  for (const auto& e : err.at("errors")) {
    grid = grid || e.at("field") == "grid.h";
    noise = noise || e.at("field").get<std::string>().rfind("noise1", 0) == 0;
  }
  EXPECT_TRUE(grid);
  EXPECT_TRUE(noise);
  EXPECT_EQ(read_json(dir_ / "out" / "manifest.json").at("status"), "failed");
}

TEST_F(CliTest, MicroRunIsReproducible) {
  const auto cfg = write_config("run.toml", kSmallRun);
  ASSERT_EQ(run("micro --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0);
  ASSERT_EQ(run("micro --config " + cfg.string() + " --out " + (dir_ / "b").string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "trajectory.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "noise.log"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "state_0000.bin"));
  const auto ma = read_json(dir_ / "a" / "manifest.json"), mb = read_json(dir_ / "b" / "manifest.json");
  EXPECT_EQ(ma.at("outputs"), mb.at("outputs"));
  ASSERT_EQ(run("micro --config " + cfg.string() + " --seed 6 --out " + (dir_ / "c").string()), 0);
  EXPECT_NE(sha256_file(dir_ / "a" / "trajectory.csv"), sha256_file(dir_ / "c" / "trajectory.csv"));
}

TEST_F(CliTest, MacroUsesGivenTensor) {
  const auto cfg = write_config("run.toml", kSmallRun);
  std::ofstream(dir_ / "A.json") << R"({"tensor": [[0.6, 0.0], [0.0, 0.6]], "porosity": 0.75})";
  ASSERT_EQ(run("macro --config " + cfg.string() + " --tensor " + (dir_ / "A.json").string() + " --out " +
                (dir_ / "m").string()),
            0);
  EXPECT_TRUE(fs::exists(dir_ / "m" / "trajectory.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "m" / "error.json"));
}

TEST_F(CliTest, EnergyCheckWithoutNoise) {
  const auto cfg = write_config("ec.toml", R"(
[grid]
h = 0.0625
eps = 0.25
[noise1]
alphas = [0.0]
[noise2]
alphas = [0.0]
[initial]
v_amplitude = 0.5
delta0 = 0.1
[energy_check]
dt_list = [0.0625, 0.03125, 0.015625]
threshold = 0.05
)");
  run("energy-check --config " + cfg.string() + " --out " + (dir_ / "e").string());
  const auto j = read_json(dir_ / "e" / "energy_check.json");
  EXPECT_LE(j.at("max_residual").back().get<double>(), 0.05);
  EXPECT_EQ(j.at("residual_T").size(), 3u);
}

}  // namespace
}  // namespace perfowave
