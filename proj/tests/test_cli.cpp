#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sccs_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Exit status of `sccs <args>`, with stdout and stderr captured to files.
  int run(const std::string& args) {
    const std::string cmd = std::string("\"") + SCCS_CLI_PATH + "\" " + args + " > \"" + (dir_ / "stdout").string() +
                            "\" 2> \"" + (dir_ / "stderr").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, MmseTable) {
  ASSERT_EQ(run("mmse --rho 0.4 --varsigma-grid 0,1,10 --mc-samples 1000 -o " + path("m.csv")), 0);
  std::istringstream in(read("m.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "varsigma,mmse,mc_estimate,mc_stderr");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 8), "0,0.4,0.");
  const auto side = json::parse(read("m.csv.json"));
  EXPECT_EQ(side["tool"], "sccs");
  EXPECT_EQ(side["command"], "mmse");
  EXPECT_EQ(side["config"]["rho"], "0.4");
}

TEST_F(Cli, MmseGridErrors) {
  EXPECT_EQ(run("mmse --varsigma-grid ''"), 2);
  EXPECT_EQ(run("mmse --varsigma-grid 1,x"), 2);
  EXPECT_EQ(run("mmse --varsigma-grid logspace:0:1:3"), 2);
  EXPECT_EQ(run("mmse --varsigma-grid=-1"), 2);
  EXPECT_NE(read("stderr").find("--varsigma-grid"), std::string::npos);
  EXPECT_EQ(run("mmse --rho 1.5 --varsigma-grid 1"), 2);
}

TEST_F(Cli, FreeEntropyMaximaInSidecar) {
  ASSERT_EQ(run("free-entropy --rho 0.4 --sigma2 1e-4 --alpha 0.48 --ensemble orthogonal --points 1000 -o " +
                path("f.csv")),
            0);
  EXPECT_EQ(json::parse(read("f.csv.json"))["maxima"].size(), 2u);
  ASSERT_EQ(run("free-entropy --rho 0.4 --sigma2 1e-4 --alpha 0.7 --ensemble gaussian --points 1000 -o " +
                path("g.csv")),
            0);
  EXPECT_EQ(json::parse(read("g.csv.json"))["maxima"].size(), 1u);
  EXPECT_EQ(run("free-entropy --alpha -1"), 2);
  EXPECT_EQ(run("free-entropy --ensemble wishart"), 2);
}

TEST_F(Cli, PhaseDiagramRowsAndErrors) {
  ASSERT_EQ(run("phase-diagram --rho 0.4 --sigma2-grid 2e-3 --ensemble gaussian --points 1000 -o " + path("p.csv")), 0);
  EXPECT_EQ(read("p.csv"), "sigma2,alpha_d,alpha_c,alpha_s,sharp,status\n0.002,,,,false,no-transition\n");
  EXPECT_EQ(run("phase-diagram --sigma2-grid ''"), 2);
  EXPECT_EQ(run("phase-diagram --sigma2-grid 0"), 2);
  EXPECT_EQ(run("phase-diagram --sigma2-grid 1e-4 --threads 0"), 2);
}

TEST_F(Cli, EvolveIsDeterministic) {
  const std::string args = "evolve --L 4 --W 2 --alpha-seed 0.7 --alpha-bulk 0.55 --J 0.5 --sigma2 1e-4 --max-iter 50 -o ";
  ASSERT_EQ(run(args + path("t.csv")), 0);
  const std::string csv = read("t.csv");
  const std::string side_text = read("t.csv.json");
  ASSERT_EQ(run(args + path("t.csv")), 0);
  EXPECT_EQ(read("t.csv"), csv);
  EXPECT_EQ(read("t.csv.json"), side_text);
  const auto side = json::parse(side_text);
  EXPECT_TRUE(side["trace"].contains("converged"));
  EXPECT_TRUE(side["trace"].contains("iterations"));
}

TEST_F(Cli, EvolveNonConvergenceIsNotAnError) {
  ASSERT_EQ(run("evolve --L 3 --max-iter 1 -o " + path("t.csv")), 0);
  EXPECT_FALSE(json::parse(read("t.csv.json"))["trace"]["converged"].get<bool>());
}

TEST_F(Cli, EvolveSpecFileValidation) {
  ASSERT_EQ(run("seeding-spec --L 3 --W 2 --J 0.5 -o " + path("s.json")), 0);
  ASSERT_EQ(run("evolve --spec " + path("s.json") + " --max-iter 5 -o " + path("t.csv")), 0);
  auto doc = json::parse(read("s.json"));
  doc["gamma"][0] = 0.5;
  std::ofstream(path("bad.json")) << doc.dump();
  EXPECT_EQ(run("evolve --spec " + path("bad.json")), 2);
  EXPECT_NE(read("stderr").find("gamma must sum to 1"), std::string::npos);
  EXPECT_EQ(run("evolve --spec " + path("missing.json")), 2);
  EXPECT_EQ(run("evolve --schedule sideways"), 2);
}

TEST_F(Cli, SingleBlockEvolveMatchesUncoupled) {
  ASSERT_EQ(run("evolve --L 1 --W 1 --alpha-seed 0.6 --alpha-bulk 0.6 --sigma2 1e-4 -o " + path("one.csv")), 0);
  json spec = {{"schema", "sccs.coupling_spec"}, {"version", "v1"}, {"gamma", {1.0}}, {"alpha", {{0.6}}},
               {"J", {{1.0}}},                   {"sigma2", 1e-4},   {"rho", 0.4}};
  std::ofstream(path("u.json")) << spec.dump();
  ASSERT_EQ(run("evolve --spec " + path("u.json") + " -o " + path("u.csv")), 0);
  EXPECT_EQ(read("one.csv"), read("u.csv"));
}

TEST_F(Cli, GenMatrixStatistics) {
  ASSERT_EQ(run("gen-matrix --L 3 --W 2 --J 1.5 --N 300 --seed 5 -o " + path("orth")), 0);
  for (const auto& b : json::parse(read("orth_stats.json"))["blocks"]) EXPECT_EQ(b["ratio"], 1.0);
  EXPECT_TRUE(fs::exists(dir_ / "orth_x.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "orth_y.csv"));
  ASSERT_EQ(run("gen-matrix --L 2 --W 1 --J 1.5 --N 4096 --seed 5 --ensemble gaussian -o " + path("gauss")), 0);
  for (const auto& b : json::parse(read("gauss_stats.json"))["blocks"]) {
    EXPECT_NEAR(b["ratio"].get<double>(), 1.0, 0.05);
  }
  EXPECT_EQ(run("gen-matrix --L 10 --N 5 -o " + path("tiny")), 2);
}

TEST_F(Cli, ConfigFileReplacesFlags) {
  std::ofstream(path("cfg.json")) << R"({"rho": 0.4, "varsigma-grid": "1,10", "mc-samples": 0})";
  ASSERT_EQ(run("mmse --config " + path("cfg.json") + " -o " + path("c.csv")), 0);
  ASSERT_EQ(run("mmse --rho 0.4 --varsigma-grid 1,10 --mc-samples 0 -o " + path("d.csv")), 0);
  EXPECT_EQ(read("c.csv"), read("d.csv"));
  std::ofstream(path("nested.json")) << R"({"mmse": {"rho": 0.4, "varsigma-grid": "1,10", "mc-samples": 0}})";
  ASSERT_EQ(run("mmse --config " + path("nested.json") + " -o " + path("e.csv")), 0);
  EXPECT_EQ(read("e.csv"), read("d.csv"));
  std::ofstream(path("broken.json")) << "{";
  EXPECT_EQ(run("mmse --config " + path("broken.json")), 2);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("mmse --no-such-flag"), 2);
  EXPECT_EQ(run("--help"), 0);
}
