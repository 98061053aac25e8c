#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <sccs/io.hpp>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sccs_io_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(sccs::io::fmt(0.1), "0.1");
  EXPECT_EQ(sccs::io::fmt(1e-6), "1e-06");
  EXPECT_EQ(sccs::io::fmt(3.0), "3");
  EXPECT_EQ(std::stod(sccs::io::fmt(0.1 + 0.2)), 0.1 + 0.2);
  EXPECT_EQ(sccs::io::fmt(std::nan("")), "nan");
  EXPECT_EQ(sccs::io::fmt(-INFINITY), "-inf");
  EXPECT_EQ(sccs::io::fmt(std::optional<double>{}), "");
}

TEST(TraceCsv, HeaderAndRows) {
  const auto spec = sccs::build_seeding_spec({3, 2, 0.7, 0.5, 0.5}, 0.4, 1e-4);
  sccs::SeOptions opt;
  opt.max_iter = 4;
  const auto tr = sccs::run_evolution(spec, sccs::EnsembleKind::GaussianIID, opt);
  std::ostringstream out;
  sccs::io::write_trace_csv(out, tr);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,eps_1,eps_2,eps_3");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0.4,0.4,0.4");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
  const auto doc = sccs::io::trace_json(tr, 1e-4);
  EXPECT_EQ(doc["iterations"], 4);
  EXPECT_FALSE(doc["converged"].get<bool>());
  EXPECT_TRUE(doc["first_iteration_max_eps_below_10_sigma2"].is_null());
}

TEST(SweepCsv, MissingValuesAreEmpty) {
  sccs::PhasePoint ok;
  ok.sigma2 = 1e-4;
  ok.alpha_d = 0.5;
  ok.alpha_c = 0.48;
  ok.alpha_s = 0.45;
  ok.sharp = true;
  sccs::PhasePoint none;
  none.sigma2 = 2e-3;
  none.status = "error: a, b";
  std::ostringstream out;
  sccs::io::write_sweep_csv(out, {ok, none});
  EXPECT_EQ(out.str(),
            "sigma2,alpha_d,alpha_c,alpha_s,sharp,status\n"
            "1e-04,0.5,0.48,0.45,true,ok\n"
            "0.002,,,,false,error: a; b\n");
  const auto doc = sccs::io::sweep_json({ok, none});
  EXPECT_TRUE(doc[1]["alpha_c"].is_null());
  EXPECT_EQ(doc[0]["alpha_c"], 0.48);
}

TEST(Instance, FilesRoundTrip) {
  const auto dir = scratch_dir("instance");
  const auto spec = sccs::build_seeding_spec({2, 1, 0.7, 0.5, 1.0}, 0.4, 1e-4);
  const auto op = sccs::build_coupled_operator(spec, 64, 3, sccs::EnsembleKind::RowOrthogonal);
  const auto inst = sccs::gen_instance(op, spec.prior, 0.01, 4);
  sccs::io::write_instance(dir / "inst", op, inst);
  const auto header = nlohmann::json::parse(slurp(dir / "inst.json"));
  EXPECT_EQ(header["N"], 64);
  EXPECT_EQ(header["M"], op.M());
  EXPECT_EQ(header["x_file"], "inst_x.csv");
  const auto back = sccs::spec_from_json(header["spec"]);
  EXPECT_EQ(back.J, spec.J);

  std::istringstream in(slurp(dir / "inst_y.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "re,im");
  for (Eigen::Index i = 0; i < inst.y.size(); ++i) {
    ASSERT_TRUE(std::getline(in, line));
    const auto comma = line.find(',');
    EXPECT_EQ(std::stod(line.substr(0, comma)), inst.y(i).real());
    EXPECT_EQ(std::stod(line.substr(comma + 1)), inst.y(i).imag());
  }
  fs::remove_all(dir);
}

TEST(Output, CreatesParentsAndReportsFailure) {
  const auto dir = scratch_dir("nested");
  sccs::io::write_json(dir / "a" / "b.json", {{"k", 1}});
  EXPECT_TRUE(fs::exists(dir / "a" / "b.json"));
  EXPECT_THROW(sccs::io::open_output(dir / "a" / "b.json" / "c.json"), std::exception);
  fs::remove_all(dir);
}

TEST(BlockStats, OrthogonalRatiosAreOne) {
  const auto spec = sccs::build_seeding_spec({3, 2, 0.7, 0.5, 1.5}, 0.4, 1e-4);
  const auto op = sccs::build_coupled_operator(spec, 300, 1, sccs::EnsembleKind::RowOrthogonal);
  const auto stats = sccs::io::block_stats_json(op);
  EXPECT_EQ(stats.size(), 7u);
  for (const auto& b : stats) EXPECT_NEAR(b["ratio"].get<double>(), 1.0, 1e-12);
}
