#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <boost/asio.hpp>

#include "wireforce/io.hpp"

using namespace wireforce;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wireforce_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) {
    const auto err_path = dir_ / "stderr.txt";
    const std::string cmd = std::string(WIREFORCE_CLI) + " " + args + " 2>" + err_path.string();
    CliRun r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = io::read_text(err_path.string());
    return r;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string data(const std::string& name) { return std::string(WIREFORCE_DATA_DIR) + "/" + name; }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SimulateThenEstimateRecoversForce) {
  const auto sim = run("simulate " + data("scenario_midspan.json") + " -o " + path("shape.json"));
  ASSERT_EQ(sim.code, 0) << sim.err;
  ASSERT_TRUE(fs::exists(path("shape.truth.json")));
  const auto est = run("estimate " + path("shape.json") + " --truth " + path("shape.truth.json"));
  ASSERT_EQ(est.code, 0) << est.err;
  const auto report = io::parse_json(est.out, "report");
  ASSERT_FALSE(report["metrics"].empty());
  EXPECT_EQ(report["metrics"][0]["label"], "F1");
  EXPECT_LE(report["metrics"][0]["rel_l2"].get<double>(), 1e-6);
  EXPECT_LE(report["metrics"][0]["pos_diff"].get<double>(), 0.5 / 30);
  EXPECT_LE(io::vec_from(report["balance_residual"], "b").lpNorm<Eigen::Infinity>(), 1e-4);
}

TEST_F(CliTest, OutputIsByteForByteRepeatable) {
  ASSERT_EQ(run("simulate " + data("scenario_two_forces.json") + " -o " + path("a.json")).code, 0);
  ASSERT_EQ(run("simulate " + data("scenario_two_forces.json") + " -o " + path("b.json")).code, 0);
  EXPECT_EQ(io::read_text(path("a.json")), io::read_text(path("b.json")));
  const auto r1 = run("estimate " + path("a.json") + " --config " + data("config.json"));
  const auto r2 = run("estimate " + path("a.json") + " --config " + data("config.json"));
  ASSERT_EQ(r1.code, 0) << r1.err;
  EXPECT_EQ(r1.out, r2.out);
}

TEST_F(CliTest, CsvShapeWithConfigMaterial) {
  ASSERT_EQ(run("simulate " + data("scenario_midspan.json") + " -o " + path("s.json")).code, 0);
  const auto shape = io::shape_from_json(io::parse_json(io::read_text(path("s.json")), "s"));
  std::string csv = "x,y,z\n";
  char line[128];
  for (const auto& p : shape.nodes) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", p.x(), p.y(), p.z());
    csv += line;
  }
  io::write_text(path("s.csv"), csv);
  const auto r = run("estimate " + path("s.csv") + " --config " + data("config.json") + " --mode midpoint -o " +
                     path("report.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::parse_json(io::read_text(path("report.json")), "r")["mode"], "midpoint");
  EXPECT_EQ(run("estimate " + path("s.csv")).code, 1);  // no material anywhere
}

TEST_F(CliTest, TruncatedInputIsParseError) {
  ASSERT_EQ(run("simulate " + data("scenario_midspan.json") + " -o " + path("s.json")).code, 0);
  const auto text = io::read_text(path("s.json"));
  io::write_text(path("cut.json"), text.substr(0, text.size() / 2));
  const auto r = run("estimate " + path("cut.json"));
  EXPECT_EQ(r.code, 2);
  const auto err = io::parse_json(r.err, "stderr");
  EXPECT_EQ(err["error"], "ParseError");
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("estimate").code, 1);
  EXPECT_EQ(run("estimate " + path("missing.json")).code, 2);  // unreadable input counts as a parse failure
  EXPECT_EQ(run("simulate " + data("scenario_midspan.json") + " -o - --truth " + path("t.json")).code, 0);
  EXPECT_EQ(run("estimate " + path("t.json") + " --mode sideways").code, 1);
}

TEST_F(CliTest, ShapeOutOfEquilibriumViolatesAssumptions) {
  std::string csv;
  for (int k = 0; k <= 20; ++k) {
    csv += std::to_string(0.02 * k) + "," + std::to_string((k % 2) * 0.004 + (k % 3) * 0.003) + "," +
           std::to_string((k % 5) * 0.002) + "\n";
  }
  io::write_text(path("zigzag.csv"), csv);
  const auto r = run("estimate " + path("zigzag.csv") + " --config " + data("config.json"));
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_EQ(io::parse_json(r.err, "stderr")["error"], "NoUndisturbedSection");
}

TEST_F(CliTest, ServeReportsTakenPort) {
  boost::asio::io_context ioc;
  boost::asio::ip::tcp::acceptor blocker(ioc, {boost::asio::ip::make_address("127.0.0.1"), 0});
  const auto port = blocker.local_endpoint().port();
  const auto r = run("serve " + data("scenario_midspan.json") + " --port " + std::to_string(port));
  EXPECT_EQ(r.code, 5);
  EXPECT_EQ(io::parse_json(r.err, "stderr")["error"], "PortInUse");
}
