#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli_app.hpp"
#include "mission_fixtures.hpp"
#include "test_support.hpp"

using namespace lakekeeper;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string write_config(const testkit::TempDir& dir) {
  const auto path = (dir / "mission.json").string();
  std::ofstream(path) << nlohmann::json(testkit::compact_mission()).dump(2);
  return path;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  const auto r = run_cli({"plan", "x.geojson", "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
  EXPECT_EQ(run_cli({"plan", "x.geojson", "--capacity", "-1"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, ConfigErrorsExitTwo) {
  testkit::TempDir dir("cli_cfg");
  EXPECT_EQ(run_cli({"mission", "--headless", "--config", (dir / "missing.json").string()}).code, 2);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(run_cli({"synth", "--config", (dir / "broken.json").string(), "--out", (dir / "t").string()}).code, 2);
  EXPECT_EQ(run_cli({"mission", "--config", write_config(dir)}).code, 2);  // needs --headless
  EXPECT_EQ(run_cli({"plan", (dir / "none.geojson").string()}).code, 2);
}

TEST(Cli, DiffPrintsMeanHeight) {
  testkit::TempDir dir("cli_diff");
  const GridSpec g{{0, 0, 0}, 0.5, 4, 4};
  esri::write(RasterD(g, 3.2), (dir / "pre.asc").string());
  esri::write(RasterD(g, 4.0), (dir / "post.asc").string());
  const auto r = run_cli({"diff", (dir / "pre.asc").string(), (dir / "post.asc").string(), "--out",
                          (dir / "h.asc").string(), "--clusters", (dir / "c.geojson").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "mean weed height: 0.800 m\n");
  EXPECT_EQ(read_clusters(dir / "c.geojson").size(), 1u);
  EXPECT_NEAR(esri::read((dir / "h.asc").string()).at(1, 1), 0.8, 1e-9);
  EXPECT_EQ(run_cli({"diff", (dir / "pre.asc").string(), (dir / "nope.asc").string()}).code, 2);
}

TEST(Cli, ConfigRoundTrips) {
  testkit::TempDir dir("cli_config");
  const auto r = run_cli({"config", "--seed", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = nlohmann::json::parse(r.out).get<MissionConfig>();
  EXPECT_EQ(c.sonar_seed, 7u);
  std::ofstream(dir / "c.json") << r.out;
  EXPECT_EQ(run_cli({"config", "--config", (dir / "c.json").string()}).out, r.out);
}

TEST(Cli, PlanWithCapacity) {
  testkit::TempDir dir("cli_plan");
  RasterD h(GridSpec{{0, 0, 0}, 0.5, 60, 40}, 0.0);
  for (int r = 4; r < 12; ++r)
    for (int c = 4; c < 30; ++c) h.at(c, r) = 0.8;
  for (int r = 20; r < 36; ++r)
    for (int c = 36; c < 56; ++c) h.at(c, r) = 1.1;
  write_clusters(extract_clusters(WeedHeightMap{h, "a", "b"}, 1.0, 1.0), dir / "c.geojson");
  const auto r = run_cli({"plan", (dir / "c.geojson").string(), "--capacity", "25", "--station", "-5,10", "--out",
                          (dir / "plan.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(dir / "plan.json");
  const HarvestPlan p = plan_from_json(nlohmann::json::parse(f));
  PlannerConfig pc;
  pc.unload_station = {-5, 10, 0};
  pc.capacity = 25;
  EXPECT_EQ(check_plan(p, pc), std::nullopt);
  EXPECT_GE(p.unload_count(), 5u);  // about 130 m^3 of load at 25 m^3 per trip
  EXPECT_EQ(run_cli({"plan", (dir / "c.geojson").string(), "--station", "nowhere"}).code, 2);
  EXPECT_EQ(run_cli({"plan", (dir / "c.geojson").string(), "--capacity", "0.5", "--out", (dir / "p2.json").string()}).code, 1);
}

TEST(Cli, SynthSurveyProcessPipeline) {
  testkit::TempDir dir("cli_pipe");
  const std::string cfg = write_config(dir);
  auto r = run_cli({"synth", "--config", cfg, "--out", (dir / "truth").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"survey", "--config", cfg, "--truth", (dir / "truth").string(), "--out", (dir / "pings.ndjson").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"process", (dir / "pings.ndjson").string(), "--config", cfg, "--out", (dir / "proc").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("2 clusters"), std::string::npos) << r.out;
  for (const char* f : {"bathy.asc", "intensity.asc", "canopy_proxy.asc", "classification.asc", "classification.json",
                        "clusters.geojson"})
    EXPECT_TRUE(std::filesystem::exists(dir / "proc" / f)) << f;
}

TEST(Cli, HeadlessMissionWritesRunDirectory) {
  testkit::TempDir dir("cli_mission");
  const auto r = run_cli({"mission", "--headless", "--config", write_config(dir), "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(dir / "run" / "report.json");
  const auto report = nlohmann::json::parse(f);
  EXPECT_EQ(report["clusters_before"], 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "events.ndjson"));
}

TEST(Cli, RunDirectoryFromEnvironment) {
  testkit::TempDir dir("cli_env");
  ::setenv("LAKEKEEPER_RUN_DIR", (dir / "from_env").string().c_str(), 1);
  const auto r = run_cli({"mission", "--headless", "--config", write_config(dir)});
  ::unsetenv("LAKEKEEPER_RUN_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "from_env" / "report.json"));
}

TEST(Cli, InstalledBinaryExitCodes) {
  const char* bin = std::getenv("LAKEKEEPER_CLI");
  if (!bin) GTEST_SKIP() << "LAKEKEEPER_CLI not set";
  const std::string exe = std::string("\"") + bin + "\"";
  EXPECT_EQ(WEXITSTATUS(std::system((exe + " --help > /dev/null").c_str())), 0);
  EXPECT_EQ(WEXITSTATUS(std::system((exe + " plan x --bogus > /dev/null 2>&1").c_str())), 2);
}
