#pragma once

// The `lakekeeper` command line. Kept in a header so tests can run it
// in-process; tools/lakekeeper_cli.cpp only forwards main().

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lakekeeper/lakekeeper.hpp"
#include "lakekeeper/server.hpp"

namespace lakekeeper::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

inline std::atomic<bool>& stop_requested() {
  static std::atomic<bool> flag{false};
  return flag;
}

namespace detail {

inline MissionConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                                 std::optional<double> dt) {
  MissionConfig c = path.empty() ? reference_mission() : load_mission_config(path);
  if (seed) c.sonar_seed = *seed;
  if (dt) c.dt = *dt;
  c.validate();
  return c;
}

inline EnuPoint parse_point(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError("expected a point as east,north: " + s);
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1)), 0.0};
  } catch (const std::exception&) {
    throw ConfigError("expected a point as east,north: " + s);
  }
}

/// Run directory: explicit --out, then LAKEKEEPER_RUN_DIR, then ./run.
inline std::filesystem::path run_dir(const std::string& out) {
  if (!out.empty()) return out;
  if (const char* env = std::getenv("LAKEKEEPER_RUN_DIR"); env && *env) return env;
  return "run";
}

inline std::string fixed3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace detail

/// Runs the CLI with the given arguments (argv[0] excluded). Returns the
/// process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Lake weed survey, mapping and harvest planning toolkit", "lakekeeper"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Mission config JSON (default: built-in reference mission)");
    sub->add_option("--seed", seed, "Sonar noise seed override");
    sub->add_option("--dt", dt, "Simulation step, s")->check(CLI::PositiveNumber);
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Write the ground-truth lake of a config");
  std::string synth_out = "truth";
  synth->add_option("--out", synth_out, "Output directory");
  add_common(synth);

  // survey
  auto* survey = app.add_subcommand("survey", "Simulate a lawnmower survey over a lake");
  std::string survey_truth, survey_out = "pings.ndjson";
  survey->add_option("--truth", survey_truth, "Truth directory written by synth (default: synthesize from config)");
  survey->add_option("--out", survey_out, "Ping log (NDJSON)");
  add_common(survey);

  // process
  auto* process = app.add_subcommand("process", "Pings to bathymetry, mosaic, classification and clusters");
  std::string process_pings, process_out = ".", process_cast;
  double process_cell = 0.0;
  process->add_option("pings", process_pings, "Ping log (NDJSON)")->required();
  process->add_option("--out", process_out, "Output directory");
  process->add_option("--cast", process_cast, "Sound velocity cast CSV (default: from config)");
  process->add_option("--cell-size", process_cell, "Grid cell size, m (default: from config)");
  add_common(process);

  // diff
  auto* diff = app.add_subcommand("diff", "Weed height map from pre- and post-harvest bathymetry");
  std::string diff_pre, diff_post, diff_out, diff_clusters;
  double noise_floor = kDefaultNoiseFloor, min_area = 0.0, density = kDefaultWeedDensity;
  diff->add_option("pre", diff_pre, "Pre-harvest bathymetry (ESRI ASCII)")->required();
  diff->add_option("post", diff_post, "Post-harvest bathymetry (ESRI ASCII)")->required();
  diff->add_option("--out", diff_out, "Write the height map here (ESRI ASCII)");
  diff->add_option("--clusters", diff_clusters, "Write weed clusters here (GeoJSON)");
  diff->add_option("--noise-floor", noise_floor, "Heights below this are zeroed, m")->check(CLI::NonNegativeNumber);
  diff->add_option("--min-area", min_area, "Smallest cluster kept, m^2")->check(CLI::NonNegativeNumber);
  diff->add_option("--density", density, "Harvestable density for cluster loads")->check(CLI::Range(0.0, 1.0));

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "Harvest plan for a set of clusters");
  std::string plan_clusters, plan_out = "plan.json", plan_station, plan_start;
  PlannerConfig pc;
  plan_cmd->add_option("clusters", plan_clusters, "Clusters (GeoJSON)")->required();
  plan_cmd->add_option("--out", plan_out, "Plan JSON");
  plan_cmd->add_option("--capacity", pc.capacity, "Conveyor capacity, m^3")->check(CLI::PositiveNumber);
  plan_cmd->add_option("--cutter-width", pc.cutter_width, "Cutter width, m")->check(CLI::PositiveNumber);
  plan_cmd->add_option("--overlap", pc.lane_overlap, "Lane overlap fraction")->check(CLI::Range(0.0, 0.99));
  plan_cmd->add_option("--speed", pc.harvester_speed, "Harvester speed, m/s")->check(CLI::PositiveNumber);
  plan_cmd->add_option("--unload-time", pc.unload_time, "Unload duration, s")->check(CLI::NonNegativeNumber);
  plan_cmd->add_option("--station", plan_station, "Unload station as east,north (default 0,0)");
  plan_cmd->add_option("--start", plan_start, "Harvester start as east,north (default: station)");

  // mission
  auto* mission = app.add_subcommand("mission", "Run a mission end to end");
  bool headless = false;
  std::string mission_out;
  mission->add_flag("--headless", headless, "Run without an operator, approving every plan");
  mission->add_option("--out", mission_out, "Run directory (default: $LAKEKEEPER_RUN_DIR or ./run)");
  add_common(mission);

  // serve
  auto* serve = app.add_subcommand("serve", "Run a mission live behind the HTTP interface");
  int port = 8080;
  std::string host = "127.0.0.1", serve_out;
  int pace_ms = 20;
  bool auto_approve = false;
  serve->add_option("--port", port, "TCP port")->check(CLI::Range(1, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--pace-ms", pace_ms, "Wall-clock milliseconds between steps")->check(CLI::NonNegativeNumber);
  serve->add_flag("--auto-approve", auto_approve, "Approve plans without waiting for the operator");
  serve->add_flag("--headless", auto_approve, "Alias of --auto-approve");
  serve->add_option("--out", serve_out, "Run directory written when the mission is done");
  add_common(serve);

  // config
  auto* config_cmd = app.add_subcommand("config", "Print the effective mission config as JSON");
  add_common(config_cmd);

  std::vector<std::string> argv_store{"lakekeeper"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*config_cmd) {
      out << nlohmann::json(detail::load_config(config_path, seed, dt)).dump(2) << '\n';
    } else if (*synth) {
      const MissionConfig c = detail::load_config(config_path, seed, dt);
      const LakeTruth truth = c.scenario.synthesize();
      save_truth(truth, synth_out);
      std::ofstream(std::filesystem::path(synth_out) / "scenario.json") << nlohmann::json(c.scenario).dump(2) << '\n';
      out << "wrote truth to " << synth_out << " (canopy load volume " << detail::fixed3(canopy_load_volume(truth))
          << " m^3)\n";
    } else if (*survey) {
      const MissionConfig c = detail::load_config(config_path, seed, dt);
      const LakeTruth truth = survey_truth.empty() ? c.scenario.synthesize() : load_truth(survey_truth);
      double depth_sum = 0.0;
      for (double d : truth.bed.values()) depth_sum += d;
      const double speed_of_sound = effective_speed(c.cast, depth_sum / static_cast<double>(truth.bed.size()));
      std::mt19937_64 rng(c.sonar_seed);
      const auto pings = survey_lines(lawnmower_path(c.survey_area, c.line_spacing), c.survey_speed, c.sonar, truth,
                                      speed_of_sound, rng);
      write_ping_log(pings, survey_out);
      out << "wrote " << pings.size() << " pings to " << survey_out << '\n';
    } else if (*process) {
      MissionConfig c = detail::load_config(config_path, seed, dt);
      if (process_cell > 0) c.cell_size = process_cell;
      const SvpCast cast = process_cast.empty() ? c.cast : read_cast(process_cast);
      const auto pings = read_ping_log(process_pings);
      const auto soundings = georeference_all(pings, cast);
      const RasterD bathy = grid_soundings(soundings, c.grid());
      const WeedDetection d = detect_weeds(bathy, soundings, c);
      const std::filesystem::path dir = process_out;
      std::filesystem::create_directories(dir);
      esri::write(bathy, (dir / "bathy.asc").string());
      esri::write(d.mosaic.intensity, (dir / "intensity.asc").string());
      esri::write(d.proxy, (dir / "canopy_proxy.asc").string());
      write_classification(d.classes, dir / "classification.asc", c.thresholds);
      write_clusters(d.clusters, dir / "clusters.geojson");
      out << "processed " << pings.size() << " pings, " << soundings.size() << " soundings; mean depth "
          << detail::fixed3(mean_value(bathy)) << " m; " << d.clusters.size() << " clusters\n";
    } else if (*diff) {
      const WeedHeightMap m = diff_grids(esri::read(diff_pre), esri::read(diff_post), noise_floor, diff_pre, diff_post);
      if (!diff_out.empty()) esri::write(m.height, diff_out);
      if (!diff_clusters.empty()) write_clusters(extract_clusters(m, min_area, density), diff_clusters);
      std::optional<double> mean;
      try {
        mean = mean_height(m);
      } catch (const DomainError&) {
      }
      if (mean)
        out << "mean weed height: " << detail::fixed3(*mean) << " m\n";
      else
        out << "mean weed height: none (no cells above the noise floor)\n";
    } else if (*plan_cmd) {
      if (!plan_station.empty()) pc.unload_station = detail::parse_point(plan_station);
      const EnuPoint start = plan_start.empty() ? pc.unload_station : detail::parse_point(plan_start);
      const auto clusters = read_clusters(plan_clusters);
      const HarvestPlan p = plan(clusters, pc, start);
      if (const auto problem = check_plan(p, pc)) throw Error("planner produced an invalid plan: " + *problem);
      std::ofstream f(plan_out, std::ios::binary);
      if (!f) throw ConfigError("cannot write " + plan_out);
      f << plan_to_json(p).dump(2) << '\n';
      out << "plan: " << clusters.size() << " clusters, " << p.legs.size() << " legs, "
          << detail::fixed3(p.total_distance) << " m, " << p.unload_count() << " unloads, max load "
          << detail::fixed3(p.max_load()) << " m^3\n";
    } else if (*mission) {
      if (!headless) throw ConfigError("mission runs headless only; use `serve` for an operator-driven mission");
      const MissionConfig c = detail::load_config(config_path, seed, dt);
      const auto m = run_headless(c);
      const auto dir = detail::run_dir(mission_out);
      write_run_directory(*m, dir);
      const MissionReport& r = *m->report();
      out << "mission done in " << detail::fixed3(r.mission_time_s) << " s simulated; mean weed height "
          << (r.mean_weed_height_m ? detail::fixed3(*r.mean_weed_height_m) + " m" : std::string("n/a"))
          << "; harvested " << detail::fixed3(r.harvested_volume_m3) << " m^3; run directory " << dir.string() << '\n';
    } else if (*serve) {
      const MissionConfig c = detail::load_config(config_path, seed, dt);
      ServiceOptions opt;
      opt.dt = c.dt;
      opt.pace = std::chrono::milliseconds(pace_ms);
      opt.auto_approve = auto_approve;
      MissionService service(c, opt);
      HttpServer http(service);
      const int bound = http.start(host, port);
      service.start();
      out << "serving on http://" << host << ":" << bound << std::endl;
      stop_requested() = false;
      std::signal(SIGINT, [](int) { stop_requested() = true; });
      std::signal(SIGTERM, [](int) { stop_requested() = true; });
      bool written = false;
      std::optional<std::string> failure;
      while (!stop_requested()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        if (!written && service.done()) {
          service.write_run(detail::run_dir(serve_out));
          written = true;
        }
        if (!failure && (failure = service.error())) err << "mission stopped: " << *failure << std::endl;
      }
      http.stop();
      service.stop();
      if (failure) return kExitRuntime;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace lakekeeper::cli
