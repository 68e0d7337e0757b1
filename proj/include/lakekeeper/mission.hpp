#pragma once

// Mission orchestration: a discrete-time simulation of the survey boat (USV)
// and the harvester, driven by step(dt) and operator commands. Everything the
// mission does is published on its EventLog.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lakekeeper/backscatter.hpp"
#include "lakekeeper/bathy_pipeline.hpp"
#include "lakekeeper/esri_ascii.hpp"
#include "lakekeeper/event_log.hpp"
#include "lakekeeper/geo_core.hpp"
#include "lakekeeper/lake_model.hpp"
#include "lakekeeper/planner.hpp"
#include "lakekeeper/sonar_sim.hpp"
#include "lakekeeper/svp.hpp"

namespace lakekeeper {

enum class Phase { Idle, PreScan, Processing, Planning, AwaitingApproval, Harvesting, PostScan, Reporting, Done };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "Idle";
    case Phase::PreScan: return "PreScan";
    case Phase::Processing: return "Processing";
    case Phase::Planning: return "Planning";
    case Phase::AwaitingApproval: return "AwaitingApproval";
    case Phase::Harvesting: return "Harvesting";
    case Phase::PostScan: return "PostScan";
    case Phase::Reporting: return "Reporting";
    case Phase::Done: return "Done";
  }
  return "Idle";
}

inline Phase phase_from_string(const std::string& s) {
  for (auto p : {Phase::Idle, Phase::PreScan, Phase::Processing, Phase::Planning, Phase::AwaitingApproval,
                 Phase::Harvesting, Phase::PostScan, Phase::Reporting, Phase::Done})
    if (s == to_string(p)) return p;
  throw ConfigError("unknown phase " + s);
}

/// Legal phase transitions. AwaitingApproval -> Planning is the rejection loop.
inline bool transition_allowed(Phase from, Phase to) {
  switch (from) {
    case Phase::Idle: return to == Phase::PreScan;
    case Phase::PreScan: return to == Phase::Processing;
    case Phase::Processing: return to == Phase::Planning;
    case Phase::Planning: return to == Phase::AwaitingApproval;
    case Phase::AwaitingApproval: return to == Phase::Harvesting || to == Phase::Planning;
    case Phase::Harvesting: return to == Phase::PostScan;
    case Phase::PostScan: return to == Phase::Reporting;
    case Phase::Reporting: return to == Phase::Done;
    case Phase::Done: return false;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct MissionConfig {
  LakeScenario scenario;
  Rect survey_area{0, 0, 60, 40};
  double line_spacing = 6.0;             // m
  double survey_speed = 3.0 * kKnot;     // m/s
  SonarSpec sonar;
  SvpCast cast = SvpCast::constant(1480.0);
  PlannerConfig planner;
  EnuPoint usv_start;
  EnuPoint harvester_start;
  double cell_size = kDefaultCellSize;   // bathymetry grid, m
  double noise_floor = kDefaultNoiseFloor;
  ClassifyThresholds thresholds;
  double proxy_radius = 8.0;             // canopy proxy window half-width, m
  int mask_dilation = 1;                 // cells added around the weed mask before clustering
  double min_cluster_area = 1.0;         // m^2
  double cut_height = 0.0;               // m above bed left standing by the cutter
  double assumed_density = kDefaultWeedDensity;
  double dt = 0.5;                       // s, default step for headless runs
  std::uint64_t sonar_seed = 1;
  bool follow_usv_track = false;
  double track_segment_length = 10.0;    // m, lane length when replaying the survey track
  GeoOrigin origin{52.3727, 9.7360};

  void validate() const {
    scenario.extent.validate();
    survey_area.validate();
    sonar.validate();
    cast.validate();
    planner.validate();
    origin.validate();
    if (!(line_spacing > 0)) throw ConfigError("line_spacing must be > 0");
    if (!(survey_speed > 0)) throw ConfigError("survey_speed must be > 0");
    if (!(cell_size > 0)) throw ConfigError("cell_size must be > 0");
    if (!(noise_floor >= 0)) throw ConfigError("noise_floor must be >= 0");
    if (!(proxy_radius >= 0)) throw ConfigError("proxy_radius must be >= 0");
    if (mask_dilation < 0) throw ConfigError("mask_dilation must be >= 0");
    if (!(min_cluster_area >= 0)) throw ConfigError("min_cluster_area must be >= 0");
    if (!(cut_height >= 0)) throw ConfigError("cut_height must be >= 0");
    if (!(assumed_density >= 0 && assumed_density <= 1)) throw ConfigError("assumed_density must be in [0, 1]");
    if (!(dt > 0)) throw ConfigError("dt must be > 0");
    if (!(track_segment_length > 0)) throw ConfigError("track_segment_length must be > 0");
    const GridSpec& e = scenario.extent;
    for (const EnuPoint& p : {survey_area.to_polygon()[0], survey_area.to_polygon()[2], usv_start})
      if (!e.contains(p)) throw ConfigError("survey area and USV start must lie inside the lake extent");
  }

  /// Bathymetry grid: the lake extent resampled at cell_size.
  GridSpec grid() const {
    const GridSpec& e = scenario.extent;
    return {e.origin, cell_size, static_cast<int>(std::floor(e.width() / cell_size + 1e-9)),
            static_cast<int>(std::floor(e.height() / cell_size + 1e-9))};
  }
};

inline void to_json(nlohmann::json& j, const ClassifyThresholds& t) {
  j = nlohmann::json{{"object_db", t.object_db}, {"weed_db", t.weed_db}, {"height_m", t.height_m}};
}
inline void from_json(const nlohmann::json& j, ClassifyThresholds& t) {
  const ClassifyThresholds d;
  t.object_db = j.value("object_db", d.object_db);
  t.weed_db = j.value("weed_db", d.weed_db);
  t.height_m = j.value("height_m", d.height_m);
}

inline void to_json(nlohmann::json& j, const GeoOrigin& o) { j = nlohmann::json{{"lat0", o.lat0}, {"lon0", o.lon0}}; }
inline void from_json(const nlohmann::json& j, GeoOrigin& o) {
  o.lat0 = j.at("lat0").get<double>();
  o.lon0 = j.at("lon0").get<double>();
}

inline void to_json(nlohmann::json& j, const MissionConfig& c) {
  j = nlohmann::json{{"scenario", c.scenario},
                     {"survey_area", c.survey_area},
                     {"line_spacing", c.line_spacing},
                     {"survey_speed", c.survey_speed},
                     {"sonar", c.sonar},
                     {"cast", c.cast},
                     {"planner", c.planner},
                     {"usv_start", c.usv_start},
                     {"harvester_start", c.harvester_start},
                     {"cell_size", c.cell_size},
                     {"noise_floor", c.noise_floor},
                     {"thresholds", c.thresholds},
                     {"proxy_radius", c.proxy_radius},
                     {"mask_dilation", c.mask_dilation},
                     {"min_cluster_area", c.min_cluster_area},
                     {"cut_height", c.cut_height},
                     {"assumed_density", c.assumed_density},
                     {"dt", c.dt},
                     {"sonar_seed", c.sonar_seed},
                     {"follow_usv_track", c.follow_usv_track},
                     {"track_segment_length", c.track_segment_length},
                     {"origin", c.origin}};
}

/// Missing keys keep their defaults; the scenario is required.
inline void from_json(const nlohmann::json& j, MissionConfig& c) {
  const MissionConfig d;
  c.scenario = j.at("scenario").get<LakeScenario>();
  c.survey_area = j.value("survey_area", d.survey_area);
  c.line_spacing = j.value("line_spacing", d.line_spacing);
  c.survey_speed = j.value("survey_speed", d.survey_speed);
  c.sonar = j.value("sonar", d.sonar);
  c.cast = j.value("cast", d.cast);
  c.planner = j.value("planner", d.planner);
  c.usv_start = j.value("usv_start", d.usv_start);
  c.harvester_start = j.value("harvester_start", d.harvester_start);
  c.cell_size = j.value("cell_size", d.cell_size);
  c.noise_floor = j.value("noise_floor", d.noise_floor);
  c.thresholds = j.value("thresholds", d.thresholds);
  c.proxy_radius = j.value("proxy_radius", d.proxy_radius);
  c.mask_dilation = j.value("mask_dilation", d.mask_dilation);
  c.min_cluster_area = j.value("min_cluster_area", d.min_cluster_area);
  c.cut_height = j.value("cut_height", d.cut_height);
  c.assumed_density = j.value("assumed_density", d.assumed_density);
  c.dt = j.value("dt", d.dt);
  c.sonar_seed = j.value("sonar_seed", d.sonar_seed);
  c.follow_usv_track = j.value("follow_usv_track", d.follow_usv_track);
  c.track_segment_length = j.value("track_segment_length", d.track_segment_length);
  c.origin = j.value("origin", d.origin);
}

inline MissionConfig load_mission_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open mission config " + path.string());
  try {
    auto c = nlohmann::json::parse(f).get<MissionConfig>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid mission config " + path.string() + ": " + e.what());
  }
}

/// The reference lake: 60 x 40 m survey area over a flat 3 m bed with three
/// paraboloid weed patches, 0.2 harvestable density.
inline MissionConfig reference_mission() {
  MissionConfig c;
  c.scenario.extent = GridSpec{{-10.0, -10.0, 0.0}, 0.25, 320, 240};
  c.scenario.bed = BedParams{3.0, 0.0, 50.0};
  for (const auto& [e, n, r] : {std::tuple{15.0, 14.0, 6.0}, std::tuple{42.0, 27.0, 5.0}, std::tuple{44.0, 9.0, 4.0}})
    c.scenario.patches.push_back(WeedPatchSpec{{e, n, 0.0}, r, 1.45, 0.05, kDefaultWeedDensity});
  c.scenario.seed = 2024;
  c.survey_area = Rect{0.0, 0.0, 60.0, 40.0};
  c.cast = SvpCast{{{0.0, 1481.0}, {3.0, 1480.2}, {6.0, 1479.0}}, {}};
  c.planner.unload_station = {-5.0, 20.0, 0.0};
  c.planner.unload_time = 120.0;
  c.usv_start = {0.0, 0.0, 0.0};
  c.harvester_start = {-5.0, 20.0, 0.0};
  c.sonar_seed = 7;
  return c;
}

// ---------------------------------------------------------------------------
// Single-survey weed detection
// ---------------------------------------------------------------------------

struct WeedDetection {
  IntensityMosaic mosaic;
  RasterD proxy;  // canopy height proxy, m
  ClassificationMap classes;
  std::vector<WeedCluster> clusters;
};

/// Weed detection from one survey: canopy proxy from the bathymetry, rule
/// classification with the intensity mosaic, dilated weed mask clustered with
/// proxy heights and the assumed harvestable density.
inline WeedDetection detect_weeds(const RasterD& bathy, const std::vector<Sounding>& soundings,
                                  const MissionConfig& config) {
  const GridSpec& g = bathy.spec();
  WeedDetection d{mosaic(soundings, g), canopy_proxy(bathy, config.proxy_radius), {}, {}};
  d.classes = classify(d.mosaic, d.proxy, config.thresholds, HeightSource::canopy_proxy);
  const auto mask = dilate(class_mask(d.classes, MaterialClass::weed), config.mask_dilation);
  d.clusters = extract_clusters_from(mask, d.proxy, RasterD(g, config.assumed_density), config.min_cluster_area);
  return d;
}

// ---------------------------------------------------------------------------
// Operator commands
// ---------------------------------------------------------------------------

enum class CommandKind { start, approve_plan, reject_plan, mark_area, request_rescan, set_unload_station };

inline const char* to_string(CommandKind k) {
  switch (k) {
    case CommandKind::start: return "start";
    case CommandKind::approve_plan: return "approve_plan";
    case CommandKind::reject_plan: return "reject_plan";
    case CommandKind::mark_area: return "mark_area";
    case CommandKind::request_rescan: return "request_rescan";
    case CommandKind::set_unload_station: return "set_unload_station";
  }
  return "start";
}

struct Command {
  CommandKind kind = CommandKind::start;
  Polygon polygon;                        // mark_area, request_rescan
  EnuPoint point;                         // set_unload_station
  std::vector<int> exclude_cluster_ids;   // reject_plan
};

struct CommandResult {
  bool accepted = false;
  std::string reason;  // set when rejected
};

namespace detail {

inline Polygon polygon_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("polygon must be an array of [east, north] pairs");
  Polygon ring;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ConfigError("polygon vertices must be [east, north] number pairs");
    ring.push_back({p[0].get<double>(), p[1].get<double>(), 0.0});
  }
  if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3 || signed_area(ring) == 0.0) throw ConfigError("polygon needs three vertices and a non-zero area");
  return ring;
}

}  // namespace detail

/// Parses {"type": ..., ...}; malformed input throws ConfigError.
inline Command command_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) throw ConfigError("command needs a string 'type'");
  const std::string type = j["type"].get<std::string>();
  Command c;
  try {
    if (type == "start") {
      c.kind = CommandKind::start;
    } else if (type == "approve_plan") {
      c.kind = CommandKind::approve_plan;
    } else if (type == "reject_plan") {
      c.kind = CommandKind::reject_plan;
      c.exclude_cluster_ids = j.value("exclude_cluster_ids", std::vector<int>{});
    } else if (type == "mark_area" || type == "request_rescan") {
      c.kind = type == "mark_area" ? CommandKind::mark_area : CommandKind::request_rescan;
      if (!j.contains("polygon")) throw ConfigError(type + " needs a polygon");
      c.polygon = detail::polygon_from_json(j["polygon"]);
    } else if (type == "set_unload_station") {
      c.kind = CommandKind::set_unload_station;
      c.point = j.at("point").get<EnuPoint>();
    } else {
      throw ConfigError("unknown command type " + type);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed command: ") + e.what());
  }
  return c;
}

inline nlohmann::json command_to_json(const Command& c) {
  nlohmann::json j{{"type", to_string(c.kind)}};
  auto ring = nlohmann::json::array();
  for (const auto& p : c.polygon) ring.push_back({p.east, p.north});
  switch (c.kind) {
    case CommandKind::reject_plan: j["exclude_cluster_ids"] = c.exclude_cluster_ids; break;
    case CommandKind::mark_area:
    case CommandKind::request_rescan: j["polygon"] = ring; break;
    case CommandKind::set_unload_station: j["point"] = c.point; break;
    default: break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MissionReport {
  double pre_mean_depth_m = 0.0;
  double post_mean_depth_m = 0.0;
  std::optional<double> mean_weed_height_m;  // differenced height over the mowed region
  std::optional<double> truth_mean_canopy_m; // initial canopy above the noise floor
  double harvested_volume_m3 = 0.0;          // truth load volume removed by the cutter
  double expected_volume_m3 = 0.0;           // sum of planned lane loads that were executed
  double initial_truth_load_m3 = 0.0;
  double final_truth_load_m3 = 0.0;
  double harvester_distance_m = 0.0;
  double usv_distance_m = 0.0;
  int clusters_before = 0;
  int clusters_after = 0;
  int unload_count = 0;
  int plan_version = 0;
  double mission_time_s = 0.0;
};

inline nlohmann::json report_to_json(const MissionReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"pre_mean_depth_m", r.pre_mean_depth_m},
          {"post_mean_depth_m", r.post_mean_depth_m},
          {"mean_weed_height_m", opt(r.mean_weed_height_m)},
          {"truth_mean_canopy_m", opt(r.truth_mean_canopy_m)},
          {"harvested_volume_m3", r.harvested_volume_m3},
          {"expected_volume_m3", r.expected_volume_m3},
          {"initial_truth_load_m3", r.initial_truth_load_m3},
          {"final_truth_load_m3", r.final_truth_load_m3},
          {"harvester_distance_m", r.harvester_distance_m},
          {"usv_distance_m", r.usv_distance_m},
          {"clusters_before", r.clusters_before},
          {"clusters_after", r.clusters_after},
          {"unload_count", r.unload_count},
          {"plan_version", r.plan_version},
          {"mission_time_s", r.mission_time_s}};
}

// ---------------------------------------------------------------------------
// Mission
// ---------------------------------------------------------------------------

enum class ScanKind { pre, post, rescan };

inline const char* to_string(ScanKind k) {
  return k == ScanKind::pre ? "pre" : k == ScanKind::post ? "post" : "rescan";
}

class Mission {
public:
  explicit Mission(MissionConfig config)
      : config_((config.validate(), std::move(config))),
        grid_(config_.grid()),
        truth_(config_.scenario.synthesize()),
        initial_truth_(truth_),
        rng_(config_.sonar_seed),
        usv_pose_(config_.usv_start, 0.0),
        known_mask_(grid_, std::uint8_t{0}),
        harvester_pose_(config_.harvester_start, 0.0),
        mowed_mask_(grid_, std::uint8_t{0}) {
    double depth_sum = 0.0;
    for (double d : truth_.bed.values()) depth_sum += d;
    sim_sound_speed_ = effective_speed(config_.cast, depth_sum / static_cast<double>(truth_.bed.size()));
  }

  Mission(const Mission&) = delete;
  Mission& operator=(const Mission&) = delete;

  Phase phase() const { return phase_; }
  bool done() const { return phase_ == Phase::Done; }
  double clock() const { return clock_; }
  const MissionConfig& config() const { return config_; }
  const GridSpec& grid() const { return grid_; }
  EventLog& events() { return events_; }
  const EventLog& events() const { return events_; }
  const LakeTruth& truth() const { return truth_; }
  const LakeTruth& initial_truth() const { return initial_truth_; }
  const std::vector<WeedCluster>& clusters() const { return clusters_; }
  const std::optional<HarvestPlan>& plan() const { return plan_; }
  const std::optional<MissionReport>& report() const { return report_; }
  const std::vector<SonarPing>& pings(ScanKind k) const { return scans_[static_cast<int>(k)].pings; }
  const std::map<std::string, RasterD>& rasters() const { return rasters_; }
  const Raster<std::uint8_t>& mowed_mask() const { return mowed_mask_; }
  const std::optional<ClassificationMap>& classification() const { return classification_; }
  double load() const { return load_; }
  double harvested_volume() const { return harvested_volume_; }
  const Pose2D& usv_pose() const { return usv_pose_; }
  const Pose2D& harvester_pose() const { return harvester_pose_; }
  const std::set<int>& excluded_clusters() const { return excluded_; }

  /// Applies an operator command. Commands that make no sense in the current
  /// phase are rejected with a reason and change nothing.
  CommandResult command(const Command& cmd) {
    auto reject = [&](std::string why) {
      return CommandResult{false, std::string(to_string(cmd.kind)) + " rejected in phase " + to_string(phase_) + ": " + why};
    };
    switch (cmd.kind) {
      case CommandKind::start:
        if (phase_ != Phase::Idle) return reject("mission already started");
        scan_queue_.push_back({ScanKind::pre, lawnmower_path(config_.survey_area, config_.line_spacing)});
        transition(Phase::PreScan);
        return {true, {}};

      case CommandKind::approve_plan:
        if (phase_ != Phase::AwaitingApproval) return reject("no plan awaiting approval");
        transition(Phase::Harvesting);
        return {true, {}};

      case CommandKind::reject_plan:
        if (phase_ != Phase::AwaitingApproval) return reject("no plan awaiting approval");
        excluded_.insert(cmd.exclude_cluster_ids.begin(), cmd.exclude_cluster_ids.end());
        transition(Phase::Planning);
        return {true, {}};

      case CommandKind::mark_area: {
        if (!active()) return reject("mission is not active");
        if (cmd.polygon.size() < 3 || signed_area(cmd.polygon) == 0.0) return reject("polygon has no area");
        marked_areas_.push_back(cmd.polygon);
        for (const auto& c : clusters_)
          if (contains(cmd.polygon, c.centroid)) excluded_.insert(c.id);
        request_replan({});
        return {true, {}};
      }

      case CommandKind::request_rescan: {
        if (!active()) return reject("mission is not active");
        if (cmd.polygon.size() < 3 || signed_area(cmd.polygon) == 0.0) return reject("polygon has no area");
        const Rect bb = bounding_box(cmd.polygon);
        if (!(bb.width() > 0 && bb.height() > 0)) return reject("polygon has no area");
        for (const EnuPoint& p : bb.to_polygon())
          if (!config_.scenario.extent.contains(p)) return reject("polygon leaves the lake extent");
        auto lines = lawnmower_path(bb, config_.line_spacing);
        if (phase_ == Phase::PreScan || phase_ == Phase::PostScan) {
          // Folded into the running survey of this phase.
          auto& job = scan_queue_.front();
          job.lines.insert(job.lines.end(), lines.begin(), lines.end());
        } else {
          scan_queue_.push_back({ScanKind::rescan, std::move(lines)});
        }
        return {true, {}};
      }

      case CommandKind::set_unload_station:
        if (!accepts_edits() && phase_ != Phase::Idle) return reject("harvesting is over");
        config_.planner.unload_station = cmd.point;
        request_replan({});
        return {true, {}};
    }
    return reject("unknown command");
  }

  /// Advances the mission clock by dt seconds.
  void step(double dt) {
    if (!(dt > 0)) throw DomainError("step dt must be > 0");
    if (phase_ == Phase::Done) throw StateError("mission is done");
    clock_ += dt;

    switch (phase_) {
      case Phase::Processing: process_pre(); break;
      case Phase::Planning: make_plan(); break;
      case Phase::Reporting: make_report(); break;
      default: break;
    }
    if (advance_usv(dt)) emit_pose("usv", usv_pose_);
    if (phase_ == Phase::Harvesting) {
      advance_harvester(dt);
      emit_pose("harvester", harvester_pose_);
    }
  }

  /// JSON snapshot of the current state.
  nlohmann::json state_json() const {
    nlohmann::json j;
    j["phase"] = to_string(phase_);
    j["clock"] = clock_;
    j["seq"] = events_.last_seq();
    j["usv"] = pose_json(usv_pose_);
    j["harvester"] = pose_json(harvester_pose_);
    j["harvester"]["load"] = load_;
    j["capacity"] = config_.planner.capacity;
    j["unload_station"] = config_.planner.unload_station;
    j["plan_version"] = plan_ ? plan_->version : 0;
    j["executed_prefix"] = plan_ ? plan_->executed_prefix : 0;
    j["cluster_count"] = clusters_.size();
    j["excluded_cluster_ids"] = excluded_;
    j["harvested_volume_m3"] = harvested_volume_;
    j["unload_count"] = unload_count_;
    j["pending_scans"] = scan_queue_.size();
    j["rasters"] = nlohmann::json::array();
    for (const auto& [name, r] : rasters_) j["rasters"].push_back(name);
    return j;
  }

private:
  struct ScanJob {
    ScanKind kind;
    std::vector<SurveyLine> lines;
  };
  struct ScanData {
    std::vector<SonarPing> pings;
    std::vector<Sounding> soundings;
  };

  /// Phases in which the operator may edit the cluster set or survey.
  bool active() const { return phase_ != Phase::Idle && phase_ != Phase::Reporting && phase_ != Phase::Done; }

  bool accepts_edits() const {
    return phase_ == Phase::PreScan || phase_ == Phase::Processing || phase_ == Phase::Planning ||
           phase_ == Phase::AwaitingApproval || phase_ == Phase::Harvesting;
  }

  void transition(Phase to) {
    if (!transition_allowed(phase_, to))
      throw StateError(std::string("illegal phase transition ") + to_string(phase_) + " -> " + to_string(to));
    const Phase from = phase_;
    phase_ = to;
    events_.append(clock_, EventKind::phase_changed, {{"from", to_string(from)}, {"to", to_string(to)}});
  }

  nlohmann::json pose_json(const Pose2D& p) const {
    const auto [lat, lon] = unproject(p.position, config_.origin);
    return {{"east", p.position.east}, {"north", p.position.north}, {"heading", p.heading}, {"lat", lat}, {"lon", lon}};
  }

  void emit_pose(const char* vehicle, const Pose2D& p) {
    auto j = pose_json(p);
    j["vehicle"] = vehicle;
    if (std::string(vehicle) == "harvester") j["load"] = load_;
    events_.append(clock_, EventKind::pose_update, std::move(j));
  }

  void publish_raster(const std::string& name, RasterD r) {
    nlohmann::json j{{"name", name}, {"url", "/rasters/" + name}, {"ncols", r.spec().n_cols},
                     {"nrows", r.spec().n_rows}, {"cell_size", r.spec().cell_size}};
    rasters_.insert_or_assign(name, std::move(r));
    events_.append(clock_, EventKind::raster_updated, std::move(j));
  }

  void publish_clusters() {
    double total = 0.0;
    auto ids = nlohmann::json::array();
    for (const auto& c : clusters_) {
      total += c.load_volume;
      ids.push_back(c.id);
    }
    events_.append(clock_, EventKind::clusters_updated,
                   {{"count", clusters_.size()}, {"cluster_ids", ids}, {"total_load_m3", total}, {"excluded", excluded_}});
  }

  void publish_plan() {
    const HarvestPlan& p = *plan_;
    events_.append(clock_, EventKind::plan_updated,
                   {{"version", p.version},
                    {"legs", p.legs.size()},
                    {"executed_prefix", p.executed_prefix},
                    {"total_distance_m", p.total_distance},
                    {"total_time_s", p.total_time},
                    {"unload_count", p.unload_count()},
                    {"max_load_m3", p.max_load()},
                    {"load", load_}});
  }

  // --- survey boat -------------------------------------------------------

  /// Moves the USV along its scan queue for dt seconds; returns true if it moved.
  bool advance_usv(double dt) {
    if (scan_queue_.empty()) return false;
    double budget = dt;
    const double speed = config_.survey_speed;
    while (budget > 0 && !scan_queue_.empty()) {
      ScanJob& job = scan_queue_.front();
      const SurveyLine& line = job.lines[line_index_];
      if (!on_line_) {
        const double d = distance(usv_pose_.position, line.start);
        const double heading = std::atan2(line.start.north - usv_pose_.position.north, line.start.east - usv_pose_.position.east);
        if (speed * budget < d) {
          move_usv(line.start, speed * budget / d, heading);
          budget = 0;
          break;
        }
        budget -= d / speed;
        usv_distance_ += d;
        const double line_heading = std::atan2(line.end.north - line.start.north, line.end.east - line.start.east);
        usv_pose_ = Pose2D(line.start, line_heading);
        line_t0_ = clock_ - budget;
        line_pings_ = survey_leg(usv_pose_, line.end, speed, config_.sonar, truth_, sim_sound_speed_, rng_, line_t0_);
        released_ = 0;
        on_line_ = true;
        continue;
      }
      const double length = distance(line.start, line.end);
      const double t_end = line_t0_ + length / speed;
      const double reach = std::min(clock_, t_end);
      release_pings(job.kind, reach, reach >= t_end);
      const double f = length > 0 ? std::clamp((reach - line_t0_) * speed / length, 0.0, 1.0) : 1.0;
      const EnuPoint p{line.start.east + f * (line.end.east - line.start.east),
                       line.start.north + f * (line.end.north - line.start.north), 0.0};
      usv_distance_ += distance(usv_pose_.position, p);
      usv_pose_ = Pose2D(p, usv_pose_.heading);
      if (reach < t_end) {
        budget = 0;
        break;
      }
      budget = clock_ - t_end;
      finish_line(job);
    }
    return true;
  }

  void move_usv(const EnuPoint& target, double fraction, double heading) {
    const EnuPoint from = usv_pose_.position;
    const EnuPoint p{from.east + fraction * (target.east - from.east), from.north + fraction * (target.north - from.north), 0.0};
    usv_distance_ += distance(from, p);
    usv_pose_ = Pose2D(p, heading);
  }

  void release_pings(ScanKind kind, double until, bool all) {
    ScanData& data = scans_[static_cast<int>(kind)];
    while (released_ < line_pings_.size() && (all || line_pings_[released_].timestamp <= until)) {
      const auto id = static_cast<std::uint32_t>(data.pings.size());
      auto s = georeference(line_pings_[released_], config_.cast, id);
      data.soundings.insert(data.soundings.end(), s.begin(), s.end());
      data.pings.push_back(std::move(line_pings_[released_]));
      ++released_;
    }
  }

  void finish_line(ScanJob& job) {
    const ScanData& data = scans_[static_cast<int>(job.kind)];
    events_.append(clock_, EventKind::new_soundings_summary,
                   {{"scan", to_string(job.kind)},
                    {"line", line_index_},
                    {"line_pings", line_pings_.size()},
                    {"pings", data.pings.size()},
                    {"soundings", data.soundings.size()}});
    publish_raster(std::string("bathy_") + to_string(job.kind), grid_soundings(data.soundings, grid_));
    line_pings_.clear();
    on_line_ = false;
    if (++line_index_ < job.lines.size()) return;

    const ScanKind kind = job.kind;
    line_index_ = 0;
    scan_queue_.pop_front();
    if (kind == ScanKind::pre) transition(Phase::Processing);
    else if (kind == ScanKind::post) transition(Phase::Reporting);
    else finish_rescan();
  }

  // --- processing and planning ------------------------------------------

  WeedDetection detect(const RasterD& bathy, const std::vector<Sounding>& soundings) const {
    return detect_weeds(bathy, soundings, config_);
  }

  void process_pre() {
    const ScanData& data = scans_[static_cast<int>(ScanKind::pre)];
    RasterD bathy = grid_soundings(data.soundings, grid_);
    WeedDetection d = detect(bathy, data.soundings);
    publish_raster("bathy_pre", std::move(bathy));
    publish_raster("intensity_pre", d.mosaic.intensity);
    publish_raster("canopy_proxy", d.proxy);
    RasterD codes(grid_, 0.0);
    for (std::size_t i = 0; i < codes.size(); ++i) codes[i] = static_cast<double>(d.classes.classes[i]);
    publish_raster("classification", std::move(codes));
    classification_ = std::move(d.classes);
    clusters_ = std::move(d.clusters);
    for (auto& c : clusters_) {
      for (const auto& a : marked_areas_)
        if (contains(a, c.centroid)) excluded_.insert(c.id);
      remember(c);
    }
    next_cluster_id_ = static_cast<int>(clusters_.size()) + 1;
    clusters_before_ = static_cast<int>(clusters_.size());
    publish_clusters();
    transition(Phase::Planning);
  }

  void remember(const WeedCluster& c) {
    for (const auto& cell : c.cells)
      if (const auto idx = cell_of(cell.center, grid_)) known_mask_.at(*idx) = 1;
  }

  std::vector<WeedCluster> active_clusters() const {
    std::vector<WeedCluster> out;
    for (const auto& c : clusters_)
      if (!excluded_.count(c.id)) out.push_back(c);
    return out;
  }

  /// Survey-track replay: the pre-scan lines cut into short lanes, each
  /// carrying the estimated load of the weed cells under its swath.
  std::vector<VisitUnit> track_units() const {
    RasterD est(grid_, 0.0);
    for (const auto& c : active_clusters())
      for (const auto& cell : c.cells)
        if (const auto idx = cell_of(cell.center, grid_)) est.at(*idx) = cell.load;
    VisitUnit unit{0, {}};
    for (const auto& line : lawnmower_path(config_.survey_area, config_.line_spacing)) {
      const double len = distance(line.start, line.end);
      const int n = std::max(1, static_cast<int>(std::ceil(len / config_.track_segment_length - 1e-9)));
      for (int k = 0; k < n; ++k) {
        auto at = [&](double f) {
          return EnuPoint{line.start.east + f * (line.end.east - line.start.east),
                          line.start.north + f * (line.end.north - line.start.north), 0.0};
        };
        Leg lane{LegKind::harvest_lane, at(static_cast<double>(k) / n), at(static_cast<double>(k + 1) / n), 0, 0.0};
        for (const auto& c : cells_in_polygon(lane_swath(lane, config_.planner), grid_)) lane.expected_load_delta += est.at(c);
        unit.lanes.push_back(lane);
      }
    }
    return {unit};
  }

  void make_plan() {
    HarvestPlan p = config_.follow_usv_track
                        ? plan_fixed_order(track_units(), config_.planner, harvester_pose_.position)
                        : plan_units(units_for_clusters(active_clusters(), config_.planner), config_.planner,
                                     harvester_pose_.position, load_);
    p.version = (plan_ ? plan_->version : 0) + 1;
    plan_ = std::move(p);
    publish_plan();
    transition(Phase::AwaitingApproval);
  }

  /// Queues plan changes: immediate re-planning while awaiting approval, at the
  /// next leg boundary while harvesting, nothing before a plan exists.
  void request_replan(std::vector<WeedCluster> new_clusters) {
    if (phase_ == Phase::AwaitingApproval) {
      transition(Phase::Planning);
    } else if (phase_ == Phase::Harvesting) {
      replan_pending_ = true;
      pending_clusters_.insert(pending_clusters_.end(), new_clusters.begin(), new_clusters.end());
    }
  }

  void finish_rescan() {
    ScanData& data = scans_[static_cast<int>(ScanKind::rescan)];
    RasterD bathy = grid_soundings(data.soundings, grid_);
    WeedDetection d = detect(bathy, data.soundings);
    publish_raster("bathy_rescan", std::move(bathy));
    data = {};
    if (!(phase_ == Phase::AwaitingApproval || phase_ == Phase::Harvesting)) return;

    std::vector<WeedCluster> fresh;
    for (auto& c : d.clusters) {
      const bool known = std::any_of(c.cells.begin(), c.cells.end(), [&](const ClusterCell& cell) {
        const auto idx = cell_of(cell.center, grid_);
        return idx && known_mask_.at(*idx);
      });
      if (known) continue;
      c.id = next_cluster_id_++;
      for (const auto& a : marked_areas_)
        if (contains(a, c.centroid)) excluded_.insert(c.id);
      remember(c);
      clusters_.push_back(c);
      fresh.push_back(c);
    }
    if (fresh.empty()) return;
    publish_clusters();
    request_replan(std::move(fresh));
  }

  // --- harvester -----------------------------------------------------------

  void apply_pending_replan() {
    std::vector<int> excluded(excluded_.begin(), excluded_.end());
    std::vector<WeedCluster> fresh;
    for (auto& c : pending_clusters_)
      if (!excluded_.count(c.id)) fresh.push_back(std::move(c));
    pending_clusters_.clear();
    replan_pending_ = false;
    if (config_.follow_usv_track) {
      // Replay mode keeps its track; only the unload station can change.
      plan_ = splice_tail(*plan_);
    } else {
      plan_ = replan(*plan_, fresh, harvester_pose_.position, load_, config_.planner, excluded);
    }
    publish_plan();
  }

  /// Re-expands the remaining lanes of a plan with the current configuration.
  HarvestPlan splice_tail(const HarvestPlan& current) const {
    std::vector<VisitUnit> units{{0, {}}};
    for (std::size_t i = current.executed_prefix; i < current.legs.size(); ++i)
      if (current.legs[i].kind == LegKind::harvest_lane) units[0].lanes.push_back(current.legs[i]);
    std::vector<const VisitUnit*> order{&units[0]};
    std::vector<Leg> prefix(current.legs.begin(), current.legs.begin() + static_cast<std::ptrdiff_t>(current.executed_prefix));
    std::vector<double> profile(current.load_profile.begin(),
                                current.load_profile.begin() + static_cast<std::ptrdiff_t>(current.executed_prefix));
    return detail::to_plan(std::move(prefix), std::move(profile),
                           detail::expand(order, harvester_pose_.position, load_, config_.planner),
                           current.executed_prefix, current.version + 1, config_.planner);
  }

  void advance_harvester(double dt) {
    double budget = dt;
    const PlannerConfig& pc = config_.planner;
    while (budget > 0) {
      HarvestPlan& p = *plan_;
      if (leg_progress_ == 0.0) {
        if (replan_pending_) apply_pending_replan();
        if (plan_->executed_prefix >= plan_->legs.size()) {
          finish_harvest();
          return;
        }
        const Leg& next = plan_->legs[plan_->executed_prefix];
        if (next.kind == LegKind::harvest_lane && !guard_checked_) {
          guard_checked_ = true;
          const double preview = mow_preview(truth_, lane_swath(next, pc), config_.cut_height);
          if (load_ + preview > pc.capacity) {
            if (load_ == 0.0) throw StateError("a single lane holds more weed than the conveyor capacity");
            plan_ = splice_unload(*plan_, harvester_pose_.position, load_, pc);
            publish_plan();
            guard_checked_ = false;
            continue;
          }
        }
      }
      const Leg& leg = p.legs[p.executed_prefix];
      const bool is_unload = leg.kind == LegKind::unload;
      const double length = leg.length();
      const double remaining = is_unload ? pc.unload_time - leg_progress_ : (length - leg_progress_) / pc.harvester_speed;
      const double heading = length > 0 ? std::atan2(leg.end.north - leg.start.north, leg.end.east - leg.start.east)
                                        : harvester_pose_.heading;
      if (budget < remaining) {
        leg_progress_ += is_unload ? budget : budget * pc.harvester_speed;
        if (!is_unload) {
          const double f = leg_progress_ / length;
          const EnuPoint pos{leg.start.east + f * (leg.end.east - leg.start.east),
                             leg.start.north + f * (leg.end.north - leg.start.north), 0.0};
          harvester_distance_ += distance(harvester_pose_.position, pos);
          harvester_pose_ = Pose2D(pos, heading);
        }
        return;
      }
      budget -= remaining;
      harvester_distance_ += distance(harvester_pose_.position, leg.end);
      harvester_pose_ = Pose2D(leg.end, heading);
      complete_leg(leg);
      leg_progress_ = 0.0;
      guard_checked_ = false;
      ++p.executed_prefix;
    }
  }

  void complete_leg(const Leg& leg) {
    if (leg.kind == LegKind::harvest_lane) {
      const Polygon swath = lane_swath(leg, config_.planner);
      const double v = mow(truth_, swath, config_.cut_height);
      load_ = load_ + v;
      harvested_volume_ += v;
      expected_volume_ += leg.expected_load_delta;
      for (const auto& c : cells_in_polygon(swath, grid_)) mowed_mask_.at(c) = 1;
    } else if (leg.kind == LegKind::unload) {
      load_ = 0.0;
      ++unload_count_;
    }
  }

  void finish_harvest() {
    // Pending sub-surveys are merged into the post-scan.
    std::vector<SurveyLine> lines = lawnmower_path(config_.survey_area, config_.line_spacing);
    std::deque<ScanJob> keep;
    for (auto& job : scan_queue_) {
      const bool running = &job == &scan_queue_.front() && (on_line_ || line_index_ > 0);
      if (running) keep.push_back(std::move(job));
      else lines.insert(lines.end(), job.lines.begin(), job.lines.end());
    }
    scan_queue_ = std::move(keep);
    scan_queue_.push_back({ScanKind::post, std::move(lines)});
    transition(Phase::PostScan);
  }

  // --- report ---------------------------------------------------------------

  void make_report() {
    const ScanData& post = scans_[static_cast<int>(ScanKind::post)];
    RasterD bathy_post = grid_soundings(post.soundings, grid_);
    const RasterD& bathy_pre = rasters_.at("bathy_pre");
    WeedHeightMap diff = diff_grids(bathy_pre, bathy_post, config_.noise_floor);
    const WeedDetection after = detect(bathy_post, post.soundings);

    MissionReport r;
    r.pre_mean_depth_m = mean_value(bathy_pre);
    r.post_mean_depth_m = mean_value(bathy_post);
    try {
      r.mean_weed_height_m = mean_height(diff, mowed_mask_);
    } catch (const DomainError&) {
    }
    try {
      r.truth_mean_canopy_m = mean_canopy_height(initial_truth_, config_.noise_floor);
    } catch (const DomainError&) {
    }
    r.harvested_volume_m3 = harvested_volume_;
    r.expected_volume_m3 = expected_volume_;
    r.initial_truth_load_m3 = canopy_load_volume(initial_truth_);
    r.final_truth_load_m3 = canopy_load_volume(truth_);
    r.harvester_distance_m = harvester_distance_;
    r.usv_distance_m = usv_distance_;
    r.clusters_before = clusters_before_;
    r.clusters_after = static_cast<int>(after.clusters.size());
    r.unload_count = unload_count_;
    r.plan_version = plan_ ? plan_->version : 0;
    r.mission_time_s = clock_;

    publish_raster("bathy_post", std::move(bathy_post));
    publish_raster("weed_height", diff.height);
    report_ = r;
    events_.append(clock_, EventKind::report_ready, report_to_json(r));
    transition(Phase::Done);
  }

  MissionConfig config_;
  GridSpec grid_;
  LakeTruth truth_;
  LakeTruth initial_truth_;
  std::mt19937_64 rng_;
  double sim_sound_speed_ = 1480.0;
  EventLog events_;

  Phase phase_ = Phase::Idle;
  double clock_ = 0.0;

  // Survey boat
  Pose2D usv_pose_;
  std::deque<ScanJob> scan_queue_;
  std::size_t line_index_ = 0;
  bool on_line_ = false;
  double line_t0_ = 0.0;
  std::vector<SonarPing> line_pings_;
  std::size_t released_ = 0;
  ScanData scans_[3];
  double usv_distance_ = 0.0;

  // Products
  std::map<std::string, RasterD> rasters_;
  std::optional<ClassificationMap> classification_;
  std::vector<WeedCluster> clusters_;
  int next_cluster_id_ = 1;
  int clusters_before_ = 0;
  Raster<std::uint8_t> known_mask_;
  std::set<int> excluded_;
  std::vector<Polygon> marked_areas_;

  // Harvester
  std::optional<HarvestPlan> plan_;
  Pose2D harvester_pose_;
  double leg_progress_ = 0.0;  // m along the leg, or s into an unload
  bool guard_checked_ = false;
  bool replan_pending_ = false;
  std::vector<WeedCluster> pending_clusters_;
  double load_ = 0.0;
  double harvested_volume_ = 0.0;
  double expected_volume_ = 0.0;
  double harvester_distance_ = 0.0;
  int unload_count_ = 0;
  Raster<std::uint8_t> mowed_mask_;

  std::optional<MissionReport> report_;
};

/// Runs a mission to completion, approving every plan as soon as it is ready.
inline std::unique_ptr<Mission> run_headless(const MissionConfig& config, double dt = 0.0,
                                             double max_clock = 1.0e6) {
  auto m = std::make_unique<Mission>(config);
  const double step = dt > 0 ? dt : config.dt;
  m->command({CommandKind::start, {}, {}, {}});
  while (!m->done()) {
    if (m->phase() == Phase::AwaitingApproval) m->command({CommandKind::approve_plan, {}, {}, {}});
    m->step(step);
    if (m->clock() > max_clock) throw StateError("mission did not finish within the time limit");
  }
  return m;
}

/// Writes the run directory: config, ping logs, rasters, clusters, plan,
/// event log and report.
inline void write_run_directory(const Mission& m, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "rasters");
  auto write_json = [&](const fs::path& p, const nlohmann::json& j) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << j.dump(2) << '\n';
  };
  write_json(dir / "config.json", m.config());
  write_ping_log(m.pings(ScanKind::pre), dir / "pings_pre.ndjson");
  write_ping_log(m.pings(ScanKind::post), dir / "pings_post.ndjson");
  for (const auto& [name, r] : m.rasters()) esri::write(r, (dir / "rasters" / (name + ".asc")).string());
  if (m.classification()) {
    std::ofstream f(dir / "rasters" / "classification.json", std::ios::binary);
    f << classification_legend(*m.classification(), m.config().thresholds).dump(2) << '\n';
  }
  write_clusters(m.clusters(), dir / "clusters.geojson");
  if (m.plan()) write_json(dir / "plan.json", plan_to_json(*m.plan()));
  {
    std::ofstream f(dir / "events.ndjson", std::ios::binary);
    for (const auto& e : m.events().all()) f << event_to_json(e).dump() << '\n';
  }
  if (m.report()) write_json(dir / "report.json", report_to_json(*m.report()));
}

}  // namespace lakekeeper
