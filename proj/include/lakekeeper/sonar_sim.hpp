#pragma once

// Multibeam sonar simulator: beam fan geometry, straight-ray marching against
// a LakeTruth, range gating and a simple backscatter model.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lakekeeper/geo_core.hpp"
#include "lakekeeper/lake_model.hpp"

namespace lakekeeper {

inline constexpr double kKnot = 1852.0 / 3600.0;  // m/s

/// Simulator constants for base backscatter per material, dB. Only their
/// ordering (object > seabed > weed) carries meaning.
struct BackscatterLevels {
  double seabed = -15.0;
  double weed = -25.0;
  double object = -5.0;

  double of(Material m) const {
    switch (m) {
      case Material::weed: return weed;
      case Material::object: return object;
      case Material::seabed: break;
    }
    return seabed;
  }
};

struct SonarSpec {
  double mean_frequency = 400e3;  // Hz, metadata only
  double chirp_bandwidth = 80e3;  // Hz, metadata only
  int n_beams = 256;
  double beam_width_deg = 0.9;  // footprint smear, not spacing
  double swath_deg = 150.0;
  double upper_gate = 1.0;  // m, vertical range below the transducer
  double lower_gate = 5.0;  // m, slant range
  double ping_rate = 5.0;   // Hz
  double range_noise_std = 0.075;    // m
  double intensity_noise_std = 2.0;  // dB
  bool footprint_smear = true;
  BackscatterLevels levels;

  void validate() const {
    if (n_beams < 2) throw ConfigError("sonar needs at least two beams");
    if (!(swath_deg > 0 && swath_deg < 180)) throw ConfigError("sonar swath must be in (0, 180) degrees");
    if (!(upper_gate > 0 && upper_gate < lower_gate)) throw ConfigError("sonar gates must satisfy 0 < upper < lower");
    if (!(ping_rate > 0)) throw ConfigError("sonar ping_rate must be > 0");
    if (!(range_noise_std >= 0) || !(intensity_noise_std >= 0)) throw ConfigError("sonar noise must be >= 0");
    if (!(beam_width_deg >= 0)) throw ConfigError("sonar beam width must be >= 0");
  }

  /// Same geometry with every random perturbation switched off.
  SonarSpec noise_free() const {
    SonarSpec s = *this;
    s.range_noise_std = 0.0;
    s.intensity_noise_std = 0.0;
    s.footprint_smear = false;
    return s;
  }
};

struct BeamReturn {
  int beam_index = 0;
  double angle = 0.0;                         // radians from nadir, starboard positive
  std::optional<double> two_way_time;         // s; nullopt = NO_RETURN
  std::optional<double> intensity;            // dB; nullopt = NO_RETURN
  std::optional<Material> material_truth;     // debug channel, never read by the pipeline

  bool has_return() const { return two_way_time.has_value(); }
  friend bool operator==(const BeamReturn&, const BeamReturn&) = default;
};

struct SonarPing {
  double timestamp = 0.0;
  Pose2D pose;
  std::vector<BeamReturn> returns;

  friend bool operator==(const SonarPing& a, const SonarPing& b) {
    return a.timestamp == b.timestamp && a.pose.position == b.pose.position && a.pose.heading == b.pose.heading &&
           a.returns == b.returns;
  }
};

/// Evenly spaced across-track angles spanning the swath, radians.
inline std::vector<double> beam_angles(const SonarSpec& spec) {
  spec.validate();
  const double half = spec.swath_deg / 2.0;
  const double step = spec.swath_deg / (spec.n_beams - 1);
  std::vector<double> out(spec.n_beams);
  for (int k = 0; k < spec.n_beams; ++k) {
    // Mirror the upper half so the fan is exactly symmetric.
    const int m = spec.n_beams - 1 - k;
    const double deg = (k <= m) ? -half + k * step : half - m * step;
    out[k] = deg * kDegToRad;
  }
  return out;
}

namespace detail {

/// Marches a straight ray and returns the slant range to the first surface,
/// plus the material there. nullopt if the ray leaves the lake or exceeds max_range.
inline std::optional<std::pair<double, Material>> trace_ray(const EnuPoint& origin, double dir_east, double dir_north,
                                                            double angle, const LakeTruth& truth, double max_range) {
  const double step = std::min(truth.extent().cell_size / 2.0, 0.125);
  const double sin_a = std::sin(angle), cos_a = std::cos(angle);
  auto at = [&](double s) { return EnuPoint{origin.east + s * sin_a * dir_east, origin.north + s * sin_a * dir_north, 0.0}; };
  auto below = [&](double s, Material* mat) -> std::optional<bool> {
    const EnuPoint p = at(s);
    if (!truth.extent().contains(p)) return std::nullopt;
    const SurfaceHit hit = first_return_depth(p, truth);
    if (mat) *mat = hit.material;
    return s * cos_a >= hit.depth;
  };

  double lo = 0.0;
  for (double hi = step;; hi += step) {
    const bool last = hi >= max_range;
    if (last) hi = max_range;
    const auto crossed = below(hi, nullptr);
    if (!crossed) return std::nullopt;
    if (*crossed) {
      for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto c = below(mid, nullptr);
        if (c && *c)
          hi = mid;
        else
          lo = mid;
      }
      Material mat = Material::seabed;
      below(hi, &mat);
      return std::make_pair(hi, mat);
    }
    if (last) return std::nullopt;
    lo = hi;
  }
}

}  // namespace detail

/// Simulates one ping. Draws exactly three random numbers per beam.
inline SonarPing ping(const Pose2D& pose, const LakeTruth& truth, const SonarSpec& spec, double sound_speed,
                      std::mt19937_64& rng) {
  if (!truth.extent().contains(pose.position)) throw QueryError("ping pose outside the lake extent");
  if (!(sound_speed > 0)) throw DomainError("sound speed must be > 0");
  const auto angles = beam_angles(spec);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);

  // Starboard is 90 degrees clockwise from the heading.
  const double stbd_e = std::sin(pose.heading);
  const double stbd_n = -std::cos(pose.heading);
  const double max_range = spec.lower_gate + 6.0 * spec.range_noise_std + 0.05;

  SonarPing out;
  out.pose = pose;
  out.returns.reserve(angles.size());
  for (int k = 0; k < spec.n_beams; ++k) {
    const double smear = unit(rng);
    const double range_noise = gauss(rng);
    const double intensity_noise = gauss(rng);

    BeamReturn br;
    br.beam_index = k;
    br.angle = angles[k];
    const double theta = angles[k] + (spec.footprint_smear ? smear * spec.beam_width_deg * kDegToRad : 0.0);
    if (const auto hit = detail::trace_ray(pose.position, stbd_e, stbd_n, theta, truth, max_range)) {
      const double r = hit->first + spec.range_noise_std * range_noise;
      // The upper gate blanks the near field by depth, so a bed shallower than
      // the gate returns nothing on any beam; depth >= upper_gate implies r >= upper_gate.
      if (r * std::cos(angles[k]) >= spec.upper_gate && r <= spec.lower_gate) {
        br.two_way_time = 2.0 * r / sound_speed;
        br.intensity = spec.levels.of(hit->second) + 10.0 * std::log10(std::cos(angles[k])) +
                       spec.intensity_noise_std * intensity_noise;
        br.material_truth = hit->second;
      }
    }
    out.returns.push_back(br);
  }
  return out;
}

/// Straight-line survey leg; one ping every speed/ping_rate meters plus a
/// final ping at the end point.
inline std::vector<SonarPing> survey_leg(const Pose2D& start, const EnuPoint& end, double speed, const SonarSpec& spec,
                                         const LakeTruth& truth, double sound_speed, std::mt19937_64& rng,
                                         double t0 = 0.0) {
  if (!(speed > 0)) throw ConfigError("survey speed must be > 0");
  spec.validate();
  const double length = distance(start.position, end);
  std::vector<SonarPing> pings;
  if (length == 0.0) {
    pings.push_back(ping(start, truth, spec, sound_speed, rng));
    pings.back().timestamp = t0;
    return pings;
  }
  const double heading = std::atan2(end.north - start.position.north, end.east - start.position.east);
  const double spacing = speed / spec.ping_rate;
  const auto n = static_cast<std::size_t>(std::floor(length / spacing));
  auto emit = [&](double s) {
    const double f = s / length;
    const EnuPoint p{start.position.east + f * (end.east - start.position.east),
                     start.position.north + f * (end.north - start.position.north), 0.0};
    pings.push_back(ping(Pose2D(p, heading), truth, spec, sound_speed, rng));
    pings.back().timestamp = t0 + s / speed;
  };
  for (std::size_t i = 0; i <= n; ++i) emit(static_cast<double>(i) * spacing);
  if (length - static_cast<double>(n) * spacing > 1e-9) emit(length);
  return pings;
}

struct SurveyLine {
  EnuPoint start;
  EnuPoint end;
};

/// Boustrophedon lines along the longer side of the rectangle, centred across
/// the shorter side, alternating direction.
inline std::vector<SurveyLine> lawnmower_path(const Rect& area, double line_spacing) {
  if (!(line_spacing > 0)) throw ConfigError("line spacing must be > 0");
  area.validate();
  const bool along_east = area.width() >= area.height();
  const double across = along_east ? area.height() : area.width();
  const int count = line_spacing >= across ? 1 : static_cast<int>(std::ceil(across / line_spacing - 1e-9));
  const double first = (across - (count - 1) * line_spacing) / 2.0;

  std::vector<SurveyLine> lines;
  for (int i = 0; i < count; ++i) {
    const double off = first + i * line_spacing;
    SurveyLine l;
    if (along_east) {
      l.start = {area.min_east, area.min_north + off, 0};
      l.end = {area.max_east, area.min_north + off, 0};
    } else {
      l.start = {area.min_east + off, area.min_north, 0};
      l.end = {area.min_east + off, area.max_north, 0};
    }
    if (i % 2 == 1) std::swap(l.start, l.end);
    lines.push_back(l);
  }
  return lines;
}

/// Runs the lines in order from the start of the first line, transiting
/// between lines at the survey speed; timestamps continue across lines.
inline std::vector<SonarPing> survey_lines(const std::vector<SurveyLine>& lines, double speed, const SonarSpec& spec,
                                           const LakeTruth& truth, double sound_speed, std::mt19937_64& rng,
                                           double t0 = 0.0) {
  std::vector<SonarPing> out;
  double t = t0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const SurveyLine& l = lines[i];
    if (i > 0) t += distance(lines[i - 1].end, l.start) / speed;
    const double heading = std::atan2(l.end.north - l.start.north, l.end.east - l.start.east);
    auto leg = survey_leg(Pose2D(l.start, heading), l.end, speed, spec, truth, sound_speed, rng, t);
    out.insert(out.end(), std::make_move_iterator(leg.begin()), std::make_move_iterator(leg.end()));
    t += distance(l.start, l.end) / speed;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ping log: NDJSON, one ping per line. NO_RETURN is null.
//   {"schema":1,"t":..,"pose":{"east":..,"north":..,"heading":..},
//    "angle":[..],"twt":[..|null],"intensity":[..|null],"material":["weed"|..|null]}
// ---------------------------------------------------------------------------

inline constexpr int kPingSchemaVersion = 1;

inline nlohmann::json ping_to_json(const SonarPing& p) {
  nlohmann::json j;
  j["schema"] = kPingSchemaVersion;
  j["t"] = p.timestamp;
  j["pose"] = {{"east", p.pose.position.east}, {"north", p.pose.position.north}, {"heading", p.pose.heading}};
  auto angle = nlohmann::json::array(), twt = nlohmann::json::array(), inten = nlohmann::json::array(),
       mat = nlohmann::json::array();
  for (const auto& r : p.returns) {
    angle.push_back(r.angle);
    twt.push_back(r.two_way_time ? nlohmann::json(*r.two_way_time) : nlohmann::json(nullptr));
    inten.push_back(r.intensity ? nlohmann::json(*r.intensity) : nlohmann::json(nullptr));
    mat.push_back(r.material_truth ? nlohmann::json(to_string(*r.material_truth)) : nlohmann::json(nullptr));
  }
  j["angle"] = std::move(angle);
  j["twt"] = std::move(twt);
  j["intensity"] = std::move(inten);
  j["material"] = std::move(mat);
  return j;
}

inline SonarPing ping_from_json(const nlohmann::json& j) {
  if (j.value("schema", 0) != kPingSchemaVersion) throw ConfigError("unsupported ping schema version");
  SonarPing p;
  p.timestamp = j.at("t").get<double>();
  const auto& pose = j.at("pose");
  p.pose = Pose2D({pose.at("east").get<double>(), pose.at("north").get<double>(), 0.0}, pose.at("heading").get<double>());
  const auto& angle = j.at("angle");
  const auto& twt = j.at("twt");
  const auto& inten = j.at("intensity");
  const auto& mat = j.at("material");
  if (twt.size() != angle.size() || inten.size() != angle.size() || mat.size() != angle.size())
    throw ConfigError("ping beam arrays differ in length");
  for (std::size_t k = 0; k < angle.size(); ++k) {
    BeamReturn r;
    r.beam_index = static_cast<int>(k);
    r.angle = angle[k].get<double>();
    if (!twt[k].is_null()) r.two_way_time = twt[k].get<double>();
    if (!inten[k].is_null()) r.intensity = inten[k].get<double>();
    if (!mat[k].is_null()) r.material_truth = material_from_string(mat[k].get<std::string>());
    p.returns.push_back(r);
  }
  return p;
}

inline void write_ping_log(const std::vector<SonarPing>& pings, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write ping log " + path.string());
  for (const auto& p : pings) f << ping_to_json(p).dump() << '\n';
}

inline std::vector<SonarPing> read_ping_log(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open ping log " + path.string());
  std::vector<SonarPing> pings;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed ping log line");
    pings.push_back(ping_from_json(j));
  }
  return pings;
}

inline void to_json(nlohmann::json& j, const SonarSpec& s) {
  j = nlohmann::json{{"mean_frequency", s.mean_frequency},
                     {"chirp_bandwidth", s.chirp_bandwidth},
                     {"n_beams", s.n_beams},
                     {"beam_width_deg", s.beam_width_deg},
                     {"swath_deg", s.swath_deg},
                     {"upper_gate", s.upper_gate},
                     {"lower_gate", s.lower_gate},
                     {"ping_rate", s.ping_rate},
                     {"range_noise_std", s.range_noise_std},
                     {"intensity_noise_std", s.intensity_noise_std},
                     {"footprint_smear", s.footprint_smear},
                     {"levels", {{"seabed", s.levels.seabed}, {"weed", s.levels.weed}, {"object", s.levels.object}}}};
}
inline void from_json(const nlohmann::json& j, SonarSpec& s) {
  const SonarSpec d;
  s.mean_frequency = j.value("mean_frequency", d.mean_frequency);
  s.chirp_bandwidth = j.value("chirp_bandwidth", d.chirp_bandwidth);
  s.n_beams = j.value("n_beams", d.n_beams);
  s.beam_width_deg = j.value("beam_width_deg", d.beam_width_deg);
  s.swath_deg = j.value("swath_deg", d.swath_deg);
  s.upper_gate = j.value("upper_gate", d.upper_gate);
  s.lower_gate = j.value("lower_gate", d.lower_gate);
  s.ping_rate = j.value("ping_rate", d.ping_rate);
  s.range_noise_std = j.value("range_noise_std", d.range_noise_std);
  s.intensity_noise_std = j.value("intensity_noise_std", d.intensity_noise_std);
  s.footprint_smear = j.value("footprint_smear", d.footprint_smear);
  if (j.contains("levels")) {
    const auto& l = j["levels"];
    s.levels.seabed = l.value("seabed", d.levels.seabed);
    s.levels.weed = l.value("weed", d.levels.weed);
    s.levels.object = l.value("object", d.levels.object);
  }
  s.validate();
}

}  // namespace lakekeeper
