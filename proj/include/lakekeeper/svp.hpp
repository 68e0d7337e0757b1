#pragma once

// Sound-velocity-profile casts and slant-range correction.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lakekeeper/error.hpp"

namespace lakekeeper {

inline constexpr double kMinPlausibleSoundSpeed = 1400.0;
inline constexpr double kMaxPlausibleSoundSpeed = 1600.0;

struct SvpSample {
  double depth = 0.0;        // m
  double sound_speed = 0.0;  // m/s
};

/// Depth/sound-speed profile, strictly increasing in depth.
struct SvpCast {
  std::vector<SvpSample> samples;
  std::string timestamp;  // ISO-8601, informational

  void validate() const {
    if (samples.empty()) throw ConfigError("sound velocity cast has no samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (!(s.depth >= 0)) throw ConfigError("cast depths must be >= 0");
      if (!(s.sound_speed >= kMinPlausibleSoundSpeed && s.sound_speed <= kMaxPlausibleSoundSpeed))
        throw ConfigError("cast sound speed outside plausible range [1400, 1600] m/s");
      if (i > 0 && !(s.depth > samples[i - 1].depth)) throw ConfigError("cast depths must be strictly increasing");
    }
  }

  static SvpCast constant(double speed) { return SvpCast{{{0.0, speed}}, {}}; }
};

/// Harmonic-mean sound speed of the piecewise-linear profile over [0, depth].
/// The profile is held constant above the first and below the last sample.
inline double effective_speed(const SvpCast& cast, double depth) {
  if (cast.samples.empty()) throw ConfigError("sound velocity cast has no samples");
  if (!(depth >= 0)) throw DomainError("depth must be >= 0");
  const auto& s = cast.samples;
  // Surface limit; the profile is constant above the first sample.
  if (depth == 0.0 || s.size() == 1) return s.front().sound_speed;

  // Slowness integral: sum of dz / c(z) over the layers.
  double slowness = 0.0;
  double z = 0.0;
  auto add_constant = [&](double z_end, double c) {
    if (z_end > z) {
      slowness += (z_end - z) / c;
      z = z_end;
    }
  };
  add_constant(std::min(depth, s.front().depth), s.front().sound_speed);
  for (std::size_t i = 1; i < s.size() && z < depth; ++i) {
    const double z0 = s[i - 1].depth, z1 = s[i].depth;
    const double c0 = s[i - 1].sound_speed, c1 = s[i].sound_speed;
    const double z_end = std::min(depth, z1);
    if (z_end <= z) continue;
    const double grad = (c1 - c0) / (z1 - z0);
    const double ca = c0 + grad * (z - z0);
    const double cb = c0 + grad * (z_end - z0);
    if (std::abs(grad) < 1e-12)
      slowness += (z_end - z) / ca;
    else
      slowness += std::log(cb / ca) / grad;
    z = z_end;
  }
  add_constant(depth, s.back().sound_speed);
  return depth / slowness;
}

/// One-way slant range for a two-way travel time.
inline double correct_range(double two_way_time, const SvpCast& cast, double nominal_depth) {
  if (!(two_way_time > 0)) throw DomainError("two-way travel time must be > 0");
  return two_way_time * effective_speed(cast, std::max(0.0, nominal_depth)) / 2.0;
}

// ---------------------------------------------------------------------------
// Cast files: CSV `depth_m,sound_speed_mps` plus a JSON sidecar with the
// timestamp (same stem, .json extension).
// ---------------------------------------------------------------------------

inline SvpCast parse_cast_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty cast file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "depth_m,sound_speed_mps") throw ConfigError("cast CSV header must be 'depth_m,sound_speed_mps'");
  SvpCast cast;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    SvpSample s;
    char comma = 0;
    if (!(ls >> s.depth >> comma >> s.sound_speed) || comma != ',') throw ConfigError("malformed cast line: " + line);
    cast.samples.push_back(s);
  }
  cast.validate();
  return cast;
}

inline SvpCast read_cast(const std::filesystem::path& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw ConfigError("cannot open cast " + csv_path.string());
  SvpCast cast = parse_cast_csv(f);
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  if (std::ifstream sf(sidecar); sf) {
    const auto j = nlohmann::json::parse(sf, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed cast sidecar " + sidecar.string());
    cast.timestamp = j.value("timestamp", std::string{});
  }
  return cast;
}

inline void write_cast(const SvpCast& cast, const std::filesystem::path& csv_path) {
  std::ofstream f(csv_path, std::ios::binary);
  if (!f) throw Error("cannot write cast " + csv_path.string());
  f << "depth_m,sound_speed_mps\n";
  for (const auto& s : cast.samples) f << nlohmann::json(s.depth).dump() << ',' << nlohmann::json(s.sound_speed).dump() << '\n';
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  std::ofstream(sidecar, std::ios::binary) << nlohmann::json{{"timestamp", cast.timestamp}}.dump() << '\n';
}

inline void to_json(nlohmann::json& j, const SvpCast& c) {
  j = nlohmann::json::object();
  j["timestamp"] = c.timestamp;
  auto& arr = j["samples"] = nlohmann::json::array();
  for (const auto& s : c.samples) arr.push_back({s.depth, s.sound_speed});
}
inline void from_json(const nlohmann::json& j, SvpCast& c) {
  c.timestamp = j.value("timestamp", std::string{});
  c.samples.clear();
  for (const auto& s : j.at("samples")) c.samples.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  c.validate();
}

}  // namespace lakekeeper
