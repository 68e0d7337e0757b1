#pragma once

// Ground-truth lake: bed bathymetry, weed canopy heightfield, harvestable
// density and submerged objects. The sonar simulator samples it and the
// harvester mutates it through mow().

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lakekeeper/esri_ascii.hpp"
#include "lakekeeper/geo_core.hpp"

namespace lakekeeper {

enum class Material { weed, seabed, object };

inline const char* to_string(Material m) {
  switch (m) {
    case Material::weed: return "weed";
    case Material::seabed: return "seabed";
    case Material::object: return "object";
  }
  return "seabed";
}

inline Material material_from_string(const std::string& s) {
  if (s == "weed") return Material::weed;
  if (s == "seabed") return Material::seabed;
  if (s == "object") return Material::object;
  throw ConfigError("unknown material " + s);
}

inline constexpr double kDefaultWeedDensity = 0.2;

struct WeedPatchSpec {
  EnuPoint center;
  double radius = 1.0;         // m
  double mean_height = 0.8;    // canopy height at the patch centre, m
  double height_jitter = 0.0;  // std of additive per-cell noise, m
  double density = kDefaultWeedDensity;

  void validate() const {
    if (!(radius > 0)) throw ConfigError("weed patch radius must be > 0");
    if (!(mean_height > 0)) throw ConfigError("weed patch mean_height must be > 0");
    if (!(height_jitter >= 0)) throw ConfigError("weed patch height_jitter must be >= 0");
    if (!(density > 0 && density <= 1)) throw ConfigError("weed patch density must be in (0, 1]");
  }
};

enum class ObjectKind { ladder, generic_box };

struct ObjectSpec {
  ObjectKind kind = ObjectKind::generic_box;
  Rect footprint;
  double top_depth = 1.0;
};

/// Smooth bed: base depth plus a low-frequency sinusoidal undulation.
struct BedParams {
  double base_depth = 3.0;
  double undulation_amplitude = 0.0;
  double undulation_wavelength = 50.0;

  double depth_at(const EnuPoint& p) const {
    if (undulation_amplitude == 0.0) return base_depth;
    const double k = 2.0 * std::numbers::pi / undulation_wavelength;
    return base_depth + undulation_amplitude * std::sin(k * p.east) * std::sin(k * p.north);
  }
  void validate() const {
    if (!(base_depth - std::abs(undulation_amplitude) > 0)) throw ConfigError("bed must stay below the surface");
    if (!(undulation_wavelength > 0)) throw ConfigError("bed undulation wavelength must be > 0");
  }
};

struct LakeTruth {
  RasterD bed;            // depth, m
  RasterD canopy_height;  // weed height above bed, m
  RasterD density;        // harvestable fraction of canopy volume
  std::vector<ObjectSpec> objects;
  std::uint64_t rng_seed = 0;

  const GridSpec& extent() const { return bed.spec(); }
  friend bool operator==(const LakeTruth& a, const LakeTruth& b) {
    return a.bed == b.bed && a.canopy_height == b.canopy_height && a.density == b.density &&
           a.objects.size() == b.objects.size() && a.rng_seed == b.rng_seed;
  }
};

inline LakeTruth synth_lake(const GridSpec& extent, const BedParams& bed_params,
                            const std::vector<WeedPatchSpec>& patches, const std::vector<ObjectSpec>& objects,
                            std::uint64_t seed) {
  extent.validate();
  bed_params.validate();
  for (const auto& p : patches) {
    p.validate();
    if (p.center.east - p.radius < extent.origin.east || p.center.east + p.radius > extent.max_east() ||
        p.center.north - p.radius < extent.origin.north || p.center.north + p.radius > extent.max_north())
      throw ConfigError("weed patch extends outside the lake extent");
  }

  LakeTruth t;
  t.rng_seed = seed;
  t.bed = RasterD(extent, 0.0);
  t.canopy_height = RasterD(extent, 0.0);
  t.density = RasterD(extent, kDefaultWeedDensity);
  for (std::size_t i = 0; i < extent.size(); ++i) t.bed[i] = bed_params.depth_at(cell_center(extent.unlinear(i), extent));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& p : patches) {
    for (const CellIndex& c : cells_in_polygon(Rect{p.center.east - p.radius, p.center.north - p.radius,
                                                    p.center.east + p.radius, p.center.north + p.radius}
                                                   .to_polygon(),
                                               extent)) {
      const double r = distance(cell_center(c, extent), p.center);
      if (r >= p.radius) continue;
      const double taper = p.mean_height * std::max(0.0, 1.0 - (r / p.radius) * (r / p.radius));
      const double jitter = p.height_jitter > 0 ? p.height_jitter * gauss(rng) : 0.0;
      const std::size_t i = extent.linear(c);
      const double h = std::clamp(taper + jitter, 0.0, t.bed[i]);
      if (h > t.canopy_height[i]) {
        t.canopy_height[i] = h;
        t.density[i] = p.density;
      }
    }
  }

  for (const auto& o : objects) {
    if (!(o.top_depth > 0)) throw ConfigError("object top_depth must be > 0");
    o.footprint.validate();
    for (const CellIndex& c : cells_in_polygon(o.footprint.to_polygon(), extent))
      if (!(o.top_depth < t.bed.at(c))) throw ConfigError("object top must lie above the bed");
  }
  t.objects = objects;
  return t;
}

struct SurfaceHit {
  double depth = 0.0;
  Material material = Material::seabed;
};

/// Shallowest acoustic surface at (east, north).
inline SurfaceHit first_return_depth(const EnuPoint& p, const LakeTruth& truth) {
  const auto cell = cell_of(p, truth.extent());
  if (!cell) throw QueryError("query point outside the lake extent");
  const std::size_t i = truth.extent().linear(*cell);
  SurfaceHit hit{truth.bed[i], Material::seabed};
  if (truth.canopy_height[i] > 0.0) hit = {truth.bed[i] - truth.canopy_height[i], Material::weed};
  for (const auto& o : truth.objects)
    if (o.top_depth < hit.depth && o.footprint.contains(p)) hit = {o.top_depth, Material::object};
  return hit;
}

/// Volume that mow() would remove, without mutating the truth.
inline double mow_preview(const LakeTruth& truth, const Polygon& swept, double cut_height) {
  if (!(cut_height >= 0)) throw DomainError("cut_height must be >= 0");
  if (swept.size() < 3 || signed_area(swept) == 0.0) return 0.0;
  double volume = 0.0;
  const double area = truth.extent().cell_area();
  for (const CellIndex& c : cells_in_polygon(swept, truth.extent())) {
    const std::size_t i = truth.extent().linear(c);
    volume += truth.density[i] * std::max(0.0, truth.canopy_height[i] - cut_height) * area;
  }
  return volume;
}

/// Cuts the canopy down to cut_height inside the polygon and returns the
/// harvested load volume (density-scaled), m^3.
inline double mow(LakeTruth& truth, const Polygon& swept, double cut_height) {
  if (!(cut_height >= 0)) throw DomainError("cut_height must be >= 0");
  if (swept.size() < 3 || signed_area(swept) == 0.0) return 0.0;
  double volume = 0.0;
  const double area = truth.extent().cell_area();
  for (const CellIndex& c : cells_in_polygon(swept, truth.extent())) {
    const std::size_t i = truth.extent().linear(c);
    const double old_h = truth.canopy_height[i];
    const double new_h = std::min(old_h, cut_height);
    volume += truth.density[i] * (old_h - new_h) * area;
    truth.canopy_height[i] = new_h;
  }
  return volume;
}

/// Sum of density * canopy_height * cell_area over the whole lake.
inline double canopy_load_volume(const LakeTruth& truth) {
  double v = 0.0;
  for (std::size_t i = 0; i < truth.canopy_height.size(); ++i) v += truth.density[i] * truth.canopy_height[i];
  return v * truth.extent().cell_area();
}

inline double canopy_volume(const LakeTruth& truth) {
  double v = 0.0;
  for (double h : truth.canopy_height.values()) v += h;
  return v * truth.extent().cell_area();
}

/// Mean canopy height over cells whose canopy exceeds min_height.
inline double mean_canopy_height(const LakeTruth& truth, double min_height = 0.0) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double h : truth.canopy_height.values())
    if (h > min_height) {
      sum += h;
      ++n;
    }
  if (n == 0) throw DomainError("no canopy above the requested height");
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// JSON and on-disk layout
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const EnuPoint& p) { j = nlohmann::json{{"east", p.east}, {"north", p.north}}; }
inline void from_json(const nlohmann::json& j, EnuPoint& p) {
  p.east = j.at("east").get<double>();
  p.north = j.at("north").get<double>();
  p.down = j.value("down", 0.0);
}

inline void to_json(nlohmann::json& j, const Rect& r) {
  j = nlohmann::json{{"min_east", r.min_east}, {"min_north", r.min_north}, {"max_east", r.max_east}, {"max_north", r.max_north}};
}
inline void from_json(const nlohmann::json& j, Rect& r) {
  r.min_east = j.at("min_east").get<double>();
  r.min_north = j.at("min_north").get<double>();
  r.max_east = j.at("max_east").get<double>();
  r.max_north = j.at("max_north").get<double>();
}

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  j = nlohmann::json{{"origin", g.origin}, {"cell_size", g.cell_size}, {"n_cols", g.n_cols}, {"n_rows", g.n_rows}};
}
inline void from_json(const nlohmann::json& j, GridSpec& g) {
  g.origin = j.at("origin").get<EnuPoint>();
  g.cell_size = j.at("cell_size").get<double>();
  g.n_cols = j.at("n_cols").get<int>();
  g.n_rows = j.at("n_rows").get<int>();
}

inline void to_json(nlohmann::json& j, const ObjectSpec& o) {
  j = nlohmann::json{{"kind", o.kind == ObjectKind::ladder ? "ladder" : "generic_box"},
                     {"footprint", o.footprint},
                     {"top_depth", o.top_depth}};
}
inline void from_json(const nlohmann::json& j, ObjectSpec& o) {
  const auto kind = j.value("kind", std::string("generic_box"));
  if (kind != "ladder" && kind != "generic_box") throw ConfigError("unknown object kind " + kind);
  o.kind = kind == "ladder" ? ObjectKind::ladder : ObjectKind::generic_box;
  o.footprint = j.at("footprint").get<Rect>();
  o.top_depth = j.at("top_depth").get<double>();
}

inline void to_json(nlohmann::json& j, const WeedPatchSpec& p) {
  j = nlohmann::json{{"center", p.center},
                     {"radius", p.radius},
                     {"mean_height", p.mean_height},
                     {"height_jitter", p.height_jitter},
                     {"density", p.density}};
}
inline void from_json(const nlohmann::json& j, WeedPatchSpec& p) {
  p.center = j.at("center").get<EnuPoint>();
  p.radius = j.at("radius").get<double>();
  p.mean_height = j.at("mean_height").get<double>();
  p.height_jitter = j.value("height_jitter", 0.0);
  p.density = j.value("density", kDefaultWeedDensity);
}

inline void to_json(nlohmann::json& j, const BedParams& b) {
  j = nlohmann::json{{"base_depth", b.base_depth},
                     {"undulation_amplitude", b.undulation_amplitude},
                     {"undulation_wavelength", b.undulation_wavelength}};
}
inline void from_json(const nlohmann::json& j, BedParams& b) {
  BedParams d;
  b.base_depth = j.value("base_depth", d.base_depth);
  b.undulation_amplitude = j.value("undulation_amplitude", d.undulation_amplitude);
  b.undulation_wavelength = j.value("undulation_wavelength", d.undulation_wavelength);
}

/// Everything synth_lake() needs; the serialisable form of a scenario.
struct LakeScenario {
  GridSpec extent;
  BedParams bed;
  std::vector<WeedPatchSpec> patches;
  std::vector<ObjectSpec> objects;
  std::uint64_t seed = 1;

  LakeTruth synthesize() const { return synth_lake(extent, bed, patches, objects, seed); }
};

inline void to_json(nlohmann::json& j, const LakeScenario& s) {
  j = nlohmann::json{{"extent", s.extent}, {"bed", s.bed}, {"patches", s.patches}, {"objects", s.objects}, {"seed", s.seed}};
}
inline void from_json(const nlohmann::json& j, LakeScenario& s) {
  s.extent = j.at("extent").get<GridSpec>();
  s.bed = j.value("bed", BedParams{});
  s.patches = j.value("patches", std::vector<WeedPatchSpec>{});
  s.objects = j.value("objects", std::vector<ObjectSpec>{});
  s.seed = j.value("seed", std::uint64_t{1});
}

/// Writes bed.asc, canopy.asc, density.asc, objects.json and meta.json.
inline void save_truth(const LakeTruth& truth, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  esri::write(truth.bed, (dir / "bed.asc").string());
  esri::write(truth.canopy_height, (dir / "canopy.asc").string());
  esri::write(truth.density, (dir / "density.asc").string());
  std::ofstream(dir / "objects.json") << nlohmann::json(truth.objects).dump(2) << '\n';
  std::ofstream(dir / "meta.json") << nlohmann::json{{"seed", truth.rng_seed}, {"extent", truth.extent()}}.dump(2) << '\n';
}

inline LakeTruth load_truth(const std::filesystem::path& dir) {
  LakeTruth t;
  t.bed = esri::read((dir / "bed.asc").string());
  t.canopy_height = esri::read((dir / "canopy.asc").string());
  t.density = esri::read((dir / "density.asc").string());
  if (!(t.bed.spec() == t.canopy_height.spec()) || !(t.bed.spec() == t.density.spec()))
    throw ConfigError("truth rasters have different grids");
  std::ifstream of(dir / "objects.json");
  if (of) t.objects = nlohmann::json::parse(of).get<std::vector<ObjectSpec>>();
  std::ifstream mf(dir / "meta.json");
  if (!mf) throw ConfigError("missing meta.json in " + dir.string());
  t.rng_seed = nlohmann::json::parse(mf).at("seed").get<std::uint64_t>();
  return t;
}

}  // namespace lakekeeper
