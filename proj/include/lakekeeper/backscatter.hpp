#pragma once

// Backscatter mosaics and the per-cell weed/seabed/object rule cascade.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lakekeeper/bathy_pipeline.hpp"
#include "lakekeeper/esri_ascii.hpp"
#include "lakekeeper/geo_core.hpp"
#include "lakekeeper/lake_model.hpp"

namespace lakekeeper {

enum class MaterialClass : std::uint8_t { unknown = 0, seabed = 1, weed = 2, object = 3 };

template <>
struct NoDataTraits<MaterialClass> {
  static constexpr MaterialClass value = MaterialClass::unknown;
};

inline const char* to_string(MaterialClass c) {
  switch (c) {
    case MaterialClass::seabed: return "seabed";
    case MaterialClass::weed: return "weed";
    case MaterialClass::object: return "object";
    case MaterialClass::unknown: break;
  }
  return "unknown";
}

struct IntensityMosaic {
  RasterD intensity;    // dB, angle-normalised; NODATA where count == 0
  Raster<int> counts;
};

/// Per-cell mean intensity after removing the 10*log10(cos(theta)) term.
inline IntensityMosaic mosaic(const std::vector<Sounding>& soundings, const GridSpec& spec) {
  spec.validate();
  IntensityMosaic m{RasterD(spec, 0.0), Raster<int>(spec, 0)};
  for (const auto& s : soundings) {
    const auto c = cell_of(s.position, spec);
    if (!c) continue;
    const std::size_t i = spec.linear(*c);
    m.intensity[i] += s.intensity - 10.0 * std::log10(std::cos(s.angle));
    m.counts[i] += 1;
  }
  for (std::size_t i = 0; i < m.intensity.size(); ++i)
    m.intensity[i] = m.counts[i] > 0 ? m.intensity[i] / m.counts[i] : kNoData;
  return m;
}

struct ClassifyThresholds {
  double object_db = -8.0;  // intensity above -> object
  double weed_db = -20.0;   // intensity below (with height) -> weed
  double height_m = 0.3;    // height above -> weed candidate
};

enum class HeightSource { difference, canopy_proxy };

inline const char* to_string(HeightSource s) { return s == HeightSource::difference ? "difference" : "canopy_proxy"; }

struct ClassificationMap {
  Raster<MaterialClass> classes;
  HeightSource height_source = HeightSource::difference;
};

/// Rule cascade: object if bright, weed if tall and dark, seabed otherwise.
/// Cells without intensity are unknown; NODATA height counts as 0.
inline ClassificationMap classify(const IntensityMosaic& mosaic, const RasterD& height, const ClassifyThresholds& th = {},
                                  HeightSource source = HeightSource::difference) {
  if (!(mosaic.intensity.spec() == height.spec())) throw ConfigError("mosaic and height rasters are not aligned");
  ClassificationMap out{Raster<MaterialClass>(height.spec(), MaterialClass::unknown), source};
  for (std::size_t i = 0; i < height.size(); ++i) {
    const double db = mosaic.intensity[i];
    if (is_nodata(db)) continue;
    const double h = is_nodata(height[i]) ? 0.0 : height[i];
    if (db > th.object_db)
      out.classes[i] = MaterialClass::object;
    else if (h > th.height_m && db < th.weed_db)
      out.classes[i] = MaterialClass::weed;
    else
      out.classes[i] = MaterialClass::seabed;
  }
  return out;
}

namespace detail {

/// Sliding-window maximum along one axis (monotone deque), skipping NODATA.
inline void running_max(std::vector<double>& line, int radius) {
  const int n = static_cast<int>(line.size());
  std::vector<double> out(line.size(), kNoData);
  std::deque<int> dq;
  int added = -1;
  for (int i = 0; i < n; ++i) {
    while (added < std::min(n - 1, i + radius)) {
      ++added;
      if (is_nodata(line[added])) continue;
      while (!dq.empty() && line[dq.back()] <= line[added]) dq.pop_back();
      dq.push_back(added);
    }
    while (!dq.empty() && dq.front() < i - radius) dq.pop_front();
    if (!dq.empty()) out[i] = line[dq.front()];
  }
  line.swap(out);
}

}  // namespace detail

/// Single-pass canopy height proxy: deepest depth within a square window of
/// half-width radius_m minus the local depth. Lower confidence than differencing.
inline RasterD canopy_proxy(const RasterD& bathy, double radius_m = 8.0) {
  const GridSpec& g = bathy.spec();
  const int rad = std::max(0, static_cast<int>(std::lround(radius_m / g.cell_size)));
  RasterD window_max = bathy;
  std::vector<double> line;
  for (int r = 0; r < g.n_rows; ++r) {
    line.assign(g.n_cols, 0.0);
    for (int c = 0; c < g.n_cols; ++c) line[c] = window_max.at(c, r);
    detail::running_max(line, rad);
    for (int c = 0; c < g.n_cols; ++c) window_max.at(c, r) = line[c];
  }
  for (int c = 0; c < g.n_cols; ++c) {
    line.assign(g.n_rows, 0.0);
    for (int r = 0; r < g.n_rows; ++r) line[r] = window_max.at(c, r);
    detail::running_max(line, rad);
    for (int r = 0; r < g.n_rows; ++r) window_max.at(c, r) = line[r];
  }
  RasterD proxy(g);
  for (std::size_t i = 0; i < proxy.size(); ++i)
    if (!is_nodata(bathy[i])) proxy[i] = std::max(0.0, window_max[i] - bathy[i]);
  return proxy;
}

/// Binary dilation of a 0/1 mask with a 4-neighbourhood, repeated `steps` times.
inline Raster<std::uint8_t> dilate(const Raster<std::uint8_t>& mask, int steps) {
  Raster<std::uint8_t> cur = mask;
  const GridSpec& g = mask.spec();
  for (int s = 0; s < steps; ++s) {
    Raster<std::uint8_t> next = cur;
    for (int r = 0; r < g.n_rows; ++r)
      for (int c = 0; c < g.n_cols; ++c) {
        if (cur.at(c, r) == 1) continue;
        const CellIndex nb[4] = {{c + 1, r}, {c - 1, r}, {c, r + 1}, {c, r - 1}};
        for (const auto& n : nb)
          if (g.contains(n) && cur.at(n) == 1) {
            next.at(c, r) = 1;
            break;
          }
      }
    cur = std::move(next);
  }
  return cur;
}

inline Raster<std::uint8_t> class_mask(const ClassificationMap& map, MaterialClass cls) {
  Raster<std::uint8_t> m(map.classes.spec(), std::uint8_t{0});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = map.classes[i] == cls;
  return m;
}

/// Weed clusters from a classification map; volumes use `height`.
inline std::vector<WeedCluster> extract_clusters(const ClassificationMap& map, double min_area, const RasterD& height,
                                                 const RasterD& density) {
  return extract_clusters_from(class_mask(map, MaterialClass::weed), height, density, min_area);
}

// ---------------------------------------------------------------------------
// Confusion against ground truth
// ---------------------------------------------------------------------------

struct ConfusionReport {
  // counts[truth][predicted], classes indexed seabed=0, weed=1, object=2.
  std::array<std::array<std::size_t, 3>, 3> counts{};

  static int index(MaterialClass c) { return static_cast<int>(c) - 1; }

  /// Precision of a class; 1.0 when nothing was predicted as that class.
  double precision(MaterialClass c) const {
    const int k = index(c);
    std::size_t predicted = 0;
    for (int t = 0; t < 3; ++t) predicted += counts[t][k];
    return predicted ? static_cast<double>(counts[k][k]) / static_cast<double>(predicted) : 1.0;
  }
  /// Recall of a class; 1.0 when the truth has no such cells.
  double recall(MaterialClass c) const {
    const int k = index(c);
    std::size_t actual = 0;
    for (int p = 0; p < 3; ++p) actual += counts[k][p];
    return actual ? static_cast<double>(counts[k][k]) / static_cast<double>(actual) : 1.0;
  }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
      for (auto v : row) n += v;
    return n;
  }
};

/// Truth label at a point: object footprint, else weed where canopy exceeds
/// min_weed_canopy, else seabed.
inline MaterialClass truth_class(const EnuPoint& p, const LakeTruth& truth, double min_weed_canopy = 0.0) {
  for (const auto& o : truth.objects)
    if (o.footprint.contains(p)) return MaterialClass::object;
  const auto h = truth.canopy_height.sample(p);
  if (!h) throw QueryError("classification cell outside the lake extent");
  return *h > min_weed_canopy ? MaterialClass::weed : MaterialClass::seabed;
}

/// Confusion counts over classified (non-unknown) cells, truth sampled at cell centres.
inline ConfusionReport confusion(const ClassificationMap& classified, const LakeTruth& truth,
                                 double min_weed_canopy = 0.0) {
  ConfusionReport rep;
  const GridSpec& g = classified.classes.spec();
  for (std::size_t i = 0; i < classified.classes.size(); ++i) {
    const MaterialClass pred = classified.classes[i];
    if (pred == MaterialClass::unknown) continue;
    const MaterialClass t = truth_class(cell_center(g.unlinear(i), g), truth, min_weed_canopy);
    rep.counts[ConfusionReport::index(t)][ConfusionReport::index(pred)] += 1;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Files: integer-coded ESRI ASCII plus a JSON legend.
// ---------------------------------------------------------------------------

inline Raster<int> class_codes(const ClassificationMap& map) {
  Raster<int> codes(map.classes.spec(), 0);
  for (std::size_t i = 0; i < codes.size(); ++i) codes[i] = static_cast<int>(map.classes[i]);
  return codes;
}

inline nlohmann::json classification_legend(const ClassificationMap& map, const ClassifyThresholds& th = {}) {
  return {{"codes", {{"0", "unknown"}, {"1", "seabed"}, {"2", "weed"}, {"3", "object"}}},
          {"height_source", to_string(map.height_source)},
          {"low_confidence", map.height_source == HeightSource::canopy_proxy},
          {"thresholds", {{"object_db", th.object_db}, {"weed_db", th.weed_db}, {"height_m", th.height_m}}}};
}

inline void write_classification(const ClassificationMap& map, const std::filesystem::path& asc_path,
                                 const ClassifyThresholds& th = {}) {
  esri::write(class_codes(map), asc_path.string());
  auto legend = asc_path;
  legend.replace_extension(".json");
  std::ofstream(legend, std::ios::binary) << classification_legend(map, th).dump(2) << '\n';
}

inline ClassificationMap read_classification(const std::filesystem::path& asc_path) {
  const auto codes = esri::read<int>(asc_path.string());
  ClassificationMap map{Raster<MaterialClass>(codes.spec(), MaterialClass::unknown), HeightSource::difference};
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0 || codes[i] > 3) throw ConfigError("invalid classification code");
    map.classes[i] = static_cast<MaterialClass>(codes[i]);
  }
  auto legend = asc_path;
  legend.replace_extension(".json");
  if (std::ifstream lf(legend); lf) {
    const auto j = nlohmann::json::parse(lf, nullptr, false);
    if (!j.is_discarded() && j.value("height_source", std::string{}) == "canopy_proxy")
      map.height_source = HeightSource::canopy_proxy;
  }
  return map;
}

}  // namespace lakekeeper
