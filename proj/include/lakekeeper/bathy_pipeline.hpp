#pragma once

// Ping logs -> georeferenced soundings -> robust bathymetric grids ->
// pre/post difference maps -> weed clusters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lakekeeper/geo_core.hpp"
#include "lakekeeper/lake_model.hpp"
#include "lakekeeper/sonar_sim.hpp"
#include "lakekeeper/svp.hpp"

namespace lakekeeper {

inline constexpr double kMadScale = 1.4826;
inline constexpr double kDefaultNoiseFloor = 0.15;  // m
inline constexpr double kDefaultCellSize = 0.5;     // m

struct Sounding {
  EnuPoint position;
  double depth = 0.0;      // m, positive down
  double intensity = 0.0;  // dB as received
  double angle = 0.0;      // beam angle from nadir, radians
  std::uint32_t ping_id = 0;
  std::uint16_t beam = 0;
};

/// Converts the valid returns of a ping into soundings. The effective sound
/// speed is evaluated at a nominal depth refined once from the first estimate.
inline std::vector<Sounding> georeference(const SonarPing& ping, const SvpCast& cast, std::uint32_t ping_id = 0) {
  std::vector<Sounding> out;
  const double surface_speed = effective_speed(cast, 0.0);
  const double stbd_e = std::sin(ping.pose.heading);
  const double stbd_n = -std::cos(ping.pose.heading);
  for (const auto& br : ping.returns) {
    if (!br.two_way_time || !br.intensity) continue;
    const double t = *br.two_way_time;
    const double cos_a = std::cos(br.angle), sin_a = std::sin(br.angle);
    const double guess = correct_range(t, cast, t * surface_speed / 2.0 * cos_a);
    const double r = correct_range(t, cast, guess * cos_a);
    Sounding s;
    s.position = {ping.pose.position.east + r * sin_a * stbd_e, ping.pose.position.north + r * sin_a * stbd_n, r * cos_a};
    s.depth = r * cos_a;
    s.intensity = *br.intensity;
    s.angle = br.angle;
    s.ping_id = ping_id;
    s.beam = static_cast<std::uint16_t>(br.beam_index);
    out.push_back(s);
  }
  return out;
}

inline std::vector<Sounding> georeference_all(const std::vector<SonarPing>& pings, const SvpCast& cast,
                                              std::uint32_t first_id = 0) {
  std::vector<Sounding> out;
  for (std::size_t i = 0; i < pings.size(); ++i) {
    auto s = georeference(pings[i], cast, first_id + static_cast<std::uint32_t>(i));
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

struct GriddingOptions {
  int min_count = 3;          // fewer soundings in a cell -> NODATA
  double reject_k = 3.0;      // reject |d - median| > reject_k * scaled MAD
};

namespace detail {

inline double median_sorted(std::span<const double> v) {
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median after a one-pass k*MAD spike filter. `v` must be sorted.
inline double robust_median(std::span<const double> v, double k, std::vector<double>& scratch) {
  const double med = median_sorted(v);
  scratch.clear();
  for (double d : v) scratch.push_back(std::abs(d - med));
  std::sort(scratch.begin(), scratch.end());
  const double limit = k * kMadScale * median_sorted(scratch);
  scratch.clear();
  for (double d : v)
    if (std::abs(d - med) <= limit) scratch.push_back(d);
  return median_sorted(scratch);
}

/// Groups values by cell, sorted within each cell.
template <typename Value>
std::vector<std::pair<std::size_t, Value>> bucket(const std::vector<Sounding>& soundings, const GridSpec& spec,
                                                  Value (*pick)(const Sounding&)) {
  std::vector<std::pair<std::size_t, Value>> cells;
  cells.reserve(soundings.size());
  for (const auto& s : soundings)
    if (const auto c = cell_of(s.position, spec)) cells.emplace_back(spec.linear(*c), pick(s));
  std::sort(cells.begin(), cells.end());
  return cells;
}

}  // namespace detail

/// Robust per-cell depth: median of the soundings that survive a 3*MAD spike
/// filter; cells with fewer than min_count soundings are NODATA.
inline RasterD grid_soundings(const std::vector<Sounding>& soundings, const GridSpec& spec,
                              const GriddingOptions& opt = {}) {
  spec.validate();
  RasterD grid(spec);
  const auto cells = detail::bucket<double>(soundings, spec, [](const Sounding& s) { return s.depth; });
  std::vector<double> depths, scratch;
  for (std::size_t i = 0; i < cells.size();) {
    std::size_t j = i;
    depths.clear();
    while (j < cells.size() && cells[j].first == cells[i].first) depths.push_back(cells[j++].second);
    if (static_cast<int>(depths.size()) >= opt.min_count)
      grid[cells[i].first] = detail::robust_median(depths, opt.reject_k, scratch);
    i = j;
  }
  return grid;
}

struct WeedHeightMap {
  RasterD height;  // m, >= 0 or NODATA
  std::string pre_id;
  std::string post_id;
};

/// Height removed between two surveys: post - pre, floored to 0 below noise_floor.
inline WeedHeightMap diff_grids(const RasterD& pre, const RasterD& post, double noise_floor = kDefaultNoiseFloor,
                                std::string pre_id = "pre", std::string post_id = "post") {
  if (!(pre.spec() == post.spec())) throw ConfigError("pre and post grids have different specs");
  WeedHeightMap m;
  m.height = combine(pre, post, [noise_floor](double a, double b) {
    const double h = b - a;
    return h < noise_floor ? 0.0 : h;
  });
  m.pre_id = std::move(pre_id);
  m.post_id = std::move(post_id);
  return m;
}

/// Mean over data cells with h > 0 whose centres satisfy `inside`.
template <typename Pred>
double mean_height_where(const WeedHeightMap& map, Pred inside) {
  double sum = 0.0;
  std::size_t n = 0;
  const GridSpec& g = map.height.spec();
  for (std::size_t i = 0; i < map.height.size(); ++i) {
    const double h = map.height[i];
    if (is_nodata(h) || !(h > 0.0)) continue;
    if (!inside(g.unlinear(i))) continue;
    sum += h;
    ++n;
  }
  if (n == 0) throw DomainError("no positive weed height cells inside the mask");
  return sum / static_cast<double>(n);
}

inline double mean_height(const WeedHeightMap& map, const std::optional<Polygon>& mask = std::nullopt) {
  if (!mask) return mean_height_where(map, [](const CellIndex&) { return true; });
  const GridSpec& g = map.height.spec();
  return mean_height_where(map, [&](const CellIndex& c) { return contains(*mask, cell_center(c, g)); });
}

inline double mean_height(const WeedHeightMap& map, const Raster<std::uint8_t>& mask) {
  if (!(mask.spec() == map.height.spec())) throw ConfigError("mask grid differs from height map");
  return mean_height_where(map, [&](const CellIndex& c) { return mask.at(c) != 0; });
}

/// Mean of all data cells.
inline double mean_value(const RasterD& r) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : r.values())
    if (!is_nodata(v)) {
      sum += v;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Clusters
// ---------------------------------------------------------------------------

struct ClusterCell {
  EnuPoint center;
  double height = 0.0;  // m
  double load = 0.0;    // density * height * cell_area, m^3
};

struct WeedCluster {
  int id = 0;
  Polygon polygon;  // outer ring, counter-clockwise, traced along cell edges
  std::vector<Polygon> holes;
  double area = 0.0;         // m^2
  double mean_height = 0.0;  // m
  double volume = 0.0;       // m^3, sum of height * cell_area
  double load_volume = 0.0;  // m^3, density-scaled
  EnuPoint centroid;
  double cell_size = kDefaultCellSize;
  std::vector<ClusterCell> cells;
};

namespace detail {

/// Traces the edges of a set of grid cells into closed rings. Interior lies
/// to the left of each edge, so outer rings are CCW and holes CW. At pinch
/// vertices the left-most turn is taken, which keeps diagonal neighbours in
/// separate rings (4-connectivity).
inline std::vector<Polygon> trace_rings(const std::vector<CellIndex>& cells, const GridSpec& spec) {
  using V = std::pair<int, int>;
  static constexpr int dx[4] = {1, 0, -1, 0};  // E N W S
  static constexpr int dy[4] = {0, 1, 0, -1};
  std::vector<std::uint8_t> member(spec.size(), 0);
  for (const auto& c : cells) member[spec.linear(c)] = 1;
  auto is_member = [&](int c, int r) { return spec.contains(CellIndex{c, r}) && member[spec.linear({c, r})]; };

  std::map<V, std::vector<std::pair<int, bool>>> out_edges;  // start vertex -> (direction, used)
  for (const auto& c : cells) {
    if (!is_member(c.col, c.row - 1)) out_edges[{c.col, c.row}].push_back({0, false});
    if (!is_member(c.col + 1, c.row)) out_edges[{c.col + 1, c.row}].push_back({1, false});
    if (!is_member(c.col, c.row + 1)) out_edges[{c.col + 1, c.row + 1}].push_back({2, false});
    if (!is_member(c.col - 1, c.row)) out_edges[{c.col, c.row + 1}].push_back({3, false});
  }

  std::vector<Polygon> rings;
  for (auto& [start, edges] : out_edges) {
    for (auto& first : edges) {
      if (first.second) continue;
      std::vector<V> verts;
      V v = start;
      const int first_dir = first.first;
      int dir = first_dir;
      first.second = true;
      verts.push_back(v);
      while (true) {
        v = {v.first + dx[dir], v.second + dy[dir]};
        auto& cand = out_edges[v];
        int next = -1;
        bool closed = false;
        for (int turn : {1, 0, 3}) {
          const int want = (dir + turn) % 4;
          if (v == start && want == first_dir) {
            closed = true;
            break;
          }
          for (auto& e : cand)
            if (!e.second && e.first == want) {
              e.second = true;
              next = want;
              break;
            }
          if (next >= 0) break;
        }
        if (closed || next < 0) break;
        if (next != dir) verts.push_back(v);
        dir = next;
      }
      // Drop the start vertex if it is collinear.
      if (verts.size() >= 3) {
        const V a = verts.back(), b = verts[0], c = verts[1];
        if ((b.first - a.first) * (c.second - b.second) - (b.second - a.second) * (c.first - b.first) == 0)
          verts.erase(verts.begin());
      }
      Polygon ring;
      for (const auto& [x, y] : verts)
        ring.push_back({spec.origin.east + x * spec.cell_size, spec.origin.north + y * spec.cell_size, 0.0});
      rings.push_back(std::move(ring));
    }
  }
  return rings;
}

}  // namespace detail

/// 4-connected components of member cells. Components smaller than min_area
/// are dropped; ordering follows the first cell in row-major order.
inline std::vector<WeedCluster> extract_clusters_from(const Raster<std::uint8_t>& member, const RasterD& height,
                                                      const RasterD& density, double min_area = 0.0) {
  if (!(min_area >= 0)) throw DomainError("min_area must be >= 0");
  const GridSpec& g = member.spec();
  if (!(height.spec() == g) || !(density.spec() == g)) throw ConfigError("cluster rasters are not aligned");

  std::vector<int> label(g.size(), 0);
  std::vector<WeedCluster> clusters;
  std::vector<std::size_t> stack;
  int next_id = 0;
  for (std::size_t seed = 0; seed < g.size(); ++seed) {
    if (!member[seed] || label[seed]) continue;
    ++next_id;
    std::vector<CellIndex> comp;
    stack.assign(1, seed);
    label[seed] = next_id;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const CellIndex c = g.unlinear(i);
      comp.push_back(c);
      const CellIndex nb[4] = {{c.col + 1, c.row}, {c.col - 1, c.row}, {c.col, c.row + 1}, {c.col, c.row - 1}};
      for (const auto& n : nb) {
        if (!g.contains(n)) continue;
        const std::size_t j = g.linear(n);
        if (member[j] && !label[j]) {
          label[j] = next_id;
          stack.push_back(j);
        }
      }
    }
    const double area = static_cast<double>(comp.size()) * g.cell_area();
    if (area < min_area || comp.empty()) continue;
    std::sort(comp.begin(), comp.end());

    WeedCluster wc;
    wc.cell_size = g.cell_size;
    wc.area = area;
    double ce = 0, cn = 0;
    for (const auto& c : comp) {
      const std::size_t i = g.linear(c);
      const double h = is_nodata(height[i]) ? 0.0 : std::max(0.0, height[i]);
      const double rho = is_nodata(density[i]) ? kDefaultWeedDensity : density[i];
      ClusterCell cell{cell_center(c, g), h, rho * h * g.cell_area()};
      wc.volume += h * g.cell_area();
      wc.load_volume += cell.load;
      ce += cell.center.east;
      cn += cell.center.north;
      wc.cells.push_back(cell);
    }
    wc.centroid = {ce / static_cast<double>(comp.size()), cn / static_cast<double>(comp.size()), 0.0};
    wc.mean_height = wc.volume / wc.area;
    auto rings = detail::trace_rings(comp, g);
    const auto outer = std::max_element(rings.begin(), rings.end(), [](const Polygon& a, const Polygon& b) {
      return signed_area(a) < signed_area(b);
    });
    wc.polygon = std::move(*outer);
    for (auto it = rings.begin(); it != rings.end(); ++it)
      if (it != outer) wc.holes.push_back(std::move(*it));
    clusters.push_back(std::move(wc));
  }
  for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].id = static_cast<int>(i) + 1;
  return clusters;
}

/// Clusters of cells with positive removed height.
inline std::vector<WeedCluster> extract_clusters(const WeedHeightMap& map, double min_area, const RasterD& density) {
  Raster<std::uint8_t> member(map.height.spec(), std::uint8_t{0});
  for (std::size_t i = 0; i < member.size(); ++i) member[i] = !is_nodata(map.height[i]) && map.height[i] > 0.0;
  return extract_clusters_from(member, map.height, density, min_area);
}

inline std::vector<WeedCluster> extract_clusters(const WeedHeightMap& map, double min_area,
                                                 double density = kDefaultWeedDensity) {
  return extract_clusters(map, min_area, RasterD(map.height.spec(), density));
}

// ---------------------------------------------------------------------------
// GeoJSON (local ENU metres; see docs/FORMATS.md)
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json ring_json(const Polygon& ring) {
  auto arr = nlohmann::json::array();
  for (const auto& p : ring) arr.push_back({p.east, p.north});
  if (!ring.empty()) arr.push_back({ring.front().east, ring.front().north});
  return arr;
}

inline Polygon ring_from_json(const nlohmann::json& arr) {
  Polygon ring;
  for (const auto& p : arr) ring.push_back({p.at(0).get<double>(), p.at(1).get<double>(), 0.0});
  if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  return ring;
}

}  // namespace detail

inline nlohmann::json clusters_to_geojson(const std::vector<WeedCluster>& clusters) {
  nlohmann::json fc;
  fc["type"] = "FeatureCollection";
  fc["crs"] = {{"type", "name"}, {"properties", {{"name", "lakekeeper:local-enu-m"}}}};
  auto features = nlohmann::json::array();
  for (const auto& c : clusters) {
    auto rings = nlohmann::json::array();
    rings.push_back(detail::ring_json(c.polygon));
    for (const auto& h : c.holes) rings.push_back(detail::ring_json(h));
    features.push_back({{"type", "Feature"},
                        {"id", c.id},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}},
                        {"properties",
                         {{"cluster_id", c.id},
                          {"area_m2", c.area},
                          {"mean_height_m", c.mean_height},
                          {"volume_m3", c.volume},
                          {"load_volume_m3", c.load_volume},
                          {"cell_size_m", c.cell_size},
                          {"centroid", {c.centroid.east, c.centroid.north}}}}});
  }
  fc["features"] = std::move(features);
  return fc;
}

/// Rebuilds clusters from GeoJSON. Member cells are recovered by rasterising
/// the polygon at cell_size_m; per-cell height and load are uniform.
inline std::vector<WeedCluster> clusters_from_geojson(const nlohmann::json& fc) {
  if (fc.value("type", std::string{}) != "FeatureCollection") throw ConfigError("expected a GeoJSON FeatureCollection");
  std::vector<WeedCluster> out;
  int auto_id = 0;
  for (const auto& f : fc.at("features")) {
    ++auto_id;
    const auto& geom = f.at("geometry");
    if (geom.value("type", std::string{}) != "Polygon") throw ConfigError("cluster geometry must be a Polygon");
    const auto& props = f.at("properties");
    WeedCluster c;
    c.id = props.value("cluster_id", auto_id);
    const auto& rings = geom.at("coordinates");
    if (rings.empty()) throw ConfigError("cluster polygon has no rings");
    c.polygon = detail::ring_from_json(rings[0]);
    for (std::size_t i = 1; i < rings.size(); ++i) c.holes.push_back(detail::ring_from_json(rings[i]));
    c.cell_size = props.value("cell_size_m", kDefaultCellSize);
    c.mean_height = props.value("mean_height_m", 0.0);
    c.volume = props.value("volume_m3", 0.0);
    c.load_volume = props.value("load_volume_m3", 0.0);
    if (c.polygon.size() < 3 || signed_area(c.polygon) == 0.0) throw ConfigError("degenerate cluster polygon");

    const Rect bb = bounding_box(c.polygon);
    GridSpec local{{bb.min_east, bb.min_north, 0}, c.cell_size,
                   std::max(1, static_cast<int>(std::lround(bb.width() / c.cell_size))),
                   std::max(1, static_cast<int>(std::lround(bb.height() / c.cell_size)))};
    std::vector<EnuPoint> centers;
    for (const auto& idx : cells_in_polygon(c.polygon, local)) {
      const EnuPoint p = cell_center(idx, local);
      bool in_hole = false;
      for (const auto& h : c.holes) in_hole = in_hole || contains(h, p);
      if (!in_hole) centers.push_back(p);
    }
    if (centers.empty()) throw ConfigError("cluster polygon covers no cells");
    c.area = static_cast<double>(centers.size()) * c.cell_size * c.cell_size;
    double ce = 0, cn = 0;
    for (const auto& p : centers) {
      c.cells.push_back({p, c.mean_height, c.load_volume / static_cast<double>(centers.size())});
      ce += p.east;
      cn += p.north;
    }
    c.centroid = {ce / static_cast<double>(centers.size()), cn / static_cast<double>(centers.size()), 0.0};
    out.push_back(std::move(c));
  }
  return out;
}

inline void write_clusters(const std::vector<WeedCluster>& clusters, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << clusters_to_geojson(clusters).dump(1) << '\n';
}

inline std::vector<WeedCluster> read_clusters(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  const auto j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("malformed GeoJSON " + path.string());
  return clusters_from_geojson(j);
}

}  // namespace lakekeeper
