#pragma once

// Local planar geodesy, raster grids and pose types.
//
// Conventions used throughout the library:
//  - ENU coordinates in meters relative to a GeoOrigin (equirectangular).
//  - Depth is positive down, the water surface is 0.
//  - Raster row 0 is the southernmost row; ESRI ASCII output flips this.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lakekeeper/error.hpp"

namespace lakekeeper {

inline constexpr double kEarthRadius = 6371000.0;  // m
inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Sentinel for raster cells without a valid measurement.
inline constexpr double kNoData = -9999.0;

inline bool is_nodata(double v) { return v == kNoData; }

struct GeoOrigin {
  double lat0 = 0.0;  // degrees
  double lon0 = 0.0;  // degrees

  void validate() const {
    if (!(std::abs(lat0) <= 90.0) || !(std::abs(lon0) <= 180.0))
      throw DomainError("geo origin out of range");
  }
};

struct EnuPoint {
  double east = 0.0;
  double north = 0.0;
  double down = 0.0;

  friend bool operator==(const EnuPoint&, const EnuPoint&) = default;
};

inline double distance(const EnuPoint& a, const EnuPoint& b) {
  return std::hypot(b.east - a.east, b.north - a.north);
}

/// Wraps an angle to (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

struct Pose2D {
  EnuPoint position;
  double heading = 0.0;  // radians CCW from east, (-pi, pi]

  Pose2D() = default;
  Pose2D(EnuPoint p, double h) : position(p), heading(normalize_angle(h)) {}
};

/// Equirectangular projection about the origin.
inline EnuPoint project(double lat, double lon, const GeoOrigin& origin) {
  origin.validate();
  if (!(std::abs(lat) <= 90.0) || !(std::abs(lon) <= 180.0))
    throw DomainError("latitude/longitude out of range");
  const double k = kEarthRadius * kDegToRad;
  return {(lon - origin.lon0) * std::cos(origin.lat0 * kDegToRad) * k, (lat - origin.lat0) * k, 0.0};
}

/// Exact algebraic inverse of project(). Returns {lat, lon} in degrees.
inline std::pair<double, double> unproject(const EnuPoint& p, const GeoOrigin& origin) {
  const double k = kEarthRadius * kDegToRad;
  const double lat = origin.lat0 + p.north / k;
  const double lon = origin.lon0 + p.east / (std::cos(origin.lat0 * kDegToRad) * k);
  return {lat, lon};
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

struct CellIndex {
  int col = 0;
  int row = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
  friend auto operator<=>(const CellIndex& a, const CellIndex& b) {
    if (auto c = a.row <=> b.row; c != 0) return c;
    return a.col <=> b.col;
  }
};

struct GridSpec {
  EnuPoint origin;  // lower-left corner
  double cell_size = 1.0;
  int n_cols = 1;
  int n_rows = 1;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

  void validate() const {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ConfigError("grid cell_size must be > 0");
    if (n_cols < 1 || n_rows < 1) throw ConfigError("grid must have at least one row and column");
    if (!std::isfinite(origin.east) || !std::isfinite(origin.north)) throw ConfigError("grid origin not finite");
  }

  std::size_t size() const { return static_cast<std::size_t>(n_cols) * static_cast<std::size_t>(n_rows); }
  double cell_area() const { return cell_size * cell_size; }
  double width() const { return cell_size * n_cols; }
  double height() const { return cell_size * n_rows; }
  double max_east() const { return origin.east + width(); }
  double max_north() const { return origin.north + height(); }

  bool contains(const CellIndex& c) const { return c.col >= 0 && c.row >= 0 && c.col < n_cols && c.row < n_rows; }
  bool contains(const EnuPoint& p) const {
    return p.east >= origin.east && p.north >= origin.north && p.east < max_east() && p.north < max_north();
  }
  std::size_t linear(const CellIndex& c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(n_cols) + static_cast<std::size_t>(c.col);
  }
  CellIndex unlinear(std::size_t i) const {
    return {static_cast<int>(i % static_cast<std::size_t>(n_cols)), static_cast<int>(i / static_cast<std::size_t>(n_cols))};
  }
};

/// Cell containing p; points on the upper/right boundary are outside.
inline std::optional<CellIndex> cell_of(const EnuPoint& p, const GridSpec& spec) {
  const double fc = std::floor((p.east - spec.origin.east) / spec.cell_size);
  const double fr = std::floor((p.north - spec.origin.north) / spec.cell_size);
  if (!(fc >= 0.0 && fr >= 0.0 && fc < spec.n_cols && fr < spec.n_rows)) return std::nullopt;
  return CellIndex{static_cast<int>(fc), static_cast<int>(fr)};
}

inline EnuPoint cell_center(const CellIndex& c, const GridSpec& spec) {
  return {spec.origin.east + (c.col + 0.5) * spec.cell_size, spec.origin.north + (c.row + 0.5) * spec.cell_size, 0.0};
}

template <typename T>
struct NoDataTraits {
  static constexpr T value = static_cast<T>(kNoData);
};

// Masks use 0/1; 255 never occurs.
template <>
struct NoDataTraits<std::uint8_t> {
  static constexpr std::uint8_t value = 255;
};

/// Row-major raster over a GridSpec. Row 0 is the south edge.
template <typename T>
class Raster {
public:
  using value_type = T;
  static constexpr T nodata = NoDataTraits<T>::value;

  Raster() = default;
  explicit Raster(GridSpec spec, T fill = NoDataTraits<T>::value) : spec_(spec) {
    spec_.validate();
    values_.assign(spec_.size(), fill);
  }
  Raster(GridSpec spec, std::vector<T> values) : spec_(spec), values_(std::move(values)) {
    spec_.validate();
    if (values_.size() != spec_.size()) throw ConfigError("raster value count does not match grid");
  }

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return values_.size(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  T& at(const CellIndex& c) {
    check(c);
    return values_[spec_.linear(c)];
  }
  const T& at(const CellIndex& c) const {
    check(c);
    return values_[spec_.linear(c)];
  }
  T& at(int col, int row) { return at(CellIndex{col, row}); }
  const T& at(int col, int row) const { return at(CellIndex{col, row}); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  bool has_data(const CellIndex& c) const { return at(c) != nodata; }

  /// Value of the cell containing p, or nullopt outside the grid.
  std::optional<T> sample(const EnuPoint& p) const {
    const auto c = cell_of(p, spec_);
    if (!c) return std::nullopt;
    return values_[spec_.linear(*c)];
  }

  friend bool operator==(const Raster&, const Raster&) = default;

private:
  void check(const CellIndex& c) const {
    if (!spec_.contains(c)) throw QueryError("raster index out of bounds");
  }

  GridSpec spec_{};
  std::vector<T> values_;
};

using RasterD = Raster<double>;

/// Cell-wise binary operation; NODATA on either side yields NODATA.
template <typename T, typename Op>
Raster<T> combine(const Raster<T>& a, const Raster<T>& b, Op op) {
  if (!(a.spec() == b.spec())) throw ConfigError("raster grids differ");
  Raster<T> out(a.spec());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == Raster<T>::nodata || b[i] == Raster<T>::nodata) continue;
    out[i] = op(a[i], b[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planar shapes
// ---------------------------------------------------------------------------

using Polygon = std::vector<EnuPoint>;

struct Rect {
  double min_east = 0.0;
  double min_north = 0.0;
  double max_east = 0.0;
  double max_north = 0.0;

  friend bool operator==(const Rect&, const Rect&) = default;

  double width() const { return max_east - min_east; }
  double height() const { return max_north - min_north; }
  bool contains(const EnuPoint& p) const {
    return p.east >= min_east && p.east <= max_east && p.north >= min_north && p.north <= max_north;
  }
  Polygon to_polygon() const {
    return {{min_east, min_north, 0}, {max_east, min_north, 0}, {max_east, max_north, 0}, {min_east, max_north, 0}};
  }
  void validate() const {
    if (!(max_east > min_east) || !(max_north > min_north)) throw ConfigError("rectangle has no area");
  }
};

/// Shoelace area, positive for counter-clockwise rings.
inline double signed_area(std::span<const EnuPoint> ring) {
  double a = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = ring[i];
    const auto& q = ring[(i + 1) % n];
    a += p.east * q.north - q.east * p.north;
  }
  return 0.5 * a;
}

/// Even-odd point-in-polygon test.
inline bool contains(std::span<const EnuPoint> ring, const EnuPoint& p) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = ring[i];
    const auto& b = ring[j];
    if ((a.north > p.north) != (b.north > p.north)) {
      const double x = (b.east - a.east) * (p.north - a.north) / (b.north - a.north) + a.east;
      if (p.east < x) inside = !inside;
    }
  }
  return inside;
}

inline Rect bounding_box(std::span<const EnuPoint> pts) {
  Rect r{pts.empty() ? 0.0 : pts[0].east, pts.empty() ? 0.0 : pts[0].north, pts.empty() ? 0.0 : pts[0].east,
         pts.empty() ? 0.0 : pts[0].north};
  for (const auto& p : pts) {
    r.min_east = std::min(r.min_east, p.east);
    r.min_north = std::min(r.min_north, p.north);
    r.max_east = std::max(r.max_east, p.east);
    r.max_north = std::max(r.max_north, p.north);
  }
  return r;
}

/// Rectangle of the given width centred on segment a-b.
inline Polygon segment_strip(const EnuPoint& a, const EnuPoint& b, double width) {
  const double len = distance(a, b);
  if (len == 0.0) return {};
  const double nx = -(b.north - a.north) / len * width / 2.0;
  const double ny = (b.east - a.east) / len * width / 2.0;
  return {{a.east - nx, a.north - ny, 0}, {b.east - nx, b.north - ny, 0}, {b.east + nx, b.north + ny, 0},
          {a.east + nx, a.north + ny, 0}};
}

/// Cells whose centres fall inside the polygon, in row-major order.
inline std::vector<CellIndex> cells_in_polygon(std::span<const EnuPoint> ring, const GridSpec& spec) {
  std::vector<CellIndex> out;
  if (ring.size() < 3) return out;
  const Rect bb = bounding_box(ring);
  const int c0 = std::max(0, static_cast<int>(std::floor((bb.min_east - spec.origin.east) / spec.cell_size)));
  const int r0 = std::max(0, static_cast<int>(std::floor((bb.min_north - spec.origin.north) / spec.cell_size)));
  const int c1 = std::min(spec.n_cols - 1, static_cast<int>(std::floor((bb.max_east - spec.origin.east) / spec.cell_size)));
  const int r1 = std::min(spec.n_rows - 1, static_cast<int>(std::floor((bb.max_north - spec.origin.north) / spec.cell_size)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      if (contains(ring, cell_center({c, r}, spec))) out.push_back({c, r});
  return out;
}

}  // namespace lakekeeper
