#pragma once

// ESRI ASCII grid reader/writer.
//
// Output layout (bit-exact, see docs/FORMATS.md):
//
//   ncols        <int>
//   nrows        <int>
//   xllcorner    <real>
//   yllcorner    <real>
//   cellsize     <real>
//   NODATA_value -9999
//   <row nrows-1: ncols values separated by single spaces>
//   ...
//   <row 0>
//
// Reals use the shortest round-trip decimal form (std::to_chars), lines end in
// '\n'. The reader also accepts xllcenter/yllcenter and any key case.

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <type_traits>

#include "lakekeeper/geo_core.hpp"

namespace lakekeeper::esri {

namespace detail {

template <typename T>
void put_number(std::string& out, T v) {
  char buf[64];
  std::to_chars_result res;
  if constexpr (std::is_floating_point_v<T>) {
    if (v == 0) v = 0;  // drop negative zero
    res = std::to_chars(buf, buf + sizeof buf, v);
  } else {
    res = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
  }
  out.append(buf, res.ptr);
}

inline std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace detail

template <typename T>
std::string to_string(const Raster<T>& raster) {
  const GridSpec& g = raster.spec();
  std::string out;
  out.reserve(96 + raster.size() * 8);
  auto header = [&](const char* key, auto v) {
    out += key;
    detail::put_number(out, v);
    out += '\n';
  };
  header("ncols        ", g.n_cols);
  header("nrows        ", g.n_rows);
  header("xllcorner    ", g.origin.east);
  header("yllcorner    ", g.origin.north);
  header("cellsize     ", g.cell_size);
  header("NODATA_value ", static_cast<long long>(kNoData));
  for (int r = g.n_rows - 1; r >= 0; --r) {
    for (int c = 0; c < g.n_cols; ++c) {
      if (c) out += ' ';
      const T v = raster[g.linear({c, r})];
      if (v == Raster<T>::nodata)
        detail::put_number(out, static_cast<long long>(kNoData));
      else
        detail::put_number(out, v);
    }
    out += '\n';
  }
  return out;
}

template <typename T>
void write(const Raster<T>& raster, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << to_string(raster);
  if (!f) throw Error("write failed: " + path);
}

template <typename T = double>
Raster<T> parse(std::istream& in) {
  GridSpec g;
  bool have_cols = false, have_rows = false, have_x = false, have_y = false, have_cell = false;
  bool x_center = false, y_center = false;
  double nodata_in = kNoData;
  double x = 0, y = 0;

  // Header keys are alphabetic; the first numeric token starts the data block.
  std::string key;
  while (in >> std::ws && in.peek() != EOF && std::isalpha(in.peek())) {
    in >> key;
    const std::string k = detail::lower(key);
    double v = 0;
    if (!(in >> v)) throw ConfigError("ESRI ASCII: missing value for " + key);
    if (k == "ncols") {
      g.n_cols = static_cast<int>(v);
      have_cols = true;
    } else if (k == "nrows") {
      g.n_rows = static_cast<int>(v);
      have_rows = true;
    } else if (k == "xllcorner" || k == "xllcenter") {
      x = v;
      x_center = k == "xllcenter";
      have_x = true;
    } else if (k == "yllcorner" || k == "yllcenter") {
      y = v;
      y_center = k == "yllcenter";
      have_y = true;
    } else if (k == "cellsize") {
      g.cell_size = v;
      have_cell = true;
    } else if (k == "nodata_value") {
      nodata_in = v;
    } else {
      throw ConfigError("ESRI ASCII: unknown header key " + key);
    }
  }
  if (!(have_cols && have_rows && have_x && have_y && have_cell)) throw ConfigError("ESRI ASCII: incomplete header");
  g.origin = {x - (x_center ? g.cell_size / 2 : 0.0), y - (y_center ? g.cell_size / 2 : 0.0), 0.0};
  g.validate();

  Raster<T> raster(g);
  for (int r = g.n_rows - 1; r >= 0; --r) {
    for (int c = 0; c < g.n_cols; ++c) {
      double v = 0;
      if (!(in >> v)) throw ConfigError("ESRI ASCII: truncated data block");
      raster[g.linear({c, r})] = (v == nodata_in) ? Raster<T>::nodata : static_cast<T>(v);
    }
  }
  std::string extra;
  if (in >> extra) throw ConfigError("ESRI ASCII: trailing data after grid values");
  return raster;
}

template <typename T = double>
Raster<T> from_string(const std::string& text) {
  std::istringstream in(text);
  return parse<T>(in);
}

template <typename T = double>
Raster<T> read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open raster " + path);
  return parse<T>(f);
}

}  // namespace lakekeeper::esri
