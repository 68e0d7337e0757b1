#pragma once

// Capacity-constrained harvest route planning.
//
// A plan is a sequence of cluster visits; each visit mows the cluster's lanes
// in a fixed boustrophedon order. Whenever the conveyor load plus the next
// lane's expected load would exceed capacity, the harvester detours to the
// unload station first. plan() builds the visit order greedily
// (nearest-neighbour) and improves it with 2-opt; brute_force_plan() is the
// exhaustive oracle over visit orders and unload positions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lakekeeper/bathy_pipeline.hpp"
#include "lakekeeper/geo_core.hpp"

namespace lakekeeper {

inline constexpr double kConveyorCapacity = 15.0;  // m^3

struct PlannerConfig {
  double capacity = kConveyorCapacity;  // m^3
  double cutter_width = 2.0;            // m
  double lane_overlap = 0.0;            // fraction of cutter width shared by adjacent lanes
  double harvester_speed = 1.0;         // m/s
  EnuPoint unload_station;
  double unload_time = 300.0;  // s

  void validate() const {
    if (!(capacity > 0)) throw ConfigError("planner capacity must be > 0");
    if (!(cutter_width > 0)) throw ConfigError("cutter width must be > 0");
    if (!(lane_overlap >= 0 && lane_overlap < 1)) throw ConfigError("lane overlap must be in [0, 1)");
    if (!(harvester_speed > 0)) throw ConfigError("harvester speed must be > 0");
    if (!(unload_time >= 0)) throw ConfigError("unload time must be >= 0");
  }
  double lane_spacing() const { return cutter_width * (1.0 - lane_overlap); }
};

enum class LegKind { transit, harvest_lane, unload };

inline const char* to_string(LegKind k) {
  switch (k) {
    case LegKind::transit: return "transit";
    case LegKind::harvest_lane: return "harvest_lane";
    case LegKind::unload: return "unload";
  }
  return "transit";
}

inline LegKind leg_kind_from_string(const std::string& s) {
  if (s == "transit") return LegKind::transit;
  if (s == "harvest_lane") return LegKind::harvest_lane;
  if (s == "unload") return LegKind::unload;
  throw ConfigError("unknown leg kind " + s);
}

struct Leg {
  LegKind kind = LegKind::transit;
  EnuPoint start;
  EnuPoint end;
  std::optional<int> cluster_id;
  double expected_load_delta = 0.0;  // m^3, harvest lanes only

  double length() const { return distance(start, end); }
  friend bool operator==(const Leg&, const Leg&) = default;
};

struct HarvestPlan {
  std::vector<Leg> legs;
  double total_distance = 0.0;  // m
  double total_time = 0.0;      // s
  std::vector<double> load_profile;  // expected load after each leg
  std::size_t executed_prefix = 0;
  int version = 0;

  std::size_t unload_count() const {
    return static_cast<std::size_t>(
        std::count_if(legs.begin(), legs.end(), [](const Leg& l) { return l.kind == LegKind::unload; }));
  }
  double max_load() const {
    return load_profile.empty() ? 0.0 : *std::max_element(load_profile.begin(), load_profile.end());
  }
};

// ---------------------------------------------------------------------------
// Lanes
// ---------------------------------------------------------------------------

/// Boustrophedon lanes over a cluster. Lanes run along the longer side of the
/// cluster's bounding box; cells are partitioned into strips of width
/// cutter_width * (1 - lane_overlap) by their centres, and each non-empty strip
/// yields one lane spanning its cells.
inline std::vector<Leg> lanes_for_cluster(const WeedCluster& cluster, const PlannerConfig& config) {
  config.validate();
  if (cluster.cells.empty() || !(cluster.area > 0)) throw DomainError("cluster has no area");
  const double half = cluster.cell_size / 2.0;
  Rect bb{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(),
          std::numeric_limits<double>::lowest()};
  for (const auto& c : cluster.cells) {
    bb.min_east = std::min(bb.min_east, c.center.east - half);
    bb.min_north = std::min(bb.min_north, c.center.north - half);
    bb.max_east = std::max(bb.max_east, c.center.east + half);
    bb.max_north = std::max(bb.max_north, c.center.north + half);
  }
  const bool along_east = bb.width() >= bb.height();
  const double across_min = along_east ? bb.min_north : bb.min_east;
  const double across_len = along_east ? bb.height() : bb.width();
  const double spacing = config.lane_spacing();
  const int n = std::max(1, static_cast<int>(std::ceil(across_len / spacing - 1e-9)));

  struct Strip {
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    double load = 0.0;
    bool used = false;
  };
  std::vector<Strip> strips(n);
  for (const auto& c : cluster.cells) {
    const double across = along_east ? c.center.north : c.center.east;
    const double along = along_east ? c.center.east : c.center.north;
    const int k = std::clamp(static_cast<int>(std::floor((across - across_min) / spacing)), 0, n - 1);
    strips[k].lo = std::min(strips[k].lo, along - half);
    strips[k].hi = std::max(strips[k].hi, along + half);
    strips[k].load += c.load;
    strips[k].used = true;
  }

  std::vector<Leg> lanes;
  bool forward = true;
  for (int k = 0; k < n; ++k) {
    const Strip& s = strips[k];
    if (!s.used) continue;
    const double across = across_min + (k + 0.5) * spacing;
    auto point = [&](double along) {
      return along_east ? EnuPoint{along, across, 0} : EnuPoint{across, along, 0};
    };
    Leg lane;
    lane.kind = LegKind::harvest_lane;
    lane.start = point(forward ? s.lo : s.hi);
    lane.end = point(forward ? s.hi : s.lo);
    lane.cluster_id = cluster.id;
    lane.expected_load_delta = s.load;
    lanes.push_back(lane);
    forward = !forward;
  }
  return lanes;
}

/// Swept area of a lane: rectangle of cutter width centred on the lane line.
inline Polygon lane_swath(const Leg& lane, const PlannerConfig& config) {
  return segment_strip(lane.start, lane.end, config.cutter_width);
}

/// A group of lanes mowed together in fixed order (usually one cluster).
struct VisitUnit {
  int cluster_id = 0;
  std::vector<Leg> lanes;
};

// ---------------------------------------------------------------------------
// Expansion of a visit order into legs
// ---------------------------------------------------------------------------

namespace detail {

struct Expansion {
  std::vector<Leg> legs;
  std::vector<double> load_profile;
  double distance = 0.0;
};

class LegBuilder {
public:
  LegBuilder(EnuPoint start, double start_load, const PlannerConfig& config)
      : pos_(start), load_(start_load), config_(config) {}

  void transit_to(const EnuPoint& p) {
    if (p == pos_) return;
    push({LegKind::transit, pos_, p, std::nullopt, 0.0});
  }
  void unload() {
    transit_to(config_.unload_station);
    load_ = 0.0;
    push({LegKind::unload, config_.unload_station, config_.unload_station, std::nullopt, 0.0});
  }
  void lane(const Leg& lane) {
    transit_to(lane.start);
    load_ = load_ + lane.expected_load_delta;
    push(lane);
  }
  double load() const { return load_; }
  Expansion finish() && { return std::move(out_); }

private:
  void push(const Leg& leg) {
    out_.distance += leg.length();
    out_.legs.push_back(leg);
    out_.load_profile.push_back(load_);
    pos_ = leg.end;
  }

  EnuPoint pos_;
  double load_;
  const PlannerConfig& config_;
  Expansion out_;
};

/// Greedy capacity rule: unload right before a lane that would overflow, and
/// once more at the end if anything is on the conveyor.
inline Expansion expand(const std::vector<const VisitUnit*>& order, const EnuPoint& start, double start_load,
                        const PlannerConfig& config) {
  LegBuilder b(start, start_load, config);
  for (const VisitUnit* u : order)
    for (const Leg& lane : u->lanes) {
      if (b.load() + lane.expected_load_delta > config.capacity) b.unload();
      b.lane(lane);
    }
  if (b.load() > 0.0) b.unload();
  return std::move(b).finish();
}

inline void check_lanes(const std::vector<VisitUnit>& units, const PlannerConfig& config) {
  for (const auto& u : units)
    for (const auto& l : u.lanes) {
      if (!(l.expected_load_delta >= 0)) throw DomainError("lane load must be >= 0");
      if (l.expected_load_delta > config.capacity)
        throw DomainError("a single lane exceeds the conveyor capacity (cluster " + std::to_string(u.cluster_id) + ")");
    }
}

inline HarvestPlan to_plan(std::vector<Leg> prefix, std::vector<double> prefix_profile, Expansion suffix,
                           std::size_t executed_prefix, int version, const PlannerConfig& config) {
  HarvestPlan p;
  p.legs = std::move(prefix);
  p.load_profile = std::move(prefix_profile);
  p.legs.insert(p.legs.end(), suffix.legs.begin(), suffix.legs.end());
  p.load_profile.insert(p.load_profile.end(), suffix.load_profile.begin(), suffix.load_profile.end());
  p.total_distance = 0.0;
  for (const auto& l : p.legs) p.total_distance += l.length();
  p.total_time = p.total_distance / config.harvester_speed + static_cast<double>(p.unload_count()) * config.unload_time;
  p.executed_prefix = executed_prefix;
  p.version = version;
  return p;
}

/// Nearest-neighbour visit order from `start`, by distance to each unit's first lane.
inline std::vector<const VisitUnit*> greedy_order(const std::vector<VisitUnit>& units, const EnuPoint& start) {
  std::vector<const VisitUnit*> order;
  std::vector<bool> used(units.size(), false);
  EnuPoint pos = start;
  for (std::size_t step = 0; step < units.size(); ++step) {
    std::size_t best = units.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (used[i] || units[i].lanes.empty()) continue;
      const double d = distance(pos, units[i].lanes.front().start);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best == units.size()) break;
    used[best] = true;
    order.push_back(&units[best]);
    pos = units[best].lanes.back().end;
  }
  return order;
}

inline constexpr double kImprovementEps = 1e-9;

/// 2-opt over the visit order; accepts only strict improvements.
inline Expansion two_opt(std::vector<const VisitUnit*>& order, const EnuPoint& start, double start_load,
                         const PlannerConfig& config) {
  Expansion best = expand(order, start, start_load, config);
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i + 1 < order.size() && !improved; ++i)
      for (std::size_t j = i + 1; j < order.size() && !improved; ++j) {
        std::reverse(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        Expansion cand = expand(order, start, start_load, config);
        if (cand.distance < best.distance - kImprovementEps) {
          best = std::move(cand);
          improved = true;
        } else {
          std::reverse(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        }
      }
  }
  return best;
}

}  // namespace detail

inline std::vector<VisitUnit> units_for_clusters(const std::vector<WeedCluster>& clusters, const PlannerConfig& config) {
  std::vector<VisitUnit> units;
  for (const auto& c : clusters) units.push_back({c.id, lanes_for_cluster(c, config)});
  return units;
}

/// Greedy + 2-opt plan over visit units starting at `start` with `start_load`.
inline HarvestPlan plan_units(const std::vector<VisitUnit>& units, const PlannerConfig& config, const EnuPoint& start,
                              double start_load = 0.0) {
  config.validate();
  detail::check_lanes(units, config);
  if (start_load > config.capacity) throw StateError("starting load exceeds capacity");
  auto order = detail::greedy_order(units, start);
  auto best = detail::two_opt(order, start, start_load, config);
  return detail::to_plan({}, {}, std::move(best), 0, 1, config);
}

/// Plan in the given order without reordering (survey-track replay mode).
inline HarvestPlan plan_fixed_order(const std::vector<VisitUnit>& units, const PlannerConfig& config,
                                    const EnuPoint& start) {
  config.validate();
  detail::check_lanes(units, config);
  std::vector<const VisitUnit*> order;
  for (const auto& u : units) order.push_back(&u);
  return detail::to_plan({}, {}, detail::expand(order, start, 0.0, config), 0, 1, config);
}

inline HarvestPlan plan(const std::vector<WeedCluster>& clusters, const PlannerConfig& config, const EnuPoint& start) {
  return plan_units(units_for_clusters(clusters, config), config, start);
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

inline constexpr std::size_t kBruteForceMaxClusters = 8;

namespace detail {

/// Optimal unload placement for a fixed lane sequence (shortest path over
/// trip boundaries). Returns the expansion with minimal distance.
inline Expansion optimal_split(const std::vector<const VisitUnit*>& order, const EnuPoint& start, double start_load,
                               const PlannerConfig& config) {
  std::vector<const Leg*> lanes;
  for (const VisitUnit* u : order)
    for (const Leg& l : u->lanes) lanes.push_back(&l);
  const std::size_t m = lanes.size();
  const EnuPoint& depot = config.unload_station;

  // internal(i, j): lane lengths plus transits between consecutive lanes.
  std::vector<double> chain(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const double link = k > 0 ? distance(lanes[k - 1]->end, lanes[k]->start) : 0.0;
    chain[k + 1] = chain[k] + link + lanes[k]->length();
  }
  auto internal = [&](std::size_t i, std::size_t j) {
    return j > i ? chain[j] - chain[i] - (i > 0 ? distance(lanes[i - 1]->end, lanes[i]->start) : 0.0) : 0.0;
  };

  // Trip loads are accumulated front to back, exactly as expand() does, so the
  // feasibility decisions agree bit for bit.
  constexpr double inf = std::numeric_limits<double>::infinity();
  // best[j]: lanes [0, j) done, harvester unloaded at the depot.
  std::vector<double> best(m + 1, inf);
  std::vector<std::ptrdiff_t> prev(m + 1, -2);  // -1 marks the first trip from `start`
  double first_load = start_load;
  for (std::size_t j = 0; j <= m; ++j) {
    if (j > 0) first_load = first_load + lanes[j - 1]->expected_load_delta;
    if (first_load > config.capacity) break;
    const EnuPoint& tail = j > 0 ? lanes[j - 1]->end : start;
    best[j] = (j > 0 ? distance(start, lanes[0]->start) : 0.0) + internal(0, j) + distance(tail, depot);
    prev[j] = -1;
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (best[i] == inf) continue;
    double trip = 0.0;
    for (std::size_t j = i + 1; j <= m; ++j) {
      trip = trip + lanes[j - 1]->expected_load_delta;
      if (trip > config.capacity) break;
      const double c = best[i] + distance(depot, lanes[i]->start) + internal(i, j) + distance(lanes[j - 1]->end, depot);
      if (c < best[j]) {
        best[j] = c;
        prev[j] = static_cast<std::ptrdiff_t>(i);
      }
    }
  }

  // Without any load at the end, stopping after the last lane is allowed.
  std::optional<std::ptrdiff_t> free_tail;
  double total = best[m];
  if (first_load == 0.0 && start_load == 0.0) {
    const double c = (m > 0 ? distance(start, lanes[0]->start) : 0.0) + internal(0, m);
    if (c < total) {
      total = c;
      free_tail = -1;
    }
  }

  std::vector<std::size_t> cuts;  // trip starts after the first trip
  if (!free_tail) {
    for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(m); prev[static_cast<std::size_t>(j)] >= 0;
         j = prev[static_cast<std::size_t>(j)])
      cuts.push_back(static_cast<std::size_t>(prev[static_cast<std::size_t>(j)]));
    std::reverse(cuts.begin(), cuts.end());
  }

  LegBuilder b(start, start_load, config);
  std::size_t next_cut = 0;
  for (std::size_t k = 0; k < m; ++k) {
    if (next_cut < cuts.size() && cuts[next_cut] == k) {
      while (next_cut < cuts.size() && cuts[next_cut] == k) ++next_cut;
      b.unload();
    }
    b.lane(*lanes[k]);
  }
  if (!free_tail && (m > 0 || start_load > 0.0)) b.unload();
  return std::move(b).finish();
}

}  // namespace detail

/// Minimum-distance plan over every visit order and every feasible set of
/// unload positions (lane granularity). Ties go to the lexicographically first
/// cluster order. Refuses more than eight clusters.
inline HarvestPlan brute_force_plan(const std::vector<WeedCluster>& clusters, const PlannerConfig& config,
                                    const EnuPoint& start) {
  config.validate();
  if (clusters.size() > kBruteForceMaxClusters) throw DomainError("brute_force_plan supports at most 8 clusters");
  auto units = units_for_clusters(clusters, config);
  detail::check_lanes(units, config);
  std::sort(units.begin(), units.end(), [](const VisitUnit& a, const VisitUnit& b) { return a.cluster_id < b.cluster_id; });

  std::vector<std::size_t> perm(units.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::optional<detail::Expansion> best;
  do {
    std::vector<const VisitUnit*> order;
    for (auto i : perm) order.push_back(&units[i]);
    auto cand = detail::optimal_split(order, start, 0.0, config);
    if (!best || cand.distance < best->distance - detail::kImprovementEps) best = std::move(cand);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return detail::to_plan({}, {}, std::move(*best), 0, 1, config);
}

// ---------------------------------------------------------------------------
// Replanning
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<Expansion> verbatim_suffix(const HarvestPlan& current, double start_load,
                                                const PlannerConfig& config) {
  Expansion e;
  double load = start_load;
  for (std::size_t i = current.executed_prefix; i < current.legs.size(); ++i) {
    const Leg& l = current.legs[i];
    if (l.kind == LegKind::harvest_lane) load = load + l.expected_load_delta;
    if (l.kind == LegKind::unload) {
      if (!(l.end == config.unload_station)) return std::nullopt;  // station moved
      load = 0.0;
    }
    if (load > config.capacity) return std::nullopt;
    e.legs.push_back(l);
    e.load_profile.push_back(load);
    e.distance += l.length();
  }
  if (load > 0.0) return std::nullopt;
  return e;
}

}  // namespace detail

/// Re-plans the unexecuted part of `current`. Executed legs are kept verbatim;
/// the remaining lanes (grouped per cluster), minus excluded clusters, plus the
/// lanes of new clusters are planned from current_position with current_load.
inline HarvestPlan replan(const HarvestPlan& current, const std::vector<WeedCluster>& new_clusters,
                          const EnuPoint& current_position, double current_load, const PlannerConfig& config,
                          const std::vector<int>& excluded_cluster_ids = {}) {
  config.validate();
  if (current_load > config.capacity) throw StateError("current load exceeds conveyor capacity");
  if (current.executed_prefix > current.legs.size()) throw StateError("executed prefix longer than plan");
  if (current.executed_prefix > 0 && distance(current.legs[current.executed_prefix - 1].end, current_position) > 1e-6)
    throw StateError("current position does not match the end of the executed prefix");

  auto excluded = [&](int id) {
    return std::find(excluded_cluster_ids.begin(), excluded_cluster_ids.end(), id) != excluded_cluster_ids.end();
  };

  std::vector<VisitUnit> units;
  std::map<int, std::size_t> unit_of;
  for (std::size_t i = current.executed_prefix; i < current.legs.size(); ++i) {
    const Leg& l = current.legs[i];
    if (l.kind != LegKind::harvest_lane) continue;
    const int id = l.cluster_id.value_or(0);
    if (excluded(id)) continue;
    auto [it, fresh] = unit_of.try_emplace(id, units.size());
    if (fresh) units.push_back({id, {}});
    units[it->second].lanes.push_back(l);
  }
  const std::size_t n_old = units.size();
  for (const auto& c : new_clusters)
    if (!excluded(c.id)) units.push_back({c.id, lanes_for_cluster(c, config)});
  detail::check_lanes(units, config);

  // Candidate 1: greedy + 2-opt from scratch.
  auto order = detail::greedy_order(units, current_position);
  auto best = detail::two_opt(order, current_position, current_load, config);

  // Candidate 2: previous order with new work appended, then 2-opt.
  std::vector<const VisitUnit*> kept;
  for (const auto& u : units) kept.push_back(&u);
  auto alt = detail::two_opt(kept, current_position, current_load, config);
  if (alt.distance < best.distance - detail::kImprovementEps) best = std::move(alt);

  // Candidate 3: the untouched suffix, when nothing changed.
  if (new_clusters.empty() && units.size() == n_old && excluded_cluster_ids.empty())
    if (auto same = detail::verbatim_suffix(current, current_load, config))
      if (same->distance <= best.distance + detail::kImprovementEps) best = std::move(*same);

  std::vector<Leg> prefix(current.legs.begin(), current.legs.begin() + static_cast<std::ptrdiff_t>(current.executed_prefix));
  std::vector<double> prefix_profile(current.load_profile.begin(),
                                     current.load_profile.begin() + static_cast<std::ptrdiff_t>(current.executed_prefix));
  return detail::to_plan(std::move(prefix), std::move(prefix_profile), std::move(best), current.executed_prefix,
                         current.version + 1, config);
}

/// Forces an unload trip before the next harvest lane, keeping the remaining
/// lane order. Used when the actual conveyor load would overflow.
inline HarvestPlan splice_unload(const HarvestPlan& current, const EnuPoint& current_position, double current_load,
                                 const PlannerConfig& config) {
  std::vector<Leg> rest;
  for (std::size_t i = current.executed_prefix; i < current.legs.size(); ++i)
    if (current.legs[i].kind == LegKind::harvest_lane) rest.push_back(current.legs[i]);
  detail::LegBuilder b(current_position, current_load, config);
  b.unload();
  for (const Leg& lane : rest) {
    if (b.load() + lane.expected_load_delta > config.capacity) b.unload();
    b.lane(lane);
  }
  if (b.load() > 0.0) b.unload();
  std::vector<Leg> prefix(current.legs.begin(), current.legs.begin() + static_cast<std::ptrdiff_t>(current.executed_prefix));
  std::vector<double> prefix_profile(current.load_profile.begin(),
                                     current.load_profile.begin() + static_cast<std::ptrdiff_t>(current.executed_prefix));
  return detail::to_plan(std::move(prefix), std::move(prefix_profile), std::move(b).finish(), current.executed_prefix,
                         current.version + 1, config);
}

/// Structural check of the plan invariants; returns a description of the
/// first violation.
inline std::optional<std::string> check_plan(const HarvestPlan& p, const PlannerConfig& config) {
  if (p.load_profile.size() != p.legs.size()) return "load profile length differs from leg count";
  for (std::size_t i = 0; i < p.legs.size(); ++i) {
    const Leg& l = p.legs[i];
    if (p.load_profile[i] > config.capacity) return "load exceeds capacity after leg " + std::to_string(i);
    if (l.kind == LegKind::harvest_lane && !l.cluster_id) return "harvest lane without cluster id";
    if (l.kind == LegKind::unload) {
      if (!(l.end == config.unload_station)) return "unload leg away from the unload station";
      if (p.load_profile[i] != 0.0) return "load not reset by unload";
    }
    if (i > 0 && distance(p.legs[i - 1].end, l.start) > 1e-9) return "legs are not contiguous at " + std::to_string(i);
  }
  if (!p.load_profile.empty() && p.load_profile.back() != 0.0) return "plan ends with load on the conveyor";
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json plan_to_json(const HarvestPlan& p) {
  auto legs = nlohmann::json::array();
  for (std::size_t i = 0; i < p.legs.size(); ++i) {
    const Leg& l = p.legs[i];
    legs.push_back({{"kind", to_string(l.kind)},
                    {"start", {l.start.east, l.start.north}},
                    {"end", {l.end.east, l.end.north}},
                    {"cluster_id", l.cluster_id ? nlohmann::json(*l.cluster_id) : nlohmann::json(nullptr)},
                    {"expected_load_delta", l.expected_load_delta},
                    {"load_after", p.load_profile.at(i)}});
  }
  return {{"version", p.version},
          {"executed_prefix", p.executed_prefix},
          {"total_distance", p.total_distance},
          {"total_time", p.total_time},
          {"unload_count", p.unload_count()},
          {"max_load", p.max_load()},
          {"legs", std::move(legs)}};
}

inline HarvestPlan plan_from_json(const nlohmann::json& j) {
  HarvestPlan p;
  p.version = j.value("version", 0);
  p.executed_prefix = j.value("executed_prefix", std::size_t{0});
  p.total_distance = j.value("total_distance", 0.0);
  p.total_time = j.value("total_time", 0.0);
  for (const auto& lj : j.at("legs")) {
    Leg l;
    l.kind = leg_kind_from_string(lj.at("kind").get<std::string>());
    l.start = {lj.at("start").at(0).get<double>(), lj.at("start").at(1).get<double>(), 0.0};
    l.end = {lj.at("end").at(0).get<double>(), lj.at("end").at(1).get<double>(), 0.0};
    if (!lj.at("cluster_id").is_null()) l.cluster_id = lj.at("cluster_id").get<int>();
    l.expected_load_delta = lj.value("expected_load_delta", 0.0);
    p.legs.push_back(l);
    p.load_profile.push_back(lj.value("load_after", 0.0));
  }
  return p;
}

inline void to_json(nlohmann::json& j, const PlannerConfig& c) {
  j = nlohmann::json{{"capacity", c.capacity},
                     {"cutter_width", c.cutter_width},
                     {"lane_overlap", c.lane_overlap},
                     {"harvester_speed", c.harvester_speed},
                     {"unload_station", c.unload_station},
                     {"unload_time", c.unload_time}};
}
inline void from_json(const nlohmann::json& j, PlannerConfig& c) {
  const PlannerConfig d;
  c.capacity = j.value("capacity", d.capacity);
  c.cutter_width = j.value("cutter_width", d.cutter_width);
  c.lane_overlap = j.value("lane_overlap", d.lane_overlap);
  c.harvester_speed = j.value("harvester_speed", d.harvester_speed);
  c.unload_station = j.value("unload_station", d.unload_station);
  c.unload_time = j.value("unload_time", d.unload_time);
  c.validate();
}

}  // namespace lakekeeper
