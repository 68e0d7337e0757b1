#pragma once

// Small mission configurations shared by the service tests and the
// acceptance binary.

#include "lakekeeper/mission.hpp"

namespace lakekeeper::testkit {

/// A 50 x 30 m lake with two weed patches inside a 30 x 20 m survey area.
inline MissionConfig compact_mission() {
  MissionConfig c;
  c.scenario.extent = GridSpec{{-5, -5, 0}, 0.25, 200, 120};
  c.scenario.bed = BedParams{3.0, 0.0, 50.0};
  c.scenario.patches = {WeedPatchSpec{{8, 10, 0}, 4.0, 1.45, 0.05, 0.2}, WeedPatchSpec{{22, 10, 0}, 4.0, 1.45, 0.05, 0.2}};
  c.scenario.seed = 11;
  c.survey_area = Rect{0, 0, 30, 20};
  c.planner.unload_station = {-2, 10, 0};
  c.planner.unload_time = 60.0;
  c.harvester_start = {-2, 10, 0};
  c.sonar_seed = 3;
  c.dt = 1.0;
  return c;
}

}  // namespace lakekeeper::testkit
