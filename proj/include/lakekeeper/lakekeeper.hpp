#pragma once

// Umbrella header for the library (everything except the HTTP server, which
// needs httplib: include lakekeeper/server.hpp for that).

#include "lakekeeper/error.hpp"
#include "lakekeeper/geo_core.hpp"
#include "lakekeeper/esri_ascii.hpp"
#include "lakekeeper/lake_model.hpp"
#include "lakekeeper/svp.hpp"
#include "lakekeeper/sonar_sim.hpp"
#include "lakekeeper/bathy_pipeline.hpp"
#include "lakekeeper/backscatter.hpp"
#include "lakekeeper/planner.hpp"
#include "lakekeeper/event_log.hpp"
#include "lakekeeper/mission.hpp"
