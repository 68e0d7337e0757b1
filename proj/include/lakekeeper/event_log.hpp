#pragma once

// Append-only, totally ordered mission event log. One writer (the mission
// stepper), any number of readers; readers resume by sequence number.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lakekeeper/error.hpp"

namespace lakekeeper {

enum class EventKind {
  pose_update,
  new_soundings_summary,
  raster_updated,
  clusters_updated,
  plan_updated,
  phase_changed,
  report_ready
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::pose_update: return "pose_update";
    case EventKind::new_soundings_summary: return "new_soundings_summary";
    case EventKind::raster_updated: return "raster_updated";
    case EventKind::clusters_updated: return "clusters_updated";
    case EventKind::plan_updated: return "plan_updated";
    case EventKind::phase_changed: return "phase_changed";
    case EventKind::report_ready: return "report_ready";
  }
  return "pose_update";
}

inline EventKind event_kind_from_string(const std::string& s) {
  for (auto k : {EventKind::pose_update, EventKind::new_soundings_summary, EventKind::raster_updated,
                 EventKind::clusters_updated, EventKind::plan_updated, EventKind::phase_changed, EventKind::report_ready})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown event kind " + s);
}

struct Event {
  std::uint64_t seq = 0;  // starts at 1, strictly increasing
  double clock = 0.0;     // mission clock, s
  EventKind kind = EventKind::pose_update;
  nlohmann::json payload;

  friend bool operator==(const Event&, const Event&) = default;
};

inline nlohmann::json event_to_json(const Event& e) {
  return {{"seq", e.seq}, {"clock", e.clock}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
}

inline Event event_from_json(const nlohmann::json& j) {
  return {j.at("seq").get<std::uint64_t>(), j.at("clock").get<double>(),
          event_kind_from_string(j.at("kind").get<std::string>()), j.at("payload")};
}

class EventLog {
public:
  EventLog() = default;
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  std::uint64_t append(double clock, EventKind kind, nlohmann::json payload) {
    std::uint64_t seq;
    {
      std::lock_guard lock(mutex_);
      seq = events_.size() + 1;
      events_.push_back({seq, clock, kind, std::move(payload)});
    }
    cv_.notify_all();
    return seq;
  }

  /// Events with seq > since, at most `limit` of them.
  std::vector<Event> since(std::uint64_t since, std::size_t limit = SIZE_MAX) const {
    std::lock_guard lock(mutex_);
    std::vector<Event> out;
    for (std::size_t i = since; i < events_.size() && out.size() < limit; ++i) out.push_back(events_[i]);
    return out;
  }

  /// Blocks until an event with seq > since exists, the log is closed, or the
  /// timeout passes. Returns true if new events are available.
  template <typename Rep, typename Period>
  bool wait_for(std::uint64_t since, std::chrono::duration<Rep, Period> timeout) const {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return events_.size() > since || closed_; }) && events_.size() > since;
  }

  std::uint64_t last_seq() const {
    std::lock_guard lock(mutex_);
    return events_.size();
  }

  std::vector<Event> all() const { return since(0); }

  /// Wakes all waiters; used at shutdown.
  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

private:
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::vector<Event> events_;
  bool closed_ = false;
};

}  // namespace lakekeeper
