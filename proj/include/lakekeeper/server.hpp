#pragma once

// Mission service: a stepper thread driving a Mission, plus the HTTP surface
// used by the operator console (state, rasters, clusters, plan, events,
// commands).

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lakekeeper/esri_ascii.hpp"
#include "lakekeeper/event_log.hpp"
#include "lakekeeper/mission.hpp"

namespace lakekeeper {

struct ServiceOptions {
  double dt = 0.5;                          // simulated seconds per step
  std::chrono::microseconds pace{20000};    // wall-clock pause between steps
  bool auto_start = true;                   // issue `start` when the service starts
  bool auto_approve = false;                // approve plans without an operator
};

/// Owns a Mission and steps it on a background thread. All mission access
/// goes through the service mutex; the event log is read without it.
class MissionService {
public:
  MissionService(MissionConfig config, ServiceOptions options)
      : options_(options), mission_(std::make_unique<Mission>(std::move(config))) {
    if (!(options_.dt > 0)) throw ConfigError("service dt must be > 0");
  }
  ~MissionService() { stop(); }

  MissionService(const MissionService&) = delete;
  MissionService& operator=(const MissionService&) = delete;

  void start() {
    if (thread_.joinable()) return;
    if (options_.auto_start) command({CommandKind::start, {}, {}, {}});
    running_ = true;
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
    mission_->events().close();
  }

  /// Runs a single step synchronously; for tests that drive the clock.
  void step_once() {
    std::lock_guard lock(mutex_);
    if (!mission_->done()) mission_->step(options_.dt);
  }

  CommandResult command(const Command& cmd) {
    std::lock_guard lock(mutex_);
    return mission_->command(cmd);
  }

  nlohmann::json state() const {
    std::lock_guard lock(mutex_);
    auto j = mission_->state_json();
    j["error"] = error_ ? nlohmann::json(*error_) : nlohmann::json(nullptr);
    return j;
  }

  /// Set when a mission step threw; the stepper stops at that point.
  std::optional<std::string> error() const {
    std::lock_guard lock(mutex_);
    return error_;
  }

  std::optional<std::string> raster_ascii(const std::string& name) const {
    std::lock_guard lock(mutex_);
    const auto& rasters = mission_->rasters();
    const auto it = rasters.find(name);
    if (it == rasters.end()) return std::nullopt;
    return esri::to_string(it->second);
  }

  nlohmann::json raster_names() const {
    std::lock_guard lock(mutex_);
    auto names = nlohmann::json::array();
    for (const auto& [name, r] : mission_->rasters()) names.push_back(name);
    return names;
  }

  nlohmann::json clusters_geojson() const {
    std::lock_guard lock(mutex_);
    return lakekeeper::clusters_to_geojson(mission_->clusters());
  }

  std::optional<nlohmann::json> plan_json() const {
    std::lock_guard lock(mutex_);
    if (!mission_->plan()) return std::nullopt;
    return plan_to_json(*mission_->plan());
  }

  std::optional<nlohmann::json> report_json() const {
    std::lock_guard lock(mutex_);
    if (!mission_->report()) return std::nullopt;
    return report_to_json(*mission_->report());
  }

  bool done() const {
    std::lock_guard lock(mutex_);
    return mission_->done();
  }

  void write_run(const std::filesystem::path& dir) const {
    std::lock_guard lock(mutex_);
    write_run_directory(*mission_, dir);
  }

  EventLog& events() { return mission_->events(); }

private:
  void run() {
    while (running_) {
      {
        std::lock_guard lock(mutex_);
        if (!mission_->done() && !error_) {
          try {
            if (options_.auto_approve && mission_->phase() == Phase::AwaitingApproval)
              mission_->command({CommandKind::approve_plan, {}, {}, {}});
            mission_->step(options_.dt);
          } catch (const std::exception& e) {
            error_ = e.what();
          }
        }
      }
      std::this_thread::sleep_for(options_.pace);
    }
  }

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::unique_ptr<Mission> mission_;
  std::optional<std::string> error_;
  std::atomic<bool> running_{false};
  std::thread thread_;
};

namespace detail {

inline std::string sse_frame(const Event& e) {
  std::ostringstream os;
  os << "id: " << e.seq << "\nevent: " << to_string(e.kind) << "\ndata: " << event_to_json(e).dump() << "\n\n";
  return os.str();
}

inline std::uint64_t parse_seq(const std::string& s) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

}  // namespace detail

/// HTTP front end for a MissionService.
///
///   GET  /state                 mission snapshot
///   GET  /rasters               raster names
///   GET  /rasters/{name}        ESRI ASCII grid
///   GET  /clusters              GeoJSON FeatureCollection
///   GET  /plan                  current plan (404 before the first plan)
///   GET  /report                final report (404 until ready)
///   GET  /events?since=N        JSON array of events with seq > N;
///                               wait_ms=T long-polls up to T ms when none are new.
///                               With Accept: text/event-stream (or stream=1)
///                               the same events are streamed as SSE; the
///                               Last-Event-ID header resumes a stream.
///   POST /command               JSON command; 200 accepted, 409 rejected, 400 malformed
class HttpServer {
public:
  explicit HttpServer(MissionService& service) : service_(service) { routes(); }
  ~HttpServer() { stop(); }

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and serves on a background
  /// thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    stopping_ = true;
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

private:
  static void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  void routes() {
    server_.Get("/state", [this](const httplib::Request&, httplib::Response& res) { send_json(res, service_.state()); });

    server_.Get("/rasters", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, service_.raster_names());
    });

    server_.Get(R"(/rasters/([A-Za-z0-9_]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (auto text = service_.raster_ascii(req.matches[1].str())) {
        res.set_content(*text, "text/plain");
      } else {
        send_json(res, {{"error", "no raster named " + req.matches[1].str()}}, 404);
      }
    });

    server_.Get("/clusters", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(service_.clusters_geojson().dump(), "application/geo+json");
    });

    server_.Get("/plan", [this](const httplib::Request&, httplib::Response& res) {
      if (auto p = service_.plan_json()) send_json(res, *p);
      else send_json(res, {{"error", "no plan yet"}}, 404);
    });

    server_.Get("/report", [this](const httplib::Request&, httplib::Response& res) {
      if (auto r = service_.report_json()) send_json(res, *r);
      else send_json(res, {{"error", "report not ready"}}, 404);
    });

    server_.Get("/events", [this](const httplib::Request& req, httplib::Response& res) { events(req, res); });

    server_.Post("/command", [this](const httplib::Request& req, httplib::Response& res) {
      Command cmd;
      try {
        cmd = command_from_json(nlohmann::json::parse(req.body));
      } catch (const nlohmann::json::exception& e) {
        return send_json(res, {{"error", std::string("malformed JSON: ") + e.what()}}, 400);
      } catch (const ConfigError& e) {
        return send_json(res, {{"error", e.what()}}, 400);
      }
      const CommandResult r = service_.command(cmd);
      if (!r.accepted) return send_json(res, {{"accepted", false}, {"reason", r.reason}}, 409);
      send_json(res, {{"accepted", true}, {"state", service_.state()}});
    });
  }

  void events(const httplib::Request& req, httplib::Response& res) {
    std::uint64_t since = 0;
    long wait_ms = 0;
    try {
      if (req.has_param("since")) since = detail::parse_seq(req.get_param_value("since"));
      if (req.has_header("Last-Event-ID")) since = detail::parse_seq(req.get_header_value("Last-Event-ID"));
      if (req.has_param("wait_ms")) wait_ms = static_cast<long>(detail::parse_seq(req.get_param_value("wait_ms")));
    } catch (const std::exception&) {
      return send_json(res, {{"error", "since, wait_ms and Last-Event-ID must be non-negative integers"}}, 400);
    }

    const bool stream = req.get_header_value("Accept").find("text/event-stream") != std::string::npos ||
                        req.get_param_value("stream") == "1";
    EventLog& log = service_.events();
    if (!stream) {
      if (wait_ms > 0) log.wait_for(since, std::chrono::milliseconds(wait_ms));
      auto arr = nlohmann::json::array();
      for (const auto& e : log.since(since)) arr.push_back(event_to_json(e));
      return send_json(res, arr);
    }

    auto cursor = std::make_shared<std::uint64_t>(since);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, &log, cursor](std::size_t, httplib::DataSink& sink) {
      if (stopping_ || log.closed()) {
        for (const auto& e : log.since(*cursor)) {
          const std::string frame = detail::sse_frame(e);
          sink.write(frame.data(), frame.size());
        }
        sink.done();
        return true;
      }
      if (!log.wait_for(*cursor, std::chrono::milliseconds(250))) {
        const std::string ping = ": keep-alive\n\n";
        return sink.write(ping.data(), ping.size());
      }
      for (const auto& e : log.since(*cursor, 256)) {
        const std::string frame = detail::sse_frame(e);
        if (!sink.write(frame.data(), frame.size())) return false;
        *cursor = e.seq;
      }
      return true;
    });
  }

  MissionService& service_;
  httplib::Server server_;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
};

}  // namespace lakekeeper
