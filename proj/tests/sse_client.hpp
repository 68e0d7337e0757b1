#pragma once

// Minimal Server-Sent Events reader over httplib for the service tests.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace lakekeeper::testkit {

struct SseFrame {
  std::uint64_t id = 0;
  std::string event;
  nlohmann::json data;
};

/// Incremental frame parser: feed raw bytes, get complete frames.
class SseParser {
public:
  std::vector<SseFrame> feed(const char* bytes, std::size_t n) {
    buffer_.append(bytes, n);
    std::vector<SseFrame> out;
    for (std::size_t end; (end = buffer_.find("\n\n")) != std::string::npos;) {
      const std::string block = buffer_.substr(0, end);
      buffer_.erase(0, end + 2);
      SseFrame f;
      bool any = false;
      std::size_t pos = 0;
      while (pos <= block.size()) {
        std::size_t nl = block.find('\n', pos);
        if (nl == std::string::npos) nl = block.size();
        const std::string line = block.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty() || line[0] == ':') continue;
        const auto colon = line.find(':');
        const std::string key = line.substr(0, colon);
        std::string value = colon == std::string::npos ? "" : line.substr(colon + 1);
        if (!value.empty() && value[0] == ' ') value.erase(0, 1);
        if (key == "id") f.id = std::stoull(value), any = true;
        else if (key == "event") f.event = value, any = true;
        else if (key == "data") f.data = nlohmann::json::parse(value), any = true;
      }
      if (any) out.push_back(std::move(f));
    }
    return out;
  }

private:
  std::string buffer_;
};

/// Opens an SSE stream (resuming after `last_id` when non-zero) and hands each
/// frame to `on_frame` until it returns false or the server ends the stream.
inline void read_sse(httplib::Client& client, std::uint64_t last_id,
                     const std::function<bool(const SseFrame&)>& on_frame) {
  httplib::Headers headers{{"Accept", "text/event-stream"}};
  if (last_id > 0) headers.emplace("Last-Event-ID", std::to_string(last_id));
  SseParser parser;
  client.Get("/events", headers, [&](const char* data, std::size_t n) {
    for (const auto& f : parser.feed(data, n))
      if (!on_frame(f)) return false;
    return true;
  });
}

/// True for the last event a mission emits.
inline bool is_final_frame(const SseFrame& f) {
  return f.event == "phase_changed" && f.data.at("payload").at("to") == "Done";
}

}  // namespace lakekeeper::testkit
