#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace intentkg {

// One time- and location-stamped interaction. `intent` is empty before
// item labeling; `item` is empty once only the intent stream matters.
struct UserEvent {
  std::string user;
  int64_t ts = 0;  // epoch seconds
  std::string location;
  std::string intent;  // opaque intent key (label or node id as text)
  std::string item;    // opaque item id

  bool labeled() const { return !intent.empty(); }
};

// Time-sorted, single-user slice of the event stream.
struct Session {
  std::string user;
  int segment = 0;  // index within the user's stream
  std::vector<UserEvent> events;

  int64_t start_ts() const { return events.empty() ? 0 : events.front().ts; }
};

// Splits per-user, time-sorted events whenever the inter-event gap exceeds
// `gap_seconds` or a session reaches `max_len`. Every event lands in exactly
// one session; output ordered by (user, start time).
std::vector<Session> segment_sessions(const std::vector<UserEvent>& events,
                                      int64_t gap_seconds, int max_len);

std::vector<UserEvent> load_events(const std::string& path);
std::vector<UserEvent> parse_events(const std::string& content);
std::string serialize_events(const std::vector<UserEvent>& events);
void save_events(const std::vector<UserEvent>& events, const std::string& path);

}  // namespace intentkg
