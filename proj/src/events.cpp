#include "intentkg/events.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

#include "intentkg/errors.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

using nlohmann::json;

std::vector<Session> segment_sessions(const std::vector<UserEvent>& events,
                                      int64_t gap_seconds, int max_len) {
  if (gap_seconds <= 0) throw std::invalid_argument("segment_sessions: gap must be positive");
  if (max_len <= 0) throw std::invalid_argument("segment_sessions: max_len must be positive");

  std::map<std::string, std::vector<UserEvent>> per_user;
  for (const UserEvent& e : events) per_user[e.user].push_back(e);

  std::vector<Session> sessions;
  for (auto& [user, evs] : per_user) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const UserEvent& a, const UserEvent& b) { return a.ts < b.ts; });
    Session cur;
    cur.user = user;
    cur.segment = 0;
    for (const UserEvent& e : evs) {
      bool split = !cur.events.empty() &&
                   (e.ts - cur.events.back().ts > gap_seconds ||
                    static_cast<int>(cur.events.size()) >= max_len);
      if (split) {
        sessions.push_back(std::move(cur));
        cur = Session{};
        cur.user = user;
        cur.segment = sessions.back().segment + 1;
      }
      cur.events.push_back(e);
    }
    if (!cur.events.empty()) sessions.push_back(std::move(cur));
  }
  return sessions;  // map iteration is user-sorted; segments are time-ordered
}

std::vector<UserEvent> parse_events(const std::string& content) {
  std::vector<UserEvent> events;
  std::istringstream is(content);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad event json: ") + e.what(), line_no);
    }
    try {
      UserEvent e;
      e.user = j.at("user").get<std::string>();
      e.ts = j.at("ts").get<int64_t>();
      e.location = j.value("loc", "");
      e.intent = j.value("intent", "");
      e.item = j.value("item", "");
      if (e.ts < 0) throw ParseError("negative timestamp", line_no);
      if (e.intent.empty() && e.item.empty()) {
        throw ParseError("event carries neither intent nor item", line_no);
      }
      events.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad event record: ") + e.what(), line_no);
    }
  }
  return events;
}

std::vector<UserEvent> load_events(const std::string& path) {
  return parse_events(read_text_file(path));
}

std::string serialize_events(const std::vector<UserEvent>& events) {
  std::ostringstream os;
  for (const UserEvent& e : events) {
    json j;
    j["user"] = e.user;
    j["ts"] = e.ts;
    j["loc"] = e.location;
    if (!e.intent.empty()) j["intent"] = e.intent;
    if (!e.item.empty()) j["item"] = e.item;
    os << j.dump() << "\n";
  }
  return os.str();
}

void save_events(const std::vector<UserEvent>& events, const std::string& path) {
  write_text_file(path, serialize_events(events));
}

}  // namespace intentkg
