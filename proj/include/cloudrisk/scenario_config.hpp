#pragma once

// Scenario and workload files.
//
// Scenario:
//   {"id": "..", "kind": "dedicated" | "reservation" | "statmux",
//    "principals": ["A", "B"],
//    "cores": [{"id": "a0", "owner": "A"}, ...],          dedicated only
//    "timeslice_ticks": 100000, "slice_pattern": ["A","B"], reservation only
//    "pacer": {"queue_id": "q", "rate": "1", "phase_ticks": 0} | null,  statmux
//    "capabilities": {"A": ["B-:1/1"], "scheduler": []},
//    "horizon_ticks": 20000000}
//
// Workload:
//   {"id": "..", "jobs": {"A": [{"submit_tick": 0, "demand_ticks": 300, "tag": "a0"}]}}

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cloudrisk/errors.hpp"
#include "cloudrisk/label.hpp"
#include "cloudrisk/pacer.hpp"
#include "cloudrisk/trace.hpp"

namespace cloudrisk::scenarios {

using sim::Tick;

enum class Kind { Dedicated, Reservation, StatMux };

inline std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::Dedicated: return "dedicated";
    case Kind::Reservation: return "reservation";
    case Kind::StatMux: return "statmux";
  }
  return "?";
}

/// Capability key for the scheduler process in reservation and statmux.
inline constexpr std::string_view kSchedulerKey = "scheduler";

struct CoreSpec {
  std::string id;
  Principal owner;
};

struct ScenarioConfig {
  std::string id;
  Kind kind = Kind::Dedicated;
  std::vector<Principal> principals;
  std::vector<CoreSpec> cores;
  Tick timeslice_ticks = 0;
  std::vector<Principal> slice_pattern;
  std::optional<pacer::PacerConfig> pacer;
  /// Keyed by principal id (gateway capabilities) or "scheduler".
  std::map<std::string, CapabilitySet> capabilities;
  Tick horizon_ticks = 0;

  CapabilitySet caps_for(const std::string& key) const {
    auto it = capabilities.find(key);
    return it == capabilities.end() ? CapabilitySet{} : it->second;
  }
};

struct Job {
  Tick submit_tick = 0;
  Tick demand_ticks = 0;
  std::string tag;

  friend bool operator==(const Job&, const Job&) = default;
};

struct Workload {
  std::string id;
  std::map<Principal, std::vector<Job>> jobs;

  friend bool operator==(const Workload&, const Workload&) = default;
};

namespace detail {

inline void allow_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

inline Tick get_tick(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(where + ": '" + key + "' must be a non-negative integer");
  return v.get<Tick>();
}

inline std::string get_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ConfigError(where + ": '" + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

inline nlohmann::json parse_json_text(std::string_view text, const std::string& where) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // nlohmann reports a byte offset; turn it into a line number.
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw ParseError(where + ": " + e.what(), line);
  }
}

inline bool valid_tag(std::string_view tag) {
  if (tag.empty()) return false;
  return std::all_of(tag.begin(), tag.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

}  // namespace detail

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Checks cross-field constraints; every builder calls this first.
inline void validate(const ScenarioConfig& c) {
  const std::string where = "scenario '" + c.id + "'";
  if (c.id.empty()) throw ConfigError("scenario: id must be non-empty");
  if (c.principals.empty()) throw ConfigError(where + ": no principals");
  std::set<Principal> known(c.principals.begin(), c.principals.end());
  if (known.size() != c.principals.size()) throw ConfigError(where + ": duplicate principal");
  if (c.horizon_ticks == 0) throw ConfigError(where + ": horizon_ticks must be positive");
  for (const auto& [key, caps] : c.capabilities) {
    if (key != kSchedulerKey && !known.contains(Principal(key))) {
      throw ConfigError(where + ": capabilities for unknown principal '" + key + "'");
    }
    for (const auto& cap : caps.list()) {
      if (!known.contains(cap.principal())) {
        throw ConfigError(where + ": capability " + cap.str() + " names an unknown principal");
      }
    }
  }
  switch (c.kind) {
    case Kind::Dedicated: {
      std::map<std::string, Principal> owner_of;
      std::set<Principal> served;
      for (const auto& core : c.cores) {
        if (core.id.empty()) throw ConfigError(where + ": core id must be non-empty");
        if (!known.contains(core.owner)) {
          throw ConfigError(where + ": core '" + core.id + "' owned by unknown principal " + core.owner.id());
        }
        auto [it, inserted] = owner_of.emplace(core.id, core.owner);
        if (!inserted) {
          throw ConfigError(where + ": core '" + core.id + "' is shared (listed more than once)");
        }
        served.insert(core.owner);
      }
      for (const auto& p : c.principals) {
        if (!served.contains(p)) throw ConfigError(where + ": principal " + p.id() + " has no core");
      }
      if (c.pacer) throw ConfigError(where + ": dedicated scenarios take no pacer");
      if (c.timeslice_ticks || !c.slice_pattern.empty()) {
        throw ConfigError(where + ": timeslices apply to reservation scenarios only");
      }
      if (!c.caps_for(std::string(kSchedulerKey)).empty()) {
        throw ConfigError(where + ": dedicated scenarios have no scheduler");
      }
      break;
    }
    case Kind::Reservation: {
      if (!c.cores.empty()) throw ConfigError(where + ": reservation uses one shared core; omit 'cores'");
      if (c.timeslice_ticks == 0) throw ConfigError(where + ": timeslice_ticks must be positive");
      if (c.slice_pattern.empty()) throw ConfigError(where + ": slice_pattern is empty");
      std::set<Principal> covered;
      for (const auto& p : c.slice_pattern) {
        if (!known.contains(p)) throw ConfigError(where + ": slice_pattern names unknown principal " + p.id());
        covered.insert(p);
      }
      if (covered.size() != known.size()) {
        throw ConfigError(where + ": slice_pattern must cover every principal");
      }
      if (c.pacer) throw ConfigError(where + ": reservation scenarios take no pacer");
      if (!c.caps_for(std::string(kSchedulerKey)).empty()) {
        throw ConfigError(where + ": the reservation scheduler must not hold capabilities");
      }
      break;
    }
    case Kind::StatMux: {
      if (!c.cores.empty()) throw ConfigError(where + ": statmux uses one shared core; omit 'cores'");
      if (c.timeslice_ticks || !c.slice_pattern.empty()) {
        throw ConfigError(where + ": timeslices apply to reservation scenarios only");
      }
      // Constructing the queue checks the rate and phase.
      if (c.pacer) pacer::PacedQueue probe(*c.pacer);
      break;
    }
  }
}

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
  detail::allow_keys(j,
                     {"id", "kind", "principals", "cores", "timeslice_ticks", "slice_pattern",
                      "pacer", "capabilities", "horizon_ticks", "description"},
                     "scenario");
  ScenarioConfig c;
  c.id = detail::get_string(j, "id", "scenario");
  const std::string where = "scenario '" + c.id + "'";
  const std::string kind = detail::get_string(j, "kind", where);
  if (kind == "dedicated") {
    c.kind = Kind::Dedicated;
  } else if (kind == "reservation") {
    c.kind = Kind::Reservation;
  } else if (kind == "statmux") {
    c.kind = Kind::StatMux;
  } else {
    throw ConfigError(where + ": unknown kind '" + kind + "'");
  }
  auto principal_list = [&](const char* key) {
    std::vector<Principal> out;
    if (!j.contains(key)) return out;
    if (!j[key].is_array()) throw ConfigError(where + ": '" + key + "' must be an array");
    for (const auto& v : j[key]) {
      if (!v.is_string()) throw ConfigError(where + ": '" + key + "' entries must be strings");
      out.emplace_back(v.get<std::string>());
    }
    return out;
  };
  c.principals = principal_list("principals");
  c.slice_pattern = principal_list("slice_pattern");
  if (j.contains("cores")) {
    if (!j["cores"].is_array()) throw ConfigError(where + ": 'cores' must be an array");
    for (const auto& core : j["cores"]) {
      detail::allow_keys(core, {"id", "owner"}, where + " core");
      c.cores.push_back({detail::get_string(core, "id", where + " core"),
                         Principal(detail::get_string(core, "owner", where + " core"))});
    }
  }
  if (j.contains("timeslice_ticks")) c.timeslice_ticks = detail::get_tick(j, "timeslice_ticks", where);
  if (j.contains("pacer") && !j["pacer"].is_null()) c.pacer = pacer::parse_pacer_config(j["pacer"]);
  if (j.contains("capabilities")) {
    const auto& caps = j["capabilities"];
    if (!caps.is_object()) throw ConfigError(where + ": 'capabilities' must be an object");
    for (const auto& [key, list] : caps.items()) {
      if (!list.is_array()) throw ConfigError(where + ": capabilities of '" + key + "' must be an array");
      CapabilitySet set;
      for (const auto& v : list) {
        if (!v.is_string()) throw ConfigError(where + ": capability entries must be strings");
        set.add(Capability::parse(v.get<std::string>()));
      }
      c.capabilities[key] = std::move(set);
    }
  }
  c.horizon_ticks = detail::get_tick(j, "horizon_ticks", where);
  validate(c);
  return c;
}

inline ScenarioConfig parse_scenario_text(std::string_view text) {
  return parse_scenario(detail::parse_json_text(text, "scenario"));
}

inline ScenarioConfig load_scenario(const std::string& path) { return parse_scenario_text(read_file(path)); }

/// Checks the workload against a scenario's principals.
inline void validate(const Workload& w, const ScenarioConfig& c) {
  std::set<Principal> known(c.principals.begin(), c.principals.end());
  for (const auto& [p, jobs] : w.jobs) {
    if (!known.contains(p)) {
      throw ConfigError("workload '" + w.id + "': principal " + p.id() + " is not in scenario '" + c.id + "'");
    }
  }
}

inline Workload parse_workload(const nlohmann::json& j) {
  detail::allow_keys(j, {"id", "jobs", "description"}, "workload");
  Workload w;
  w.id = detail::get_string(j, "id", "workload");
  const std::string where = "workload '" + w.id + "'";
  if (!j.contains("jobs") || !j["jobs"].is_object()) throw ConfigError(where + ": 'jobs' must be an object");
  for (const auto& [pid, list] : j["jobs"].items()) {
    Principal p(pid);
    if (!list.is_array()) throw ConfigError(where + ": jobs of " + pid + " must be an array");
    auto& jobs = w.jobs[p];
    for (const auto& item : list) {
      detail::allow_keys(item, {"submit_tick", "demand_ticks", "tag"}, where + " job");
      Job job;
      job.submit_tick = detail::get_tick(item, "submit_tick", where + " job");
      job.demand_ticks = detail::get_tick(item, "demand_ticks", where + " job");
      job.tag = detail::get_string(item, "tag", where + " job");
      if (job.demand_ticks == 0) throw ConfigError(where + ": job '" + job.tag + "' has zero demand");
      if (!detail::valid_tag(job.tag)) throw ConfigError(where + ": bad job tag '" + job.tag + "'");
      if (!jobs.empty() && job.submit_tick < jobs.back().submit_tick) {
        throw ConfigError(where + ": submit ticks of " + pid + " must be non-decreasing");
      }
      jobs.push_back(std::move(job));
    }
  }
  return w;
}

inline Workload parse_workload_text(std::string_view text) {
  return parse_workload(detail::parse_json_text(text, "workload"));
}

inline Workload load_workload(const std::string& path) { return parse_workload_text(read_file(path)); }

inline nlohmann::ordered_json to_json(const Workload& w) {
  nlohmann::ordered_json jobs = nlohmann::ordered_json::object();
  for (const auto& [p, list] : w.jobs) {
    auto& arr = jobs[p.id()] = nlohmann::ordered_json::array();
    for (const auto& job : list) {
      arr.push_back({{"submit_tick", job.submit_tick}, {"demand_ticks", job.demand_ticks}, {"tag", job.tag}});
    }
  }
  nlohmann::ordered_json j;
  j["id"] = w.id;
  j["jobs"] = std::move(jobs);
  return j;
}

}  // namespace cloudrisk::scenarios
