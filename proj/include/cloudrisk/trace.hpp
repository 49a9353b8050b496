#pragma once

// Simulation events and their JSON Lines serialization.
//
// A trace file is one header object followed by one event object per line.
// Event fields are always present and always in the same order:
//   seq, tick, kind, src, dst, payload, label, dst_label, note
// Labels use the canonical text form, so equal traces are byte-equal.

#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cloudrisk/errors.hpp"
#include "cloudrisk/label.hpp"

namespace cloudrisk::sim {

/// Simulation time. 1 tick = 1 microsecond of model time.
using Tick = std::uint64_t;
inline constexpr Tick kTicksPerSecond = 1'000'000;

enum class EventKind {
  Setup,
  PacerRelease,
  SchedulerDecision,
  Deliver,
  JobStart,
  JobComplete,
  Send,
  Reject,
};

/// Same-tick ordering of scheduled actions; lower runs first.
constexpr int priority(EventKind k) {
  switch (k) {
    case EventKind::Setup: return 0;
    case EventKind::PacerRelease: return 1;
    case EventKind::SchedulerDecision: return 2;
    case EventKind::Deliver: return 3;
    case EventKind::JobStart: return 4;
    case EventKind::JobComplete: return 5;
    case EventKind::Send: return 6;
    case EventKind::Reject: return 7;
  }
  return 8;
}

inline constexpr std::array<std::pair<EventKind, std::string_view>, 8> kKindNames{{
    {EventKind::Setup, "Setup"},
    {EventKind::PacerRelease, "PacerRelease"},
    {EventKind::SchedulerDecision, "SchedulerDecision"},
    {EventKind::Deliver, "Deliver"},
    {EventKind::JobStart, "JobStart"},
    {EventKind::JobComplete, "JobComplete"},
    {EventKind::Send, "Send"},
    {EventKind::Reject, "Reject"},
}};

inline std::string_view to_string(EventKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "?";
}

inline std::optional<EventKind> kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

/// Meaning of `label` / `dst_label` by kind:
///  Setup: initial label / clearance.  Send: effective (post-declassify)
///  label / destination clearance.  Deliver: message label / destination
///  clearance.  Reject: effective label / destination clearance.
///  JobStart, JobComplete: process label.  PacerRelease: downgraded label /
///  label on entry.  SchedulerDecision: directive label.
struct SimEvent {
  std::uint64_t seq = 0;
  Tick tick = 0;
  EventKind kind = EventKind::Setup;
  std::string src;
  std::string dst;
  std::string payload;
  std::string label;
  std::string dst_label;
  std::string note;

  friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

struct Trace {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::vector<SimEvent> events;

  friend bool operator==(const Trace&, const Trace&) = default;
};

/// Gateway-side endpoint through which principal `p` observes the system.
inline std::string endpoint_id(const Principal& p) { return "client:" + p.id(); }

inline std::string serialize_header(const Trace& t) {
  nlohmann::ordered_json h;
  h["trace"] = "cloudrisk/1";
  h["scenario"] = t.scenario_id;
  h["seed"] = t.seed;
  return h.dump();
}

inline std::string serialize_event(const SimEvent& e) {
  nlohmann::ordered_json j;
  j["seq"] = e.seq;
  j["tick"] = e.tick;
  j["kind"] = to_string(e.kind);
  j["src"] = e.src;
  j["dst"] = e.dst;
  j["payload"] = e.payload;
  j["label"] = e.label;
  j["dst_label"] = e.dst_label;
  j["note"] = e.note;
  return j.dump();
}

inline std::string serialize(const Trace& t) {
  std::string out = serialize_header(t);
  out += '\n';
  for (const auto& e : t.events) {
    out += serialize_event(e);
    out += '\n';
  }
  return out;
}

inline Trace parse_trace(std::string_view text) {
  Trace t;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    try {
      if (!have_header) {
        if (!j.contains("trace")) throw ParseError("missing trace header", line_no);
        t.scenario_id = j.at("scenario").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      SimEvent e;
      e.seq = j.at("seq").get<std::uint64_t>();
      e.tick = j.at("tick").get<Tick>();
      auto kind = kind_from_string(j.at("kind").get<std::string>());
      if (!kind) throw ParseError("unknown event kind", line_no);
      e.kind = *kind;
      e.src = j.at("src").get<std::string>();
      e.dst = j.at("dst").get<std::string>();
      e.payload = j.at("payload").get<std::string>();
      e.label = j.at("label").get<std::string>();
      e.dst_label = j.at("dst_label").get<std::string>();
      e.note = j.at("note").get<std::string>();
      t.events.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad event field: ") + e.what(), line_no);
    }
  }
  if (!have_header) throw ParseError("empty trace");
  return t;
}

/// Events observable at `observer`'s endpoint: deliveries to it, with ticks
/// preserved and sequence numbers renumbered from zero.
inline Trace project(const Trace& t, const Principal& observer) {
  Trace out;
  out.scenario_id = t.scenario_id;
  out.seed = t.seed;
  const auto endpoint = endpoint_id(observer);
  for (const auto& e : t.events) {
    if (e.kind == EventKind::Deliver && e.dst == endpoint) {
      out.events.push_back(e);
      out.events.back().seq = out.events.size() - 1;
    }
  }
  return out;
}

}  // namespace cloudrisk::sim
