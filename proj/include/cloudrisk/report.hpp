#pragma once

// Trace comparison for golden tests and Bob-variation experiments.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cloudrisk/scenario_config.hpp"
#include "cloudrisk/trace.hpp"

namespace cloudrisk::report {

using sim::SimEvent;
using sim::Trace;

struct TraceDiff {
  bool identical = true;
  bool header_differs = false;
  /// Index of the first differing event (or of the first event only one side has).
  std::optional<std::size_t> first_index;
  std::optional<SimEvent> first_a;
  std::optional<SimEvent> first_b;
  std::size_t events_a = 0;
  std::size_t events_b = 0;
  std::size_t differing_events = 0;
  /// Field names that differ anywhere among index-aligned events.
  std::set<std::string> differing_fields;
};

inline std::vector<std::string> field_diff(const SimEvent& a, const SimEvent& b) {
  std::vector<std::string> out;
  if (a.seq != b.seq) out.push_back("seq");
  if (a.tick != b.tick) out.push_back("tick");
  if (a.kind != b.kind) out.push_back("kind");
  if (a.src != b.src) out.push_back("src");
  if (a.dst != b.dst) out.push_back("dst");
  if (a.payload != b.payload) out.push_back("payload");
  if (a.label != b.label) out.push_back("label");
  if (a.dst_label != b.dst_label) out.push_back("dst_label");
  if (a.note != b.note) out.push_back("note");
  return out;
}

/// Compares serialized forms event by event, after projecting both traces
/// onto `observer` when one is given.
inline TraceDiff diff_trace(Trace a, Trace b, const std::optional<Principal>& observer = std::nullopt) {
  if (observer) {
    a = sim::project(a, *observer);
    b = sim::project(b, *observer);
  }
  TraceDiff d;
  d.events_a = a.events.size();
  d.events_b = b.events.size();
  d.header_differs = sim::serialize_header(a) != sim::serialize_header(b);
  const std::size_t common = std::min(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (sim::serialize_event(a.events[i]) == sim::serialize_event(b.events[i])) continue;
    ++d.differing_events;
    for (auto& f : field_diff(a.events[i], b.events[i])) d.differing_fields.insert(std::move(f));
    if (!d.first_index) {
      d.first_index = i;
      d.first_a = a.events[i];
      d.first_b = b.events[i];
    }
  }
  if (a.events.size() != b.events.size()) {
    d.differing_events += std::max(a.events.size(), b.events.size()) - common;
    if (!d.first_index) {
      d.first_index = common;
      if (common < a.events.size()) d.first_a = a.events[common];
      if (common < b.events.size()) d.first_b = b.events[common];
    }
  }
  d.identical = !d.header_differs && d.differing_events == 0;
  return d;
}

inline Trace load_trace(const std::string& path) { return sim::parse_trace(scenarios::read_file(path)); }

inline std::string describe(const TraceDiff& d) {
  if (d.identical) return "identical (" + std::to_string(d.events_a) + " events)\n";
  std::string out;
  if (d.header_differs) out += "header differs\n";
  if (d.first_index) {
    // Line numbers count the header as line 1.
    out += "first divergence at event " + std::to_string(*d.first_index) + " (line " +
           std::to_string(*d.first_index + 2) + ")\n";
    out += "  a: " + (d.first_a ? sim::serialize_event(*d.first_a) : std::string("<end of trace>")) + "\n";
    out += "  b: " + (d.first_b ? sim::serialize_event(*d.first_b) : std::string("<end of trace>")) + "\n";
  }
  out += "events: " + std::to_string(d.events_a) + " vs " + std::to_string(d.events_b) +
         "; differing: " + std::to_string(d.differing_events);
  if (!d.differing_fields.empty()) {
    out += "; fields:";
    for (const auto& f : d.differing_fields) out += " " + f;
  }
  out += "\n";
  return out;
}

}  // namespace cloudrisk::report
