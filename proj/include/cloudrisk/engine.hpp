#pragma once

// Deterministic discrete-event engine with a label-checking reference monitor.
//
// Every object has a current label and a clearance. A send is accepted iff
// the sender's effective label (after any requested declassification) flows
// into the destination's clearance. Processes float: delivery joins the
// message label into theirs. Endpoints and trusted components keep a fixed
// label; trusted components (pacers, core control logic) also send with the
// explicit message label instead of inheriting their own.

#include <cassert>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "cloudrisk/errors.hpp"
#include "cloudrisk/label.hpp"
#include "cloudrisk/trace.hpp"

namespace cloudrisk::sim {

enum class Role { Process, Trusted, Endpoint };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::Process: return "process";
    case Role::Trusted: return "trusted";
    case Role::Endpoint: return "endpoint";
  }
  return "?";
}

/// Result of one deterministic step: next state, emitted message contents
/// and the service demand of the step.
struct Step {
  std::string state;
  std::vector<std::string> outputs;
  Tick demand = 0;
};

/// Receives only explicit input content and internal state; no clock, no
/// scheduler information. This signature is the determinism guarantee.
using Behavior = std::function<Step(std::string_view input, std::string_view state)>;

struct LabeledMessage {
  std::string src;
  std::string dst;
  std::string payload;
  Label label;
  Tick enqueue_tick = 0;
  Tick release_tick = 0;
};

using DeliverHandler = std::function<void(const LabeledMessage&)>;

struct ObjectSpec {
  std::string id;
  Role role = Role::Process;
  Label label;
  /// Bound on incoming flows; defaults to `label`.
  std::optional<Label> clearance;
  bool deterministic = true;
  CapabilitySet caps;
  Behavior behavior;
  std::string state;
};

struct SendOutcome {
  enum class Status { Accepted, FlowDenied, CapabilityError };

  Status status = Status::Accepted;
  Label effective;
  FlowDenial denial;
  std::string reason;

  bool accepted() const noexcept { return status == Status::Accepted; }
};

/// Label of a process after it receives `msg`. A non-deterministic process
/// can observe its own timing, so timing taint also becomes content taint.
inline Label receive_taint(const Label& current, bool deterministic, const Label& msg) {
  Label out = join(current, msg);
  if (!deterministic) {
    for (const auto& [p, rate] : msg.timing()) out.add_content(p);
  }
  return implied_timing(out);
}

class Engine {
 public:
  Engine(std::string scenario_id, std::uint64_t seed) {
    trace_.scenario_id = std::move(scenario_id);
    trace_.seed = seed;
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Registers an object and records its Setup event. Labels are closed
  /// under implied timing on entry.
  void add_object(ObjectSpec spec, DeliverHandler on_deliver = {}) {
    if (spec.id.empty()) throw ConfigError("object id must be non-empty");
    if (objects_.contains(spec.id)) throw ConfigError("duplicate object id '" + spec.id + "'");
    Object obj;
    obj.role = spec.role;
    obj.label = implied_timing(spec.label);
    obj.clearance = implied_timing(spec.clearance.value_or(spec.label));
    obj.deterministic = spec.deterministic;
    obj.caps = std::move(spec.caps);
    obj.behavior = std::move(spec.behavior);
    obj.state = std::move(spec.state);
    obj.handler = std::move(on_deliver);
    record(EventKind::Setup, spec.id, "", "", obj.label.str(), obj.clearance.str(),
           "role=" + std::string(to_string(obj.role)) +
               " deterministic=" + (obj.deterministic ? "true" : "false") +
               " caps=" + obj.caps.str());
    objects_.emplace(spec.id, std::move(obj));
  }

  void on_deliver(const std::string& id, DeliverHandler h) { object(id).handler = std::move(h); }

  bool has_object(const std::string& id) const { return objects_.contains(id); }
  const Label& label_of(const std::string& id) const { return object(id).label; }
  const Label& clearance_of(const std::string& id) const { return object(id).clearance; }
  const CapabilitySet& caps_of(const std::string& id) const { return object(id).caps; }
  const std::string& state_of(const std::string& id) const { return object(id).state; }

  /// Monitored send at the current tick. Accepted messages are delivered at
  /// the same tick; rejected ones are logged and dropped.
  SendOutcome send(const std::string& src, const std::string& dst, std::string payload,
                   const Label& payload_label = {}, std::span<const DropRequest> drops = {}) {
    const Object& from = object(src);
    const Object& to = object(dst);
    SendOutcome out;
    const Label provenance = implied_timing(payload_label);
    const Label pre = from.role == Role::Trusted ? provenance : join(from.label, provenance);
    try {
      // Dropping a timing tag while its content tag stays has no effect.
      out.effective = implied_timing(declassify(pre, from.caps, drops));
    } catch (const CapabilityError& e) {
      out.status = SendOutcome::Status::CapabilityError;
      out.effective = pre;
      out.reason = e.what();
      record(EventKind::Reject, src, dst, payload, pre.str(), to.clearance.str(),
             "CapabilityError: " + out.reason);
      return out;
    }
    if (!can_flow(out.effective, to.clearance)) {
      out.status = SendOutcome::Status::FlowDenied;
      out.denial = explain_flow(out.effective, to.clearance);
      out.reason = out.denial.str();
      record(EventKind::Reject, src, dst, payload, out.effective.str(), to.clearance.str(),
             "FlowDenied: " + out.reason);
      return out;
    }
    record(EventKind::Send, src, dst, payload, out.effective.str(), to.clearance.str(),
           out.effective == pre ? "" : "declassified from " + pre.str());
    LabeledMessage msg{src, dst, std::move(payload), out.effective, now_, now_};
    schedule(now_, EventKind::Deliver, [this, msg = std::move(msg)]() { deliver(msg); });
    return out;
  }

  /// Queues `action` at tick `at` (never in the past). Same-tick actions run
  /// in kind priority order, then in scheduling order.
  void schedule(Tick at, EventKind kind, std::function<void()> action) {
    if (at < now_) throw std::logic_error("cannot schedule in the past");
    queue_.emplace(Key{at, priority(kind), next_action_++}, std::move(action));
  }

  void record(EventKind kind, std::string src, std::string dst, std::string payload,
              std::string label, std::string dst_label, std::string note) {
    SimEvent e;
    e.seq = trace_.events.size();
    e.tick = now_;
    e.kind = kind;
    e.src = std::move(src);
    e.dst = std::move(dst);
    e.payload = std::move(payload);
    e.label = std::move(label);
    e.dst_label = std::move(dst_label);
    e.note = std::move(note);
    trace_.events.push_back(std::move(e));
  }

  /// Runs one step of a process's behavior and stores the new state.
  Step invoke(const std::string& process, std::string_view input) {
    Object& obj = object(process);
    if (!obj.behavior) throw std::logic_error("object '" + process + "' has no behavior");
    Step s = obj.behavior(input, obj.state);
    obj.state = s.state;
    return s;
  }

  /// Executes queued actions until none remain or the next is past `horizon`.
  void run(Tick horizon) {
    while (!queue_.empty()) {
      auto node = queue_.extract(queue_.begin());
      if (std::get<0>(node.key()) > horizon) {
        queue_.insert(std::move(node));
        break;
      }
      now_ = std::get<0>(node.key());
      node.mapped()();
    }
  }

  Tick now() const noexcept { return now_; }
  std::uint64_t seed() const noexcept { return trace_.seed; }
  std::size_t pending() const noexcept { return queue_.size(); }
  const Trace& trace() const noexcept { return trace_; }
  Trace take_trace() { return std::move(trace_); }

 private:
  struct Object {
    Role role = Role::Process;
    Label label;
    Label clearance;
    bool deterministic = true;
    CapabilitySet caps;
    Behavior behavior;
    std::string state;
    DeliverHandler handler;
  };

  using Key = std::tuple<Tick, int, std::uint64_t>;

  Object& object(const std::string& id) {
    auto it = objects_.find(id);
    if (it == objects_.end()) throw std::out_of_range("unknown object '" + id + "'");
    return it->second;
  }
  const Object& object(const std::string& id) const {
    auto it = objects_.find(id);
    if (it == objects_.end()) throw std::out_of_range("unknown object '" + id + "'");
    return it->second;
  }

  void deliver(const LabeledMessage& msg) {
    Object& to = object(msg.dst);
    std::string note;
    if (to.role == Role::Process) {
      Label tainted = receive_taint(to.label, to.deterministic, msg.label);
      if (tainted != to.label) {
        note = "taint " + to.label.str() + " -> " + tainted.str();
        to.label = std::move(tainted);
      }
    }
    record(EventKind::Deliver, msg.src, msg.dst, msg.payload, msg.label.str(),
           to.clearance.str(), std::move(note));
    if (to.handler) {
      // Copy: the handler may add objects or replace itself.
      auto handler = to.handler;
      handler(msg);
    }
  }

  std::map<std::string, Object> objects_;
  std::map<Key, std::function<void()>> queue_;
  std::uint64_t next_action_ = 0;
  Tick now_ = 0;
  Trace trace_;
};

/// Offline re-check of every Deliver: message label must flow into the
/// recorded destination clearance. Returns descriptions of violations.
inline std::vector<std::string> monitor_violations(const Trace& t) {
  std::vector<std::string> out;
  for (const auto& e : t.events) {
    if (e.kind != EventKind::Deliver) continue;
    if (!can_flow(Label::parse(e.label), Label::parse(e.dst_label))) {
      out.push_back("seq " + std::to_string(e.seq) + ": " + e.label + " -> " + e.dst_label);
    }
  }
  return out;
}

}  // namespace cloudrisk::sim
