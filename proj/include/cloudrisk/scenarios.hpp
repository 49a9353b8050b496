#pragma once

// The three cloud-scheduling scenarios, wired onto the engine.
//
// Common to all kinds, per principal U:
//   client:U  endpoint, {U/U:inf}
//   gw:U      gateway process, {U/U:inf}, holds U's configured capabilities.
//             Submits U's jobs and forwards results to client:U, asking to
//             declassify foreign finite-rate timing tags it has a capability for.
// Dedicated:   core:<id>  deterministic process per core, {U/U:inf} both ways.
// Reservation: sched {-/-} emits fixed-pattern slice directives through the
//              trusted core:shared to vm:U, which runs U's jobs in U's slices.
// StatMux:     sched (non-deterministic, fully tainted) picks the next vm by
//              reported demand; core:shared signals it with the scheduler's
//              timing taint; results go through pacer:U when one is configured.

#include <algorithm>
#include <charconv>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cloudrisk/engine.hpp"
#include "cloudrisk/pacer.hpp"
#include "cloudrisk/scenario_config.hpp"

namespace cloudrisk::scenarios {

using sim::Engine;
using sim::EventKind;
using sim::LabeledMessage;
using sim::ObjectSpec;
using sim::Role;
using sim::Trace;

inline std::string gateway_id(const Principal& p) { return "gw:" + p.id(); }
inline std::string vm_id(const Principal& p) { return "vm:" + p.id(); }
inline std::string pacer_id(const Principal& p) { return "pacer:" + p.id(); }
inline std::string core_id(const std::string& id) { return "core:" + id; }
inline const std::string kSchedulerId = "sched";
inline const std::string kSharedCoreId = "core:shared";

/// Every principal's content and timing taint.
inline Label top_label(std::span<const Principal> ps) { return owner_label(ps); }

/// Unbounded timing taint for every principal, no content.
inline Label all_timing(std::span<const Principal> ps) { return timing_part(owner_label(ps)); }

inline std::string job_payload(const Job& j) {
  return "tag=" + j.tag + ";demand=" + std::to_string(j.demand_ticks);
}

namespace detail {

inline Tick parse_uint(std::string_view s, std::string_view what) {
  Tick v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

/// Value of `key=` in a `;` or space separated payload.
inline std::string_view field(std::string_view payload, std::string_view key) {
  std::size_t pos = 0;
  while (pos <= payload.size()) {
    auto end = payload.find_first_of("; ", pos);
    if (end == std::string_view::npos) end = payload.size();
    auto item = payload.substr(pos, end - pos);
    if (item.size() > key.size() && item.substr(0, key.size()) == key && item[key.size()] == '=') {
      return item.substr(key.size() + 1);
    }
    pos = end + 1;
  }
  throw std::invalid_argument("payload '" + std::string(payload) + "' has no " + std::string(key));
}

}  // namespace detail

/// The job program every executing process runs. Output and demand depend
/// on the job payload and the process's own count of completed jobs only.
inline sim::Behavior job_behavior() {
  return [](std::string_view input, std::string_view state) {
    const std::string tag(detail::field(input, "tag"));
    const Tick demand = detail::parse_uint(detail::field(input, "demand"), "demand");
    const Tick n = (state.empty() ? 0 : detail::parse_uint(state, "state")) + 1;
    sim::Step s;
    s.state = std::to_string(n);
    s.outputs.push_back("done(" + tag + ")#" + s.state);
    s.demand = demand;
    return s;
  };
}

/// Length of one observation slot for leak experiments.
inline Tick slot_ticks(const ScenarioConfig& c) {
  switch (c.kind) {
    case Kind::Dedicated: return sim::kTicksPerSecond;
    case Kind::Reservation: return c.timeslice_ticks * c.slice_pattern.size();
    case Kind::StatMux: return c.pacer ? pacer::PacedQueue(*c.pacer).period() : sim::kTicksPerSecond;
  }
  return sim::kTicksPerSecond;
}

/// A scenario instance: engine plus the scheduling state of its objects.
class Scenario {
 public:
  Scenario(ScenarioConfig cfg, const Workload& workload, std::uint64_t seed)
      : cfg_(std::move(cfg)), engine_(cfg_.id, seed) {
    validate(cfg_);
    validate(workload, cfg_);
    for (const auto& p : cfg_.principals) add_client_and_gateway(p);
    switch (cfg_.kind) {
      case Kind::Dedicated: build_dedicated(); break;
      case Kind::Reservation: build_reservation(); break;
      case Kind::StatMux: build_statmux(); break;
    }
    schedule_submissions(workload);
  }

  Scenario(const Scenario&) = delete;
  Scenario& operator=(const Scenario&) = delete;

  void run() { engine_.run(cfg_.horizon_ticks); }

  Engine& engine() noexcept { return engine_; }
  const ScenarioConfig& config() const noexcept { return cfg_; }
  const Trace& trace() const noexcept { return engine_.trace(); }

 private:
  struct PendingJob {
    std::string input;
    std::string output;
    Tick remaining = 0;
    bool started = false;
  };

  struct VmState {
    std::deque<PendingJob> jobs;
    Tick slice_end = 0;
    bool running = false;
  };

  // -- common ---------------------------------------------------------------

  void add_client_and_gateway(const Principal& p) {
    ObjectSpec client;
    client.id = sim::endpoint_id(p);
    client.role = Role::Endpoint;
    client.label = owner_label(p);
    engine_.add_object(std::move(client));

    ObjectSpec gw;
    gw.id = gateway_id(p);
    gw.label = owner_label(p);
    gw.clearance = top_label(cfg_.principals);
    gw.caps = cfg_.caps_for(p.id());
    engine_.add_object(std::move(gw), [this, p](const LabeledMessage& m) { forward_result(p, m); });
  }

  void forward_result(const Principal& owner, const LabeledMessage& m) {
    const std::string gw = gateway_id(owner);
    const Label& held = engine_.label_of(gw);
    const CapabilitySet& caps = engine_.caps_of(gw);
    std::vector<DropRequest> drops;
    for (const auto& [p, rate] : held.timing()) {
      if (p != owner && !rate.is_infinite() && caps.strongest(p)) drops.push_back({p, TagKind::Timing});
    }
    engine_.send(gw, sim::endpoint_id(owner), m.payload, m.label, drops);
  }

  void schedule_submissions(const Workload& w) {
    for (const auto& [p, jobs] : w.jobs) {
      for (const auto& job : jobs) {
        engine_.schedule(job.submit_tick, EventKind::Send, [this, p = p, job] {
          engine_.send(gateway_id(p), job_target(p), job_payload(job));
        });
      }
    }
  }

  std::string job_target(const Principal& p) {
    if (cfg_.kind != Kind::Dedicated) return vm_id(p);
    std::vector<std::string> own;
    for (const auto& c : cfg_.cores) {
      if (c.owner == p) own.push_back(core_id(c.id));
    }
    auto& next = next_core_[p];
    return own[next++ % own.size()];
  }

  // -- dedicated ------------------------------------------------------------

  void build_dedicated() {
    for (const auto& c : cfg_.cores) {
      ObjectSpec core;
      core.id = core_id(c.id);
      core.label = owner_label(c.owner);
      core.behavior = job_behavior();
      const std::string id = core.id;
      engine_.add_object(std::move(core),
                         [this, id, owner = c.owner](const LabeledMessage& m) { core_job(id, owner, m); });
    }
  }

  void core_job(const std::string& core, const Principal& owner, const LabeledMessage& m) {
    const sim::Step step = engine_.invoke(core, m.payload);
    Tick& busy = busy_until_[core];
    const Tick start = std::max(engine_.now(), busy);
    busy = start + step.demand;
    engine_.schedule(start, EventKind::JobStart, [this, core, input = m.payload] {
      engine_.record(EventKind::JobStart, core, "", input, engine_.label_of(core).str(), "", "");
    });
    engine_.schedule(busy, EventKind::JobComplete, [this, core, owner, out = step.outputs.front()] {
      engine_.record(EventKind::JobComplete, core, gateway_id(owner), out, engine_.label_of(core).str(), "", "");
      engine_.send(core, gateway_id(owner), out);
    });
  }

  // -- reservation ----------------------------------------------------------

  void build_reservation() {
    ObjectSpec sched;
    sched.id = kSchedulerId;
    sched.deterministic = false;
    engine_.add_object(std::move(sched));

    ObjectSpec core;
    core.id = kSharedCoreId;
    core.role = Role::Trusted;
    engine_.add_object(std::move(core), [this](const LabeledMessage& m) {
      const std::string vm(detail::field(m.payload, "vm"));
      engine_.send(kSharedCoreId, vm, "slice until=" + std::string(detail::field(m.payload, "until")),
                   timing_part(m.label));
    });

    for (const auto& p : cfg_.principals) add_vm(p, owner_label(p));
    engine_.schedule(0, EventKind::SchedulerDecision, [this] { reservation_slot(0); });
  }

  void reservation_slot(Tick k) {
    const Principal& owner = cfg_.slice_pattern[k % cfg_.slice_pattern.size()];
    const Tick until = (k + 1) * cfg_.timeslice_ticks;
    const std::string directive = "run vm=" + vm_id(owner) + " until=" + std::to_string(until);
    engine_.record(EventKind::SchedulerDecision, kSchedulerId, kSharedCoreId, directive,
                   engine_.label_of(kSchedulerId).str(), "", "slot=" + std::to_string(k));
    engine_.send(kSchedulerId, kSharedCoreId, directive);
    if (until < cfg_.horizon_ticks) {
      engine_.schedule(until, EventKind::SchedulerDecision, [this, k] { reservation_slot(k + 1); });
    }
  }

  void add_vm(const Principal& p, const Label& clearance) {
    ObjectSpec vm;
    vm.id = vm_id(p);
    vm.label = owner_label(p);
    vm.clearance = clearance;
    vm.behavior = job_behavior();
    engine_.add_object(std::move(vm), [this, p](const LabeledMessage& m) { vm_message(p, m); });
  }

  void vm_message(const Principal& p, const LabeledMessage& m) {
    const std::string vm = vm_id(p);
    VmState& st = vms_[p];
    if (m.payload.starts_with("slice ")) {
      st.slice_end = detail::parse_uint(detail::field(m.payload, "until"), "until");
      work_slice(p);
      return;
    }
    if (m.payload == "start") {
      statmux_start(p);
      return;
    }
    const sim::Step step = engine_.invoke(vm, m.payload);
    st.jobs.push_back({m.payload, step.outputs.front(), step.demand, false});
    if (cfg_.kind == Kind::Reservation) {
      work_slice(p);
    } else {
      engine_.send(vm, kSchedulerId, "demand vm=" + vm + " ticks=" + std::to_string(step.demand));
    }
  }

  /// Runs queued jobs inside the vm's current slice; jobs span slices.
  void work_slice(const Principal& p) {
    VmState& st = vms_[p];
    const Tick now = engine_.now();
    if (st.running || st.jobs.empty() || now >= st.slice_end) return;
    const std::string vm = vm_id(p);
    PendingJob& job = st.jobs.front();
    if (!job.started) {
      job.started = true;
      engine_.record(EventKind::JobStart, vm, "", job.input, engine_.label_of(vm).str(), "", "");
    }
    const Tick segment = std::min(job.remaining, st.slice_end - now);
    st.running = true;
    engine_.schedule(now + segment, EventKind::JobComplete, [this, p, segment] {
      VmState& s = vms_[p];
      s.running = false;
      PendingJob& j = s.jobs.front();
      j.remaining -= segment;
      if (j.remaining == 0) {
        const std::string vm = vm_id(p);
        const std::string out = j.output;
        s.jobs.pop_front();
        engine_.record(EventKind::JobComplete, vm, gateway_id(p), out, engine_.label_of(vm).str(), "", "");
        engine_.send(vm, gateway_id(p), out);
      }
      work_slice(p);
    });
  }

  // -- statmux --------------------------------------------------------------

  void build_statmux() {
    const Label top = top_label(cfg_.principals);
    ObjectSpec sched;
    sched.id = kSchedulerId;
    sched.label = top;
    sched.deterministic = false;
    sched.caps = cfg_.caps_for(std::string(kSchedulerKey));
    engine_.add_object(std::move(sched), [this](const LabeledMessage& m) { scheduler_message(m); });

    ObjectSpec core;
    core.id = kSharedCoreId;
    core.role = Role::Trusted;
    core.label = top;
    engine_.add_object(std::move(core), [this](const LabeledMessage& m) {
      engine_.send(kSharedCoreId, std::string(detail::field(m.payload, "vm")), "start", timing_part(m.label));
    });

    const Label timing = all_timing(cfg_.principals);
    for (const auto& p : cfg_.principals) {
      const Label clearance = join(owner_label(p), timing);
      add_vm(p, clearance);
      if (cfg_.pacer) {
        ObjectSpec pacer;
        pacer.id = pacer_id(p);
        pacer.label = clearance;
        pacer::PacedQueue q(cfg_.pacer->rate, cfg_.pacer->phase_ticks, cfg_.pacer->queue_id + ":" + p.id());
        pacer::install_pacer(engine_, std::move(pacer), std::move(q), gateway_id(p));
      }
    }
    rr_next_ = engine_.seed() % cfg_.principals.size();
    demands_.resize(cfg_.principals.size());
  }

  void scheduler_message(const LabeledMessage& m) {
    if (m.payload.starts_with("demand ")) {
      const std::string vm(detail::field(m.payload, "vm"));
      demands_[index_of_vm(vm)].push_back(detail::parse_uint(detail::field(m.payload, "ticks"), "ticks"));
    } else if (m.payload.starts_with("done ")) {
      core_busy_ = false;
    }
    if (core_busy_ || decision_pending_) return;
    decision_pending_ = true;
    engine_.schedule(engine_.now(), EventKind::SchedulerDecision, [this] { statmux_decide(); });
  }

  std::size_t index_of_vm(const std::string& vm) const {
    for (std::size_t i = 0; i < cfg_.principals.size(); ++i) {
      if (vm_id(cfg_.principals[i]) == vm) return i;
    }
    throw std::invalid_argument("unknown vm '" + vm + "'");
  }

  /// Non-preemptive shortest reported demand; ties go to the first vm in
  /// round-robin order from the last pick.
  void statmux_decide() {
    decision_pending_ = false;
    if (core_busy_) return;
    const std::size_t n = cfg_.principals.size();
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = (rr_next_ + i) % n;
      if (demands_[idx].empty()) continue;
      if (!pick || demands_[idx].front() < demands_[*pick].front()) pick = idx;
    }
    if (!pick) return;
    const Tick demand = demands_[*pick].front();
    demands_[*pick].pop_front();
    rr_next_ = (*pick + 1) % n;
    core_busy_ = true;
    const std::string vm = vm_id(cfg_.principals[*pick]);
    const std::string directive = "run vm=" + vm + " demand=" + std::to_string(demand);
    engine_.record(EventKind::SchedulerDecision, kSchedulerId, kSharedCoreId, directive,
                   engine_.label_of(kSchedulerId).str(), "", "policy=shortest-demand");
    engine_.send(kSchedulerId, kSharedCoreId, directive);
  }

  void statmux_start(const Principal& p) {
    VmState& st = vms_[p];
    const std::string vm = vm_id(p);
    if (st.jobs.empty()) throw std::logic_error(vm + " started with no job");
    PendingJob job = std::move(st.jobs.front());
    st.jobs.pop_front();
    engine_.record(EventKind::JobStart, vm, "", job.input, engine_.label_of(vm).str(), "", "");
    const std::string dest = cfg_.pacer ? pacer_id(p) : gateway_id(p);
    engine_.schedule(engine_.now() + job.remaining, EventKind::JobComplete, [this, vm, dest, out = job.output] {
      engine_.record(EventKind::JobComplete, vm, dest, out, engine_.label_of(vm).str(), "", "");
      engine_.send(vm, dest, out);
      engine_.send(vm, kSchedulerId, "done vm=" + vm);
    });
  }

  ScenarioConfig cfg_;
  Engine engine_;
  std::map<Principal, std::size_t> next_core_;
  std::map<std::string, Tick> busy_until_;
  std::map<Principal, VmState> vms_;
  std::vector<std::deque<Tick>> demands_;
  std::size_t rr_next_ = 0;
  bool core_busy_ = false;
  bool decision_pending_ = false;
};

inline Trace run(const ScenarioConfig& cfg, const Workload& w, std::uint64_t seed) {
  Scenario s(cfg, w, seed);
  s.run();
  return s.engine().take_trace();
}

// -- label audit and report -------------------------------------------------

struct AuditPoint {
  std::string point;
  EventKind kind;
  std::string object;
  std::string expected;
  bool found = false;
};

/// Labels the scenario narrative predicts, checked against the trace. The
/// observer is the first principal.
inline std::vector<AuditPoint> label_audit(const ScenarioConfig& cfg, const Trace& t) {
  const Principal& a = cfg.principals.front();
  const std::string own = owner_label(a).str();
  std::vector<AuditPoint> pts;
  switch (cfg.kind) {
    case Kind::Dedicated:
      for (const auto& c : cfg.cores) {
        if (c.owner == a) {
          pts.push_back({"job completion on own core", EventKind::JobComplete, core_id(c.id), own});
          break;
        }
      }
      break;
    case Kind::Reservation:
      pts.push_back({"scheduler label", EventKind::Setup, kSchedulerId, Label().str()});
      pts.push_back({"slice directive", EventKind::SchedulerDecision, kSchedulerId, Label().str()});
      pts.push_back({"job completion", EventKind::JobComplete, vm_id(a), own});
      break;
    case Kind::StatMux: {
      const Label timing = all_timing(cfg.principals);
      pts.push_back({"scheduler label", EventKind::Setup, kSchedulerId, top_label(cfg.principals).str()});
      pts.push_back({"result before pacing", EventKind::JobComplete, vm_id(a), join(owner_label(a), timing).str()});
      if (cfg.pacer) {
        pts.push_back({"result after pacing", EventKind::PacerRelease, pacer_id(a),
                       pacer_downgrade(join(owner_label(a), timing), cfg.pacer->rate).str()});
      }
      break;
    }
  }
  pts.push_back({"result delivered to client", EventKind::Deliver, sim::endpoint_id(a), own});
  for (auto& pt : pts) {
    for (const auto& e : t.events) {
      const std::string& obj = e.kind == EventKind::Deliver ? e.dst : e.src;
      if (e.kind == pt.kind && obj == pt.object && e.label == pt.expected) {
        pt.found = true;
        break;
      }
    }
  }
  return pts;
}

/// Summary of a run. Keys are sorted on output.
inline nlohmann::json run_report(const ScenarioConfig& cfg, const Trace& t) {
  nlohmann::json r;
  r["scenario"] = t.scenario_id;
  r["seed"] = t.seed;
  r["kind"] = to_string(cfg.kind);
  std::size_t accepted = 0;
  nlohmann::json rejected = nlohmann::json::object();
  nlohmann::json rejections = nlohmann::json::array();
  nlohmann::json completions = nlohmann::json::object();
  for (const auto& p : cfg.principals) completions[p.id()] = nlohmann::json::array();
  for (const auto& e : t.events) {
    if (e.kind == EventKind::Send) ++accepted;
    if (e.kind == EventKind::Reject) {
      const std::string reason = e.note.substr(0, e.note.find(':'));
      rejected[reason] = rejected.value(reason, 0) + 1;
      rejections.push_back({{"seq", e.seq}, {"tick", e.tick}, {"src", e.src}, {"dst", e.dst}, {"note", e.note}});
    }
    if (e.kind == EventKind::Deliver && e.dst.starts_with("client:")) {
      completions[e.dst.substr(7)].push_back({{"tick", e.tick}, {"payload", e.payload}});
    }
  }
  r["monitor"] = {{"accepted", accepted}, {"rejected", rejected}, {"rejections", rejections}};
  r["completions"] = completions;
  nlohmann::json audit = nlohmann::json::array();
  for (const auto& pt : label_audit(cfg, t)) {
    audit.push_back({{"point", pt.point},
                     {"kind", sim::to_string(pt.kind)},
                     {"object", pt.object},
                     {"expected", pt.expected},
                     {"found", pt.found}});
  }
  r["label_audit"] = audit;
  r["monitor_violations"] = sim::monitor_violations(t);
  if (cfg.kind == Kind::StatMux && cfg.pacer) {
    r["pacer"] = {{"rate", cfg.pacer->rate.str()},
                  {"phase_ticks", cfg.pacer->phase_ticks},
                  {"note", "pacing bounds queue-emptiness timing only; content and order are covered by content labels"}};
  }
  return r;
}

}  // namespace cloudrisk::scenarios
