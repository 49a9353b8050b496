// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cloudrisk/depgraph.hpp"
#include "cloudrisk/feedback.hpp"
#include "cloudrisk/leak.hpp"
#include "cloudrisk/report.hpp"
#include "cloudrisk/scenarios.hpp"
#include "label_space.hpp"
#include "workload_gen.hpp"

namespace {

using namespace cloudrisk;
using scenarios::ScenarioConfig;
using scenarios::Workload;
using sim::EventKind;
using sim::Trace;

const Principal A{"A"};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    ok_ = ok_ && ok;
  }
  bool ok() const { return ok_; }
  std::string failures() const {
    std::string out;
    for (const auto& f : failures_) out += "\n    " + f;
    return out;
  }

 private:
  bool ok_ = true;
  std::vector<std::string> failures_;
};

std::string slurp(const std::string& path) { return scenarios::read_file(path); }
ScenarioConfig scenario(const std::string& name) {
  return scenarios::load_scenario(std::string(CLOUDRISK_FIXTURES) + "/scenarios/" + name + ".json");
}
Workload workload(const std::string& name) {
  return scenarios::load_workload(std::string(CLOUDRISK_FIXTURES) + "/workloads/" + name + ".json");
}
std::string golden(const std::string& name) { return std::string(CLOUDRISK_GOLDEN) + "/" + name; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::fixed << x;
  return s.str();
}

// -- 1 -------------------------------------------------------------------------

std::string criterion_label_algebra(Check& c) {
  using testing::decode;
  using testing::enumerate_space;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t pairs = 0;
  for (int n = 1; n <= 3; ++n) {
    const auto space = enumerate_space(n);
    std::vector<Label> labels;
    for (const auto& e : space) labels.push_back(decode(e, n));
    for (std::size_t i = 0; i < space.size(); ++i) {
      for (std::size_t j = 0; j < space.size(); ++j) {
        ++pairs;
        const Label& a = labels[i];
        const Label& b = labels[j];
        c.expect(can_flow(a, b) == testing::oracle_can_flow(space[i], space[j]), "can_flow " + a.str() + " " + b.str());
        testing::EncodedLabel m;
        for (int k = 0; k < n; ++k) {
          m.content[k] = space[i].content[k] || space[j].content[k];
          m.level[k] = std::max(space[i].level[k], space[j].level[k]);
        }
        const Label ab = join(a, b);
        c.expect(ab == decode(m, n), "join element-wise " + a.str() + " " + b.str());
        c.expect(ab == join(b, a), "join commutative");
        c.expect(can_flow(a, ab) && can_flow(b, ab), "join upper bound");
      }
      c.expect(join(labels[i], labels[i]) == labels[i], "join idempotent");
      c.expect(can_flow(labels[i], labels[i]), "flow reflexive");
    }
  }
  // Triples on two principals: associativity and least upper bound.
  const auto space = enumerate_space(2);
  std::vector<Label> labels;
  for (const auto& e : space) labels.push_back(decode(e, 2));
  for (const auto& a : labels) {
    for (const auto& b : labels) {
      const Label ab = join(a, b);
      for (const auto& x : labels) {
        c.expect(join(ab, x) == join(a, join(b, x)), "join associative");
        c.expect(can_flow(ab, x) == (can_flow(a, x) && can_flow(b, x)), "join least upper bound");
      }
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "took " + fmt(secs) + " s");
  return std::to_string(pairs) + " pairs on <=3 principals, " + std::to_string(labels.size() * labels.size() * labels.size()) +
         " triples on 2, " + fmt(secs) + " s";
}

// -- 2 -------------------------------------------------------------------------

std::string criterion_label_audit(Check& c) {
  std::size_t points = 0;
  const std::vector<std::pair<std::string, std::string>> narrative{
      {"dedicated", "{A/A:inf}"},
      {"reservation", "{-/-}"},
      {"statmux", "{A/A:inf,B:inf}"},
      {"statmux", "{A/A:1/1,B:1/1}"},
  };
  for (const std::string name : {"dedicated", "reservation", "statmux"}) {
    const auto cfg = scenario(name);
    for (const std::string w : {"short", "long"}) {
      const std::string file = golden(name + "_" + w + ".jsonl");
      const std::string bytes = slurp(file);
      const Trace fresh = scenarios::run(cfg, workload("bob_" + w), 1);
      c.expect(sim::serialize(fresh) == bytes, name + "_" + w + ": trace differs from committed golden");
      const Trace t = sim::parse_trace(bytes);
      c.expect(sim::serialize(t) == bytes, name + "_" + w + ": golden does not round-trip");
      for (const auto& pt : scenarios::label_audit(cfg, t)) {
        ++points;
        c.expect(pt.found, name + "_" + w + ": " + pt.point + " at " + pt.object + " expected " + pt.expected);
      }
      c.expect(sim::monitor_violations(t).empty(), name + ": monitor violation in golden");
    }
    const std::string report = scenarios::run_report(cfg, scenarios::run(cfg, workload("bob_short"), 1)).dump(2) + "\n";
    c.expect(report == slurp(golden(name + "_report.json")), name + ": report differs from golden");
  }
  for (const auto& [name, label] : narrative) {
    const std::string bytes = slurp(golden(name + "_short.jsonl"));
    c.expect(bytes.find("\"" + label + "\"") != std::string::npos, name + " lacks label " + label);
  }
  return std::to_string(points) + " audit points over 6 golden traces, 3 golden reports";
}

// -- 3, 4 ----------------------------------------------------------------------

std::string criterion_noninterference(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::size_t events = 0;
  for (const std::string name : {"dedicated", "reservation"}) {
    const auto cfg = scenario(name);
    for (int i = 0; i < 50; ++i) {
      const auto [w1, w2] = testing::bob_variant_pair(rng, 2000000, 300000);
      const auto v1 = sim::serialize(sim::project(scenarios::run(cfg, w1, i), A));
      const auto v2 = sim::serialize(sim::project(scenarios::run(cfg, w2, i), A));
      events += static_cast<std::size_t>(std::count(v1.begin(), v1.end(), '\n')) - 1;
      c.expect(v1 == v2, name + " pair " + std::to_string(i) + " differs");
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 30.0, "took " + fmt(secs) + " s");
  return "100 pairs, " + std::to_string(events) + " observed events, " + fmt(secs) + " s";
}

std::string criterion_statmux_content(Check& c) {
  Rng rng(4048);
  const auto cfg = scenario("statmux");
  const sim::Tick period = scenarios::slot_ticks(cfg);
  std::size_t shifted = 0;
  for (int i = 0; i < 50; ++i) {
    const auto [w1, w2] = testing::bob_variant_pair(rng, 3000000, 900000);
    const auto v1 = sim::project(scenarios::run(cfg, w1, i), A);
    const auto v2 = sim::project(scenarios::run(cfg, w2, i), A);
    if (v1.events.size() != v2.events.size()) {
      c.expect(false, "pair " + std::to_string(i) + ": event counts differ");
      continue;
    }
    for (std::size_t k = 0; k < v1.events.size(); ++k) {
      const auto& a = v1.events[k];
      const auto& b = v2.events[k];
      c.expect(a.payload == b.payload && a.label == b.label && a.src == b.src, "pair " + std::to_string(i) + ": content");
      const sim::Tick d = a.tick > b.tick ? a.tick - b.tick : b.tick - a.tick;
      c.expect(d % period == 0, "pair " + std::to_string(i) + ": shift " + std::to_string(d));
      shifted += d != 0;
    }
  }
  return "50 pairs, " + std::to_string(shifted) + " completions shifted by whole periods of " + std::to_string(period) +
         " ticks";
}

// -- 5 -------------------------------------------------------------------------

std::string criterion_leak(Check& c) {
  std::string detail;
  for (const std::string name : {"statmux", "dedicated", "reservation"}) {
    const auto cfg = scenario(name);
    for (leak::Family f : {leak::Family::Length, leak::Family::Burst}) {
      leak::LeakOptions opt;
      opt.family = f;
      opt.trials = 1000;
      opt.seed = 11;
      opt.bits = f == leak::Family::Length ? 1 : 4;
      const auto r = leak::estimate_leak_rate(cfg, opt);
      const std::string tag = name + "/" + std::string(to_string(f));
      if (name == "statmux") {
        c.expect(r.mi_bits_per_period <= 1.0, tag + ": " + std::to_string(r.mi_bits_per_period) + " bits per period");
        c.expect(r.rate_bits_per_second <= r.bound_bits_per_second, tag + ": rate above f");
        c.expect(r.bound_bits_per_second == 1.0, tag + ": bound is not f = 1");
        detail += tag + " " + fmt(r.mi_bits_per_period) + " bit/period; ";
      } else {
        c.expect(r.mi.plugin_bits == 0.0 && r.mi.miller_madow_bits == 0.0, tag + ": MI " + std::to_string(r.mi.plugin_bits));
      }
    }
  }
  return detail + "dedicated and reservation MI 0";
}

// -- 6 -------------------------------------------------------------------------

const sim::SimEvent* reject_at(const Trace& t, const std::string& dst) {
  for (const auto& e : t.events) {
    if (e.kind == EventKind::Reject && e.dst == dst) return &e;
  }
  return nullptr;
}

std::string criterion_enforcement(Check& c) {
  const auto bob = workload("bob_short");
  const Trace nopacer_trace = scenarios::run(scenario("statmux_nopacer"), bob, 0);
  const auto* nopacer = reject_at(nopacer_trace, "client:A");
  c.expect(nopacer && nopacer->src == "gw:A" && nopacer->note.rfind("FlowDenied", 0) == 0,
           "statmux_nopacer: no FlowDenied at gw:A");
  scenarios::Scenario s(scenario("statmux"), workload("empty"), 0);
  const auto out = s.engine().send(scenarios::kSchedulerId, scenarios::vm_id(A), "hint");
  c.expect(out.status == sim::SendOutcome::Status::FlowDenied && out.reason.rfind("content", 0) == 0,
           "scheduler to customer vm not denied on content");
  const Trace weak_trace = scenarios::run(scenario("statmux_weakcap"), bob, 0);
  const auto* weak = reject_at(weak_trace, "client:A");
  c.expect(weak && weak->note.rfind("CapabilityError", 0) == 0, "statmux_weakcap: no CapabilityError");
  return "nopacer \"" + (nopacer ? nopacer->note : std::string("-")) + "\"; scheduler->vm:A \"" + out.reason +
         "\"; weakcap \"" + (weak ? weak->note.substr(0, weak->note.find(':')) : std::string("-")) + "\"";
}

// -- 7 -------------------------------------------------------------------------

std::string criterion_depgraph(Check& c) {
  const auto g = depgraph::DepGraph::load(std::string(CLOUDRISK_FIXTURES) + "/graphs/shared_provider.json");
  const double exact = depgraph::reliability_exact(g);
  const double naive = depgraph::reliability_naive(g);
  c.expect(std::abs(exact - 0.891) <= 1e-12, "exact " + std::to_string(exact));
  c.expect(std::abs(naive - 0.9639) <= 1e-12, "naive " + std::to_string(naive));
  const auto mc = depgraph::reliability_mc(g, 100000, 42);
  c.expect(std::abs(mc.estimate - exact) <= 4 * mc.stderr_, "mc " + std::to_string(mc.estimate));
  c.expect(depgraph::find_shared(g) == std::vector<std::string>{"C"}, "find_shared");
  return "exact " + std::to_string(exact) + ", naive " + std::to_string(naive) + ", mc " + std::to_string(mc.estimate) +
         " +- " + std::to_string(mc.stderr_);
}

// -- 8 -------------------------------------------------------------------------

std::string criterion_feedback(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = [](const std::string& name) {
    return feedback::load_config(std::string(CLOUDRISK_FIXTURES) + "/feedback/" + name + ".json");
  };
  const std::size_t n = 60;
  for (const std::string alone : {"lb_only", "pm_only"}) {
    const auto osc = feedback::detect_oscillation(feedback::simulate_coupled(cfg(alone), n));
    c.expect(osc.final_amplitude < 0.01, alone + ": amplitude " + std::to_string(osc.final_amplitude));
  }
  const auto aligned_cfg = cfg("aligned");
  const auto aligned = feedback::simulate_coupled(aligned_cfg, n);
  const auto osc = feedback::detect_oscillation(aligned);
  const double loss = feedback::capacity_loss(aligned, aligned_cfg);
  c.expect(osc.verdict == feedback::Verdict::Oscillating, "aligned verdict");
  c.expect(osc.final_amplitude >= 0.8, "aligned amplitude " + std::to_string(osc.final_amplitude));
  c.expect(osc.dominant_period == 2, "aligned period " + std::to_string(osc.dominant_period));
  c.expect(loss >= 0.4, "aligned loss " + std::to_string(loss));
  const auto detuned_cfg = cfg("detuned");
  const double detuned = feedback::capacity_loss(feedback::simulate_coupled(detuned_cfg, n), detuned_cfg);
  c.expect(detuned < 0.1, "detuned loss " + std::to_string(detuned));
  c.expect(feedback::to_csv(aligned) == feedback::to_csv(feedback::simulate_coupled(aligned_cfg, n)), "not deterministic");
  const double secs = seconds_since(t0);
  c.expect(secs < 5.0, "took " + fmt(secs) + " s");
  return "aligned amplitude " + fmt(osc.final_amplitude) + " period " + std::to_string(osc.dominant_period) + " loss " +
         fmt(loss) + "; detuned loss " + fmt(detuned) + "; " + fmt(secs) + " s";
}

// -- 9 -------------------------------------------------------------------------

struct Ran {
  int code;
  std::string out;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char ch : s) q += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return q + "'";
}

Ran run_cli(const std::vector<std::string>& args) {
  std::string cmd = quote(CLOUDRISK_CLI);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  Ran r{0, {}};
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t at = s.find(from); at != std::string::npos; at = s.find(from, at + to.size())) {
    s.replace(at, from.size(), to);
  }
  return s;
}

std::string criterion_replay(Check& c) {
  std::ifstream cases(golden("cases.txt"));
  std::string line;
  std::size_t n = 0;
  std::set<std::string> subcommands;
  while (std::getline(cases, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream in(line);
    std::string name;
    int want = 0;
    in >> name >> want;
    std::vector<std::string> args;
    for (std::string a; in >> a;) {
      args.push_back(replace_all(replace_all(a, "@F@", CLOUDRISK_FIXTURES), "@G@", CLOUDRISK_GOLDEN));
    }
    subcommands.insert(args.at(0));
    const Ran first = run_cli(args);
    const Ran second = run_cli(args);
    c.expect(first.code == want, name + ": exit " + std::to_string(first.code));
    c.expect(first.code == second.code && first.out == second.out, name + ": repeated runs differ");
    c.expect(first.out == slurp(golden(name)), name + ": differs from the clang-built golden");
    ++n;
  }
  c.expect(subcommands.size() == 6, "not every subcommand is covered");
  return std::to_string(n) + " cases over " + std::to_string(subcommands.size()) +
         " subcommands; each run twice, compared to goldens written by a clang++ build "
         "(second toolchain, same OS and architecture)";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string(Check&)>>> criteria{
      {"label algebra soundness", criterion_label_algebra},
      {"narrative label audit on goldens", criterion_label_audit},
      {"non-interference, dedicated and reservation", criterion_noninterference},
      {"statmux content non-interference", criterion_statmux_content},
      {"leak bound", criterion_leak},
      {"enforcement negatives", criterion_enforcement},
      {"depgraph shared provider", criterion_depgraph},
      {"feedback oscillation", criterion_feedback},
      {"replay", criterion_replay},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    std::string detail;
    try {
      detail = criteria[i].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    failed += !c.ok();
    std::cout << (c.ok() ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " (" << detail
              << ")" << c.failures() << "\n";
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
