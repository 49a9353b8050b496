#pragma once

// Command-line front end. Exit codes: 0 success, 1 domain error or a
// negative result (trace divergence, denied flow), 2 usage, config or
// parse error.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cloudrisk/depgraph.hpp"
#include "cloudrisk/errors.hpp"
#include "cloudrisk/feedback.hpp"
#include "cloudrisk/label.hpp"
#include "cloudrisk/leak.hpp"
#include "cloudrisk/report.hpp"
#include "cloudrisk/scenarios.hpp"

namespace cloudrisk::cli {

inline constexpr int kOk = 0;
inline constexpr int kDomain = 1;
inline constexpr int kUsage = 2;

namespace detail {

inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << text;
  if (!f) throw ConfigError("write failed: " + path);
}

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

inline int cli_main(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cloudrisk: timing-flow control simulator and cloud risk tools", "cloudrisk"};
  app.require_subcommand(1);

  std::string scenario_path, workload_path, out_path = "-", report_path;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "Simulate a scenario and write its trace as JSON Lines");
  run->add_option("scenario", scenario_path, "Scenario JSON")->required();
  run->add_option("--workload", workload_path, "Workload JSON")->required();
  run->add_option("--seed", seed, "Scheduler seed")->required();
  run->add_option("--out", out_path, "Trace output path, - for stdout");
  run->add_option("--report", report_path, "Also write a JSON run report");

  std::string family = "length";
  std::size_t trials = 1000, bits = 1;
  auto* leak = app.add_subcommand("leak", "Estimate the timing-channel leak rate toward the first principal");
  leak->add_option("scenario", scenario_path, "Scenario JSON")->required();
  leak->add_option("--trials", trials, "Number of trials (at least 100)");
  leak->add_option("--seed", seed, "Trial seed")->required();
  leak->add_option("--out", out_path, "Report output path, - for stdout");
  leak->add_option("--family", family, "Secret encoding: length or burst");
  leak->add_option("--bits", bits, "Secret bits per trial (1..16)");

  std::string graph_path, method = "exact";
  std::uint64_t samples = 100000;
  auto* dep = app.add_subcommand("depgraph", "Reliability of a dependency graph");
  dep->add_option("graph", graph_path, "Graph JSON")->required();
  dep->add_option("--method", method, "exact or mc")->check(CLI::IsMember({"exact", "mc"}));
  dep->add_option("--samples", samples, "Monte Carlo samples");
  auto* dep_seed = dep->add_option("--seed", seed, "Monte Carlo seed");
  dep->add_option("--out", out_path, "Report output path, - for stdout");

  std::string config_path, summary_path;
  std::size_t intervals = 60;
  auto* fb = app.add_subcommand("feedback", "Simulate coupled load balancer and power manager loops");
  fb->add_option("config", config_path, "Controller config JSON")->required();
  fb->add_option("--intervals", intervals, "Load-balancer intervals to simulate");
  fb->add_option("--out", out_path, "CSV series output path, - for stdout");
  fb->add_option("--summary", summary_path, "Write the JSON summary here (default: stderr when --out is -, else stdout)");

  std::string trace_a, trace_b, observer;
  auto* diff = app.add_subcommand("diff-trace", "Compare two traces, optionally projected onto one principal");
  diff->add_option("a", trace_a, "First trace")->required();
  diff->add_option("b", trace_b, "Second trace")->required();
  diff->add_option("--project", observer, "Compare only what this principal observes");

  std::string src_label, dst_label;
  auto* check = app.add_subcommand("check-label", "Check whether data labeled SRC may flow to DST");
  check->add_option("src", src_label, "Source label, e.g. {A/A:inf}")->required();
  check->add_option("dst", dst_label, "Destination label")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*run) {
      const auto cfg = scenarios::load_scenario(scenario_path);
      const auto w = scenarios::load_workload(workload_path);
      const auto trace = scenarios::run(cfg, w, seed);
      detail::emit(out_path, sim::serialize(trace), out);
      if (!report_path.empty()) detail::emit(report_path, detail::json_text(scenarios::run_report(cfg, trace)), out);
      return kOk;
    }
    if (*leak) {
      leak::LeakOptions opt;
      opt.family = leak::parse_family(family);
      opt.bits = bits;
      opt.trials = trials;
      opt.seed = seed;
      const auto r = leak::estimate_leak_rate(scenarios::load_scenario(scenario_path), opt);
      detail::emit(out_path, detail::json_text(leak::to_json(r)), out);
      return kOk;
    }
    if (*dep) {
      if (method == "mc" && dep_seed->count() == 0) throw ConfigError("depgraph --method mc requires --seed");
      const auto g = depgraph::DepGraph::load(graph_path);
      detail::emit(out_path, detail::json_text(depgraph::report(g, method, samples, seed)), out);
      return kOk;
    }
    if (*fb) {
      const auto cfg = feedback::load_config(config_path);
      const auto series = feedback::simulate_coupled(cfg, intervals);
      detail::emit(out_path, feedback::to_csv(series), out);
      const std::string summary = detail::json_text(feedback::summary(series, cfg));
      if (!summary_path.empty()) {
        detail::emit(summary_path, summary, out);
      } else {
        (out_path == "-" ? err : out) << summary;
      }
      return kOk;
    }
    if (*diff) {
      std::optional<Principal> p;
      if (!observer.empty()) p = Principal(observer);
      const auto d = report::diff_trace(report::load_trace(trace_a), report::load_trace(trace_b), p);
      out << report::describe(d);
      return d.identical ? kOk : kDomain;
    }
    if (*check) {
      const Label src = Label::parse(src_label), dst = Label::parse(dst_label);
      const auto denial = explain_flow(src, dst);
      if (denial.empty()) {
        out << "flow: allowed\n";
        return kOk;
      }
      out << "flow: denied (" << denial.str() << ")\n";
      return kDomain;
    }
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDomain;
  }
  return kUsage;
}

}  // namespace cloudrisk::cli
