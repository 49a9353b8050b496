#pragma once

// Coupled load-balancer and power-manager loops over two servers.
//
// Model (piecewise constant between controller events):
//   traffic     n1 = round(s * load), n2 = load - n1 requests per tick
//   offered     O_i = n_i * work               work units per tick
//   capacity    C_i = clock_i * capacity_per_clock
//   served      S_i = min(O_i, C_i)
//   load        rho_i = O_i / C_i,  util u_i = S_i / C_i
//   response    R(rho) = rho / (1 - rho), capped at rt_cap (rt_cap when rho >= 1)
// Each loop measures only its own window since its previous update.
//   LB, at every k * lb_period:            s <- clamp01(s - lb_gain * (R1 - R2))
//   PM, at every pm_phase + k * pm_period: clock_i <- level nearest clock_i + pm_gain * (u_i - target_util)
// At a tick where both fire, PM updates first. One record per LB interval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cloudrisk/errors.hpp"
#include "cloudrisk/scenario_config.hpp"

namespace cloudrisk::feedback {

using Tick = std::uint64_t;

struct ControllerConfig {
  Tick lb_period = 1000;
  Tick pm_period = 1000;
  Tick pm_phase = 0;
  double lb_gain = 0.15;
  double pm_gain = 2.4;
  double target_util = 0.5;
  double level_min = 0.5;
  double level_max = 1.5;
  double level_step = 0.1;
  double initial_split = 0.55;
  double initial_clock = 1.0;
  std::int64_t offered_load = 1000;
  double work_per_request = 0.001;
  double capacity_per_clock = 1.0;
  double rt_cap = 10.0;

  int level_count() const { return static_cast<int>(std::lround((level_max - level_min) / level_step)) + 1; }
  double level(int k) const { return level_min + k * level_step; }
  int nearest_level(double c) const {
    const long k = std::lround((c - level_min) / level_step);
    return static_cast<int>(std::clamp<long>(k, 0, level_count() - 1));
  }
};

inline void validate(const ControllerConfig& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("feedback: ") + what);
  };
  need(c.lb_period > 0 && c.pm_period > 0, "periods must be positive");
  need(c.pm_phase < c.pm_period, "pm_phase must be below pm_period");
  need(c.lb_gain >= 0 && c.pm_gain >= 0, "gains must be non-negative");
  need(c.target_util > 0 && c.target_util < 1, "target_util must be in (0,1)");
  need(c.level_min > 0 && c.level_step > 0 && c.level_max >= c.level_min, "clock levels must be positive and ordered");
  need(std::abs(c.level(c.level_count() - 1) - c.level_max) < 1e-9, "level range must be a whole number of steps");
  need(c.initial_split >= 0 && c.initial_split <= 1, "initial_split must be in [0,1]");
  need(c.initial_clock >= c.level_min - 1e-9 && c.initial_clock <= c.level_max + 1e-9, "initial_clock outside levels");
  need(c.offered_load > 0, "offered_load must be positive");
  need(c.work_per_request > 0 && c.capacity_per_clock > 0, "work and capacity must be positive");
  need(c.rt_cap > 0, "rt_cap must be positive");
}

inline ControllerConfig parse_config(const nlohmann::json& j) {
  scenarios::detail::allow_keys(j,
                                {"lb_period", "pm_period", "pm_phase", "lb_gain", "pm_gain", "target_util",
                                 "pm_levels", "initial_split", "initial_clock", "offered_load",
                                 "work_per_request", "capacity_per_clock", "rt_cap", "description"},
                                "feedback config");
  ControllerConfig c;
  auto num = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(std::string("feedback: '") + key + "' must be a number");
    out = j[key].get<double>();
  };
  auto tick = [&](const char* key, Tick& out) {
    if (j.contains(key)) out = scenarios::detail::get_tick(j, key, "feedback");
  };
  tick("lb_period", c.lb_period);
  tick("pm_period", c.pm_period);
  tick("pm_phase", c.pm_phase);
  num("lb_gain", c.lb_gain);
  num("pm_gain", c.pm_gain);
  num("target_util", c.target_util);
  num("initial_split", c.initial_split);
  num("initial_clock", c.initial_clock);
  num("work_per_request", c.work_per_request);
  num("capacity_per_clock", c.capacity_per_clock);
  num("rt_cap", c.rt_cap);
  if (j.contains("offered_load")) {
    if (!j["offered_load"].is_number_unsigned()) throw ConfigError("feedback: offered_load must be a positive integer");
    c.offered_load = j["offered_load"].get<std::int64_t>();
  }
  if (j.contains("pm_levels")) {
    const auto& l = j["pm_levels"];
    scenarios::detail::allow_keys(l, {"min", "max", "step"}, "feedback pm_levels");
    if (!l.contains("min") || !l.contains("max") || !l.contains("step")) {
      throw ConfigError("feedback: pm_levels needs min, max and step");
    }
    c.level_min = l["min"].get<double>();
    c.level_max = l["max"].get<double>();
    c.level_step = l["step"].get<double>();
  }
  validate(c);
  return c;
}

inline ControllerConfig load_config(const std::string& path) {
  return parse_config(scenarios::detail::parse_json_text(scenarios::read_file(path), "feedback config"));
}

struct IntervalRecord {
  std::size_t interval = 0;
  double split = 0;
  std::int64_t requests1 = 0;
  std::int64_t requests2 = 0;
  double clock1 = 0;  // time-averaged over the interval
  double clock2 = 0;
  double util1 = 0;
  double util2 = 0;
  double rt = 0;          // load-weighted mean of R over both servers
  double throughput = 0;  // requests per tick
};

using FeedbackSeries = std::vector<IntervalRecord>;

inline double response_proxy(double rho, double cap) { return rho >= 1.0 ? cap : std::min(rho / (1.0 - rho), cap); }

inline FeedbackSeries simulate_coupled(const ControllerConfig& cfg, std::size_t intervals) {
  validate(cfg);
  if (intervals < 10) throw ConfigError("feedback: need at least 10 intervals");
  struct Window {
    double offered[2] = {0, 0};
    double capacity[2] = {0, 0};
    double served[2] = {0, 0};
    double clock_time[2] = {0, 0};
  };
  double s = cfg.initial_split;
  int level[2] = {cfg.nearest_level(cfg.initial_clock), cfg.nearest_level(cfg.initial_clock)};
  const Tick end = cfg.lb_period * intervals;
  Tick lb_next = cfg.lb_period;
  Tick pm_next = cfg.pm_phase == 0 ? cfg.pm_period : cfg.pm_phase;
  Window lb_w, pm_w;
  FeedbackSeries out;
  Tick t = 0;
  while (t < end) {
    const Tick next = std::min({lb_next, pm_next, end});
    const double dt = static_cast<double>(next - t);
    const std::int64_t n1 = std::clamp<std::int64_t>(std::llround(s * static_cast<double>(cfg.offered_load)), 0,
                                                     cfg.offered_load);
    const std::int64_t n[2] = {n1, cfg.offered_load - n1};
    for (int i = 0; i < 2; ++i) {
      const double clock = cfg.level(level[i]);
      const double off = static_cast<double>(n[i]) * cfg.work_per_request * dt;
      const double cap = clock * cfg.capacity_per_clock * dt;
      const double srv = std::min(off, cap);
      for (Window* w : {&lb_w, &pm_w}) {
        w->offered[i] += off;
        w->capacity[i] += cap;
        w->served[i] += srv;
        w->clock_time[i] += clock * dt;
      }
    }
    t = next;
    if (t == pm_next) {
      if (cfg.pm_gain > 0) {
        for (int i = 0; i < 2; ++i) {
          const double u = pm_w.served[i] / pm_w.capacity[i];
          level[i] = cfg.nearest_level(cfg.level(level[i]) + cfg.pm_gain * (u - cfg.target_util));
        }
      }
      pm_w = Window{};
      pm_next += cfg.pm_period;
    }
    if (t == lb_next) {
      IntervalRecord r;
      r.interval = out.size();
      r.split = s;
      r.requests1 = n[0];
      r.requests2 = n[1];
      const double period = static_cast<double>(cfg.lb_period);
      r.clock1 = lb_w.clock_time[0] / period;
      r.clock2 = lb_w.clock_time[1] / period;
      r.util1 = lb_w.served[0] / lb_w.capacity[0];
      r.util2 = lb_w.served[1] / lb_w.capacity[1];
      const double R1 = response_proxy(lb_w.offered[0] / lb_w.capacity[0], cfg.rt_cap);
      const double R2 = response_proxy(lb_w.offered[1] / lb_w.capacity[1], cfg.rt_cap);
      const double load = static_cast<double>(cfg.offered_load);
      r.rt = (static_cast<double>(n[0]) * R1 + static_cast<double>(n[1]) * R2) / load;
      r.throughput = (lb_w.served[0] + lb_w.served[1]) / cfg.work_per_request / period;
      out.push_back(r);
      s = std::clamp(s - cfg.lb_gain * (R1 - R2), 0.0, 1.0);
      lb_w = Window{};
      lb_next += cfg.lb_period;
    }
  }
  return out;
}

enum class Verdict { Converged, Oscillating, Drifting };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Converged: return "converged";
    case Verdict::Oscillating: return "oscillating";
    case Verdict::Drifting: return "drifting";
  }
  return "?";
}

struct OscillationReport {
  std::vector<double> window_amplitudes;
  double final_amplitude = 0;
  std::size_t dominant_period = 0;  // intervals; 0 for a constant series
  Verdict verdict = Verdict::Converged;
};

/// Peak-to-peak split amplitude over four equal trailing windows, and the
/// autocorrelation peak over lags 1..n/2.
inline OscillationReport detect_oscillation(const std::vector<double>& split) {
  constexpr std::size_t kWindows = 4;
  if (split.size() < kWindows) throw ConfigError("feedback: series too short for oscillation windows");
  OscillationReport r;
  const std::size_t w = split.size() / kWindows;
  const std::size_t start = split.size() - w * kWindows;
  for (std::size_t k = 0; k < kWindows; ++k) {
    auto b = split.begin() + static_cast<long>(start + k * w);
    auto [lo, hi] = std::minmax_element(b, b + static_cast<long>(w));
    r.window_amplitudes.push_back(*hi - *lo);
  }
  r.final_amplitude = r.window_amplitudes.back();
  const bool growing = std::is_sorted(r.window_amplitudes.begin(), r.window_amplitudes.end());
  if (r.final_amplitude < 0.01) {
    r.verdict = Verdict::Converged;
  } else if (growing && r.final_amplitude > 0.2) {
    r.verdict = Verdict::Oscillating;
  } else {
    r.verdict = Verdict::Drifting;
  }
  const double n = static_cast<double>(split.size());
  double mean = 0;
  for (double x : split) mean += x;
  mean /= n;
  double var = 0;
  for (double x : split) var += (x - mean) * (x - mean);
  if (var > 0) {
    double best = -2;
    for (std::size_t lag = 1; lag <= split.size() / 2; ++lag) {
      double acc = 0;
      for (std::size_t t = 0; t + lag < split.size(); ++t) acc += (split[t] - mean) * (split[t + lag] - mean);
      const double rk = acc / var;
      if (rk > best + 1e-12) {
        best = rk;
        r.dominant_period = lag;
      }
    }
  }
  return r;
}

inline std::vector<double> splits(const FeedbackSeries& s) {
  std::vector<double> out;
  for (const auto& r : s) out.push_back(r.split);
  return out;
}

inline OscillationReport detect_oscillation(const FeedbackSeries& s) { return detect_oscillation(splits(s)); }

/// Throughput of a fixed balanced split with every clock at its top level.
inline double baseline_throughput(const ControllerConfig& cfg) {
  const std::int64_t n1 = std::llround(0.5 * static_cast<double>(cfg.offered_load));
  const std::int64_t n[2] = {n1, cfg.offered_load - n1};
  const double cap = cfg.level(cfg.level_count() - 1) * cfg.capacity_per_clock;
  double served = 0;
  for (auto k : n) served += std::min(static_cast<double>(k) * cfg.work_per_request, cap);
  return served / cfg.work_per_request;
}

/// 1 - mean throughput over the last half of the series / baseline.
inline double capacity_loss(const FeedbackSeries& s, const ControllerConfig& cfg) {
  if (s.empty()) return 0;
  const std::size_t from = s.size() / 2;
  double sum = 0;
  for (std::size_t i = from; i < s.size(); ++i) sum += s[i].throughput;
  const double mean = sum / static_cast<double>(s.size() - from);
  return std::max(0.0, 1.0 - mean / baseline_throughput(cfg));
}

inline std::string to_csv(const FeedbackSeries& s) {
  std::ostringstream out;
  out.precision(17);
  out << "interval,split,clock1,clock2,util1,util2,rt,throughput\n";
  for (const auto& r : s) {
    out << r.interval << ',' << r.split << ',' << r.clock1 << ',' << r.clock2 << ',' << r.util1 << ','
        << r.util2 << ',' << r.rt << ',' << r.throughput << '\n';
  }
  return out.str();
}

inline nlohmann::json summary(const FeedbackSeries& s, const ControllerConfig& cfg) {
  const auto osc = detect_oscillation(s);
  nlohmann::json j;
  j["intervals"] = s.size();
  j["verdict"] = to_string(osc.verdict);
  j["window_amplitudes"] = osc.window_amplitudes;
  j["final_amplitude"] = osc.final_amplitude;
  j["dominant_period"] = osc.dominant_period;
  j["capacity_loss"] = capacity_loss(s, cfg);
  j["baseline_throughput"] = baseline_throughput(cfg);
  return j;
}

}  // namespace cloudrisk::feedback
