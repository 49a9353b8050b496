#pragma once

// Covert-channel experiment: Bob encodes secret bits in his jobs, Alice's
// decoder sees only what reaches her endpoint, and the mutual information
// between the two is estimated from repeated trials.

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cloudrisk/errors.hpp"
#include "cloudrisk/rng.hpp"
#include "cloudrisk/scenarios.hpp"

namespace cloudrisk::leak {

using scenarios::Job;
using scenarios::ScenarioConfig;
using scenarios::Workload;
using sim::Tick;

/// length: one Bob job per slot, short (P/10) for 0, long (9P/10) for 1.
/// burst: three P/4 Bob jobs in slot i iff bit i is set.
enum class Family { Length, Burst };

inline std::string_view to_string(Family f) { return f == Family::Length ? "length" : "burst"; }

inline Family parse_family(std::string_view s) {
  if (s == "length") return Family::Length;
  if (s == "burst") return Family::Burst;
  throw ConfigError("unknown encoder family '" + std::string(s) + "' (expected length or burst)");
}

inline constexpr std::size_t kMinTrials = 100;

struct MiEstimate {
  double plugin_bits = 0;
  double miller_madow_bits = 0;
  std::size_t samples = 0;
  std::size_t distinct_secrets = 0;
  std::size_t distinct_observations = 0;
  std::size_t distinct_pairs = 0;
};

/// Plug-in mutual information of (secret, observation) samples, in bits,
/// with the Miller-Madow bias correction applied to each entropy term.
inline MiEstimate mutual_information(const std::vector<std::pair<std::string, std::string>>& samples) {
  MiEstimate out;
  out.samples = samples.size();
  if (samples.empty()) return out;
  std::map<std::string, std::size_t> ns, no;
  std::map<std::pair<std::string, std::string>, std::size_t> nso;
  for (const auto& s : samples) {
    ++ns[s.first];
    ++no[s.second];
    ++nso[s];
  }
  const double n = static_cast<double>(samples.size());
  double mi = 0;
  for (const auto& [key, count] : nso) {
    const double c = static_cast<double>(count);
    const double ratio = (c * n) / (static_cast<double>(ns[key.first]) * static_cast<double>(no[key.second]));
    mi += (c / n) * std::log2(ratio);
  }
  out.plugin_bits = mi < 0 ? 0.0 : mi;
  out.distinct_secrets = ns.size();
  out.distinct_observations = no.size();
  out.distinct_pairs = nso.size();
  const double correction =
      (static_cast<double>(ns.size()) + static_cast<double>(no.size()) - static_cast<double>(nso.size()) - 1.0) /
      (2.0 * n * std::log(2.0));
  out.miller_madow_bits = out.plugin_bits + correction;
  return out;
}

/// Alice's probe in every slot plus Bob's encoding of `secret` ('0'/'1' chars).
inline Workload encode(const ScenarioConfig& cfg, Family family, const std::string& secret) {
  const Tick p = scenarios::slot_ticks(cfg);
  const Principal alice = cfg.principals.at(0);
  const Principal bob = cfg.principals.at(1);
  Workload w;
  w.id = std::string(to_string(family)) + "-" + secret;
  auto& a = w.jobs[alice];
  auto& b = w.jobs[bob];
  for (std::size_t i = 0; i < secret.size(); ++i) {
    const Tick slot = i * p;
    a.push_back({slot + 1, 3 * p / 10, "probe" + std::to_string(i)});
    const bool bit = secret[i] == '1';
    if (family == Family::Length) {
      b.push_back({slot, bit ? 9 * p / 10 : p / 10, "bit" + std::to_string(i)});
    } else if (bit) {
      for (int k = 0; k < 3; ++k) b.push_back({slot, p / 4, "burst" + std::to_string(i) + "_" + std::to_string(k)});
    }
  }
  return w;
}

/// Observation slots per trial: the secret's slots plus two to drain.
inline std::size_t trial_slots(std::size_t bits) { return bits + 2; }

/// Configuration used for every trial: the horizon covers the trial exactly.
inline ScenarioConfig trial_config(ScenarioConfig cfg, std::size_t bits) {
  if (cfg.principals.size() < 2) throw ConfigError("leak: scenario needs at least two principals");
  cfg.horizon_ticks = scenarios::slot_ticks(cfg) * trial_slots(bits);
  return cfg;
}

/// What Alice's decoder sees: her endpoint's events, serialized.
inline std::string observe(const ScenarioConfig& trial_cfg, const Workload& w, std::uint64_t seed) {
  std::string out;
  for (const auto& e : sim::project(scenarios::run(trial_cfg, w, seed), trial_cfg.principals.at(0)).events) {
    out += sim::serialize_event(e);
    out += '\n';
  }
  return out;
}

struct LeakOptions {
  Family family = Family::Length;
  std::size_t bits = 1;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
};

struct LeakReport {
  std::string scenario;
  LeakOptions options;
  MiEstimate mi;
  Tick period_ticks = 0;
  std::size_t periods_per_trial = 0;
  double trial_seconds = 0;
  double mi_bits_per_period = 0;
  double rate_bits_per_second = 0;
  /// Pacing rate for paced scenarios; 0 where no timing flow reaches Alice.
  double bound_bits_per_second = 0;
};

/// Trial t draws its secret and engine seed from stream (seed, t), so the
/// result does not depend on evaluation order.
inline LeakReport estimate_leak_rate(const ScenarioConfig& cfg, const LeakOptions& opt) {
  if (opt.trials < kMinTrials) {
    throw StatError("leak: need at least " + std::to_string(kMinTrials) + " trials, got " +
                    std::to_string(opt.trials));
  }
  if (opt.bits == 0 || opt.bits > 16) throw ConfigError("leak: bits must be in 1..16");
  const ScenarioConfig tc = trial_config(cfg, opt.bits);
  std::vector<std::pair<std::string, std::string>> samples;
  samples.reserve(opt.trials);
  for (std::size_t t = 0; t < opt.trials; ++t) {
    Rng rng = Rng::stream(opt.seed, t);
    std::string secret;
    for (std::size_t i = 0; i < opt.bits; ++i) secret += rng.coin() ? '1' : '0';
    const std::uint64_t engine_seed = rng.next();
    samples.emplace_back(secret, observe(tc, encode(tc, opt.family, secret), engine_seed));
  }
  LeakReport r;
  r.scenario = cfg.id;
  r.options = opt;
  r.mi = mutual_information(samples);
  r.period_ticks = scenarios::slot_ticks(tc);
  r.periods_per_trial = trial_slots(opt.bits);
  r.trial_seconds = static_cast<double>(tc.horizon_ticks) / static_cast<double>(sim::kTicksPerSecond);
  r.mi_bits_per_period = r.mi.plugin_bits / static_cast<double>(r.periods_per_trial);
  r.rate_bits_per_second = r.mi.plugin_bits / r.trial_seconds;
  if (cfg.kind == scenarios::Kind::StatMux && cfg.pacer) {
    r.bound_bits_per_second = pacer::channel_capacity_bound(pacer::PacedQueue(*cfg.pacer)).to_double();
  }
  return r;
}

inline nlohmann::json to_json(const LeakReport& r) {
  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["family"] = to_string(r.options.family);
  j["bits"] = r.options.bits;
  j["trials"] = r.options.trials;
  j["seed"] = r.options.seed;
  j["secret_alphabet"] = std::size_t{1} << r.options.bits;
  j["distinct_secrets"] = r.mi.distinct_secrets;
  j["distinct_observations"] = r.mi.distinct_observations;
  j["mi_bits"] = r.mi.plugin_bits;
  j["mi_miller_madow_bits"] = r.mi.miller_madow_bits;
  j["period_ticks"] = r.period_ticks;
  j["periods_per_trial"] = r.periods_per_trial;
  j["trial_seconds"] = r.trial_seconds;
  j["mi_bits_per_period"] = r.mi_bits_per_period;
  j["rate_bits_per_second"] = r.rate_bits_per_second;
  j["bound_bits_per_second"] = r.bound_bits_per_second;
  j["estimator"] = "plug-in over observed (secret, observation) pairs; miller_madow adds the first-order bias term";
  return j;
}

}  // namespace cloudrisk::leak
