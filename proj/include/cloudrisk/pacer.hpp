#pragma once

// Paced queue: at most one message leaves per release tick, and released
// messages have every timing tag capped at the pacing rate.

#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "cloudrisk/engine.hpp"
#include "cloudrisk/errors.hpp"
#include "cloudrisk/label.hpp"

namespace cloudrisk::pacer {

using sim::LabeledMessage;
using sim::Tick;

struct PacerConfig {
  std::string queue_id;
  Rate rate = Rate::finite(1);
  Tick phase_ticks = 0;
};

/// Reads `{"queue_id": .., "rate": "p/q", "phase_ticks": n}`; phase defaults to 0.
inline PacerConfig parse_pacer_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("pacer: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "queue_id" && key != "rate" && key != "phase_ticks") {
      throw ConfigError("pacer: unknown key '" + key + "'");
    }
  }
  PacerConfig c;
  try {
    c.queue_id = j.at("queue_id").get<std::string>();
    c.rate = Rate::parse(j.at("rate").get<std::string>());
    if (j.contains("phase_ticks")) {
      const auto& p = j["phase_ticks"];
      if (!p.is_number_unsigned()) throw ConfigError("pacer: phase_ticks must be a non-negative integer");
      c.phase_ticks = p.get<Tick>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pacer: ") + e.what());
  }
  if (c.queue_id.empty()) throw ConfigError("pacer: queue_id must be non-empty");
  return c;
}

class PacedQueue {
 public:
  PacedQueue(Rate f, Tick phase, std::string id) : rate_(f), phase_(phase), id_(std::move(id)) {
    if (f.is_infinite()) throw ConfigError("pacer '" + id_ + "': rate must be finite");
    const __int128 ticks = static_cast<__int128>(sim::kTicksPerSecond) * f.den();
    if (ticks % f.num() != 0) {
      throw ConfigError("pacer '" + id_ + "': rate " + f.str() + " does not give a whole-tick period");
    }
    period_ = static_cast<Tick>(ticks / f.num());
    if (phase_ >= period_) throw ConfigError("pacer '" + id_ + "': phase_ticks must be below the period");
  }

  explicit PacedQueue(const PacerConfig& c) : PacedQueue(c.rate, c.phase_ticks, c.queue_id) {}

  const Rate& rate() const noexcept { return rate_; }
  Tick period() const noexcept { return period_; }
  Tick phase() const noexcept { return phase_; }
  const std::string& id() const noexcept { return id_; }
  std::size_t depth() const noexcept { return fifo_.size(); }
  const LabeledMessage* front() const noexcept { return fifo_.empty() ? nullptr : &fifo_.front(); }

  bool is_release_tick(Tick t) const noexcept { return t >= phase_ && (t - phase_) % period_ == 0; }

  /// First release tick strictly after `t`.
  Tick next_release_after(Tick t) const noexcept {
    if (t < phase_) return phase_;
    return phase_ + ((t - phase_) / period_ + 1) * period_;
  }

  void enqueue(LabeledMessage msg, Tick now) {
    msg.enqueue_tick = now;
    fifo_.push_back(std::move(msg));
  }

  /// Pops and downgrades the head at a release tick; nothing if empty.
  std::optional<LabeledMessage> on_tick(Tick now) {
    if (!is_release_tick(now)) {
      throw std::logic_error("pacer '" + id_ + "': tick " + std::to_string(now) + " is not a release tick");
    }
    if (fifo_.empty()) return std::nullopt;
    LabeledMessage m = std::move(fifo_.front());
    fifo_.pop_front();
    m.label = pacer_downgrade(m.label, rate_);
    m.release_tick = now;
    return m;
  }

 private:
  Rate rate_;
  Tick phase_;
  Tick period_ = 0;
  std::string id_;
  std::deque<LabeledMessage> fifo_;
};

/// Bits per second the emptiness channel can carry: one bit per period.
inline Rate channel_capacity_bound(const PacedQueue& q) { return q.rate(); }

/// Wires a paced queue into an engine as trusted object `spec.id`. Messages
/// delivered to it are queued and forwarded to `downstream` one per release
/// tick. Release ticks are only scheduled while the queue is non-empty.
inline void install_pacer(sim::Engine& engine, sim::ObjectSpec spec, PacedQueue queue,
                          std::string downstream) {
  struct State {
    sim::Engine& engine;
    std::string self;
    std::string downstream;
    PacedQueue queue;
    bool armed = false;

    void arm() {
      if (armed || queue.depth() == 0) return;
      armed = true;
      engine.schedule(queue.next_release_after(engine.now()), sim::EventKind::PacerRelease,
                      [this] { release(); });
    }

    void release() {
      armed = false;
      const Label entry = queue.front() ? queue.front()->label : Label();
      auto m = queue.on_tick(engine.now());
      if (m) {
        engine.record(sim::EventKind::PacerRelease, self, downstream, m->payload, m->label.str(),
                      entry.str(),
                      "queue=" + queue.id() + " enqueued=" + std::to_string(m->enqueue_tick));
        engine.send(self, downstream, m->payload, m->label);
      }
      arm();
    }
  };

  spec.role = sim::Role::Trusted;
  const std::string self = spec.id;
  auto state = std::make_shared<State>(State{engine, self, std::move(downstream), std::move(queue)});
  engine.add_object(std::move(spec), [state](const LabeledMessage& msg) {
    state->queue.enqueue(msg, state->engine.now());
    state->arm();
  });
}

}  // namespace cloudrisk::pacer
