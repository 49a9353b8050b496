#pragma once

// Content/timing labels, declassification capabilities and the flow rule.
//
// A label {C/T} pairs a set of content tags C with a map T of timing tags
// principal -> rate. A timing tag U_f says the timing of events on the
// labelled object may carry U's information at up to f bits per second.

#include <algorithm>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cloudrisk/errors.hpp"
#include "cloudrisk/rate.hpp"

namespace cloudrisk {

class Principal {
 public:
  explicit Principal(std::string id) : id_(std::move(id)) {
    if (id_.empty()) throw ConfigError("principal id must be non-empty");
    for (char c : id_) {
      if (c == '{' || c == '}' || c == '/' || c == ',' || c == ':' || c == '-' ||
          static_cast<unsigned char>(c) <= ' ') {
        throw ConfigError("principal id '" + id_ + "' contains a reserved character");
      }
    }
  }

  const std::string& id() const noexcept { return id_; }

  friend bool operator==(const Principal&, const Principal&) = default;
  friend auto operator<=>(const Principal&, const Principal&) = default;

 private:
  std::string id_;
};

enum class TagKind { Content, Timing };

/// One tag a caller asks to remove from a label.
struct DropRequest {
  Principal principal;
  TagKind kind;
};

class Label {
 public:
  using ContentSet = std::set<Principal>;
  using TimingMap = std::map<Principal, Rate>;

  Label() = default;
  Label(ContentSet content, TimingMap timing)
      : content_(std::move(content)), timing_(std::move(timing)) {}

  /// Parses `{A,B/A:inf,B:3/1}`; either side may be `-` or empty.
  /// Repeated timing tags for one principal collapse to the maximum rate.
  static Label parse(std::string_view text);

  const ContentSet& content() const noexcept { return content_; }
  const TimingMap& timing() const noexcept { return timing_; }

  bool empty() const noexcept { return content_.empty() && timing_.empty(); }
  bool has_content(const Principal& p) const { return content_.contains(p); }
  std::optional<Rate> timing_rate(const Principal& p) const {
    auto it = timing_.find(p);
    if (it == timing_.end()) return std::nullopt;
    return it->second;
  }

  Label& add_content(const Principal& p) {
    content_.insert(p);
    return *this;
  }

  /// Keeps the larger rate if a tag for `p` already exists.
  Label& add_timing(const Principal& p, const Rate& r) {
    auto [it, inserted] = timing_.emplace(p, r);
    if (!inserted) it->second = max(it->second, r);
    return *this;
  }

  Label& remove_content(const Principal& p) {
    content_.erase(p);
    return *this;
  }
  Label& remove_timing(const Principal& p) {
    timing_.erase(p);
    return *this;
  }

  /// Canonical text form; principals sorted, `-` for an empty side.
  std::string str() const;

  friend bool operator==(const Label&, const Label&) = default;

 private:
  ContentSet content_;
  TimingMap timing_;
};

/// Content tags for every principal in `ps` plus the matching U_inf timing tags.
inline Label owner_label(std::span<const Principal> ps) {
  Label l;
  for (const auto& p : ps) l.add_content(p).add_timing(p, Rate::infinite());
  return l;
}
inline Label owner_label(const Principal& p) { return owner_label(std::span(&p, 1)); }

/// Label with only the timing part of `l`.
inline Label timing_part(const Label& l) { return Label({}, l.timing()); }

inline bool can_flow(const Label& src, const Label& dst) {
  if (!std::includes(dst.content().begin(), dst.content().end(), src.content().begin(),
                     src.content().end())) {
    return false;
  }
  for (const auto& [p, f] : src.timing()) {
    auto g = dst.timing_rate(p);
    if (!g || *g < f) return false;
  }
  return true;
}

/// Why a flow is refused: tags of `src` not dominated by `dst`.
struct FlowDenial {
  std::vector<Principal> missing_content;
  /// (principal, source rate); destination rate absent or lower.
  std::vector<std::pair<Principal, Rate>> under_rated_timing;

  bool empty() const noexcept { return missing_content.empty() && under_rated_timing.empty(); }
  std::string str() const;
};

inline FlowDenial explain_flow(const Label& src, const Label& dst) {
  FlowDenial d;
  for (const auto& p : src.content()) {
    if (!dst.has_content(p)) d.missing_content.push_back(p);
  }
  for (const auto& [p, f] : src.timing()) {
    auto g = dst.timing_rate(p);
    if (!g || *g < f) d.under_rated_timing.emplace_back(p, f);
  }
  return d;
}

inline Label join(const Label& a, const Label& b) {
  Label out = a;
  for (const auto& p : b.content()) out.add_content(p);
  for (const auto& [p, f] : b.timing()) out.add_timing(p, f);
  return out;
}

/// Every content principal gains timing tag U_inf. Idempotent.
inline Label implied_timing(const Label& l) {
  Label out = l;
  for (const auto& p : l.content()) out.add_timing(p, Rate::infinite());
  return out;
}

/// Caps every timing rate at the pacing rate `f`. `f` must be finite.
inline Label pacer_downgrade(const Label& l, const Rate& f) {
  if (f.is_infinite()) throw ConfigError("pacing at an infinite rate is not a downgrade");
  Label::TimingMap timing;
  for (const auto& [p, r] : l.timing()) timing.emplace(p, min(r, f));
  return Label(l.content(), std::move(timing));
}

// Capabilities --------------------------------------------------------------

class Capability {
 public:
  enum class Kind { ContentDeclassify, TimingDeclassify };

  static Capability content(Principal p) {
    return Capability(std::move(p), Kind::ContentDeclassify, Rate::infinite());
  }
  /// A timing declassifier at infinite rate is the content declassifier.
  static Capability timing(Principal p, Rate r) {
    if (r.is_infinite()) return content(std::move(p));
    return Capability(std::move(p), Kind::TimingDeclassify, r);
  }

  /// `A-` (content) or `A-:p/q` (timing); `A-:inf` normalizes to `A-`.
  static Capability parse(std::string_view text) {
    const auto dash = text.find('-');
    if (dash == std::string_view::npos || dash == 0) {
      throw ParseError("invalid capability '" + std::string(text) + "'");
    }
    Principal p{std::string(text.substr(0, dash))};
    auto rest = text.substr(dash + 1);
    if (rest.empty()) return content(std::move(p));
    if (rest.front() != ':') throw ParseError("invalid capability '" + std::string(text) + "'");
    return timing(std::move(p), Rate::parse(rest.substr(1)));
  }

  const Principal& principal() const noexcept { return principal_; }
  Kind kind() const noexcept { return kind_; }
  /// Infinite for content declassifiers.
  const Rate& rate() const noexcept { return rate_; }

  std::string str() const {
    if (kind_ == Kind::ContentDeclassify) return principal_.id() + "-";
    return principal_.id() + "-:" + rate_.str();
  }

  friend bool operator==(const Capability&, const Capability&) = default;

 private:
  Capability(Principal p, Kind k, Rate r) : principal_(std::move(p)), kind_(k), rate_(r) {}

  Principal principal_;
  Kind kind_;
  Rate rate_;
};

/// Per principal, the strongest capability held. Content declassification
/// subsumes every timing declassifier for that principal.
class CapabilitySet {
 public:
  CapabilitySet() = default;
  CapabilitySet(std::initializer_list<Capability> caps) {
    for (const auto& c : caps) add(c);
  }

  void add(const Capability& c) {
    auto [it, inserted] = strongest_.emplace(c.principal(), c.rate());
    if (!inserted) it->second = max(it->second, c.rate());
  }

  bool empty() const noexcept { return strongest_.empty(); }

  bool can_declassify_content(const Principal& p) const {
    auto it = strongest_.find(p);
    return it != strongest_.end() && it->second.is_infinite();
  }

  bool can_declassify_timing(const Principal& p, const Rate& f) const {
    auto it = strongest_.find(p);
    return it != strongest_.end() && f <= it->second;
  }

  /// Strongest rate held for `p` (Infinite means content capability).
  std::optional<Rate> strongest(const Principal& p) const {
    auto it = strongest_.find(p);
    if (it == strongest_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<Capability> list() const {
    std::vector<Capability> out;
    for (const auto& [p, r] : strongest_) out.push_back(Capability::timing(p, r));
    return out;
  }

  std::string str() const {
    std::string s = "[";
    bool first = true;
    for (const auto& c : list()) {
      if (!first) s += ",";
      s += c.str();
      first = false;
    }
    return s + "]";
  }

  /// True iff every capability in `other` is matched or exceeded here.
  bool covers(const CapabilitySet& other) const {
    for (const auto& [p, r] : other.strongest_) {
      auto mine = strongest(p);
      if (!mine || *mine < r) return false;
    }
    return true;
  }

  friend bool operator==(const CapabilitySet&, const CapabilitySet&) = default;

 private:
  std::map<Principal, Rate> strongest_;
};

/// Removes the requested tags. Requests naming tags absent from `l` are
/// no-ops. Throws CapabilityError for the first tag whose capability is
/// missing or weaker than the tag's rate.
inline Label declassify(const Label& l, const CapabilitySet& caps,
                        std::span<const DropRequest> drop) {
  Label out = l;
  for (const auto& req : drop) {
    if (req.kind == TagKind::Content) {
      if (!l.has_content(req.principal)) continue;
      if (!caps.can_declassify_content(req.principal)) {
        throw CapabilityError("no content declassifier " + req.principal.id() +
                              "- for content tag " + req.principal.id());
      }
      out.remove_content(req.principal);
    } else {
      auto f = l.timing_rate(req.principal);
      if (!f) continue;
      if (!caps.can_declassify_timing(req.principal, *f)) {
        auto held = caps.strongest(req.principal);
        throw CapabilityError("timing tag " + req.principal.id() + ":" + f->str() +
                              (held ? " exceeds held capability " +
                                          Capability::timing(req.principal, *held).str()
                                    : " has no timing declassifier"));
      }
      out.remove_timing(req.principal);
    }
  }
  return out;
}

/// Drop requests for every tag in `l`.
inline std::vector<DropRequest> drop_all(const Label& l) {
  std::vector<DropRequest> out;
  for (const auto& p : l.content()) out.push_back({p, TagKind::Content});
  for (const auto& [p, f] : l.timing()) out.push_back({p, TagKind::Timing});
  return out;
}

// Text form -------------------------------------------------------------------

inline std::string Label::str() const {
  std::string s = "{";
  if (content_.empty()) {
    s += "-";
  } else {
    bool first = true;
    for (const auto& p : content_) {
      if (!first) s += ",";
      s += p.id();
      first = false;
    }
  }
  s += "/";
  if (timing_.empty()) {
    s += "-";
  } else {
    bool first = true;
    for (const auto& [p, r] : timing_) {
      if (!first) s += ",";
      s += p.id() + ":" + r.str();
      first = false;
    }
  }
  return s + "}";
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace detail

inline Label Label::parse(std::string_view text) {
  auto fail = [&](const std::string& why) {
    return ParseError("invalid label '" + std::string(text) + "': " + why);
  };
  auto body = detail::trim(text);
  if (body.size() < 2 || body.front() != '{' || body.back() != '}') throw fail("expected {C/T}");
  body = body.substr(1, body.size() - 2);
  const auto slash = body.find('/');
  if (slash == std::string_view::npos) throw fail("missing '/'");
  auto content = detail::trim(body.substr(0, slash));
  auto timing = detail::trim(body.substr(slash + 1));

  Label l;
  try {
    if (!content.empty() && content != "-") {
      for (auto id : detail::split(content, ',')) l.add_content(Principal{std::string(id)});
    }
    if (!timing.empty() && timing != "-") {
      // Rates may contain '/', so split tags on ',' only.
      for (auto tag : detail::split(timing, ',')) {
        const auto colon = tag.find(':');
        if (colon == std::string_view::npos) throw fail("timing tag '" + std::string(tag) + "' needs ':rate'");
        l.add_timing(Principal{std::string(detail::trim(tag.substr(0, colon)))},
                     Rate::parse(detail::trim(tag.substr(colon + 1))));
      }
    }
  } catch (const ParseError&) {
    throw;
  } catch (const ConfigError& e) {
    throw fail(e.what());
  }
  return l;
}

inline std::string FlowDenial::str() const {
  std::string s;
  if (!missing_content.empty()) {
    s += "content";
    for (const auto& p : missing_content) s += " " + p.id();
  }
  if (!under_rated_timing.empty()) {
    if (!s.empty()) s += "; ";
    s += "timing";
    for (const auto& [p, r] : under_rated_timing) s += " " + p.id() + ":" + r.str();
  }
  return s;
}

}  // namespace cloudrisk
