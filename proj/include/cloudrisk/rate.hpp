#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>

#include "cloudrisk/errors.hpp"

namespace cloudrisk {

/// Leak rate in bits per second: a positive exact rational, or unbounded.
///
/// Equality and ordering are exact (cross-multiplication in 128-bit
/// arithmetic); Infinite compares greater than every finite rate.
class Rate {
 public:
  /// Defaults to Infinite, the rate implied by a content tag.
  constexpr Rate() = default;

  static constexpr Rate infinite() { return Rate{}; }

  static Rate finite(std::int64_t num, std::int64_t den = 1) {
    if (den == 0) throw ConfigError("rate denominator must be non-zero");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    if (num <= 0) throw ConfigError("rate must be positive, got " + std::to_string(num) + "/" +
                                    std::to_string(den));
    const std::int64_t g = std::gcd(num, den);
    Rate r;
    r.num_ = num / g;
    r.den_ = den / g;
    return r;
  }

  /// Accepts `inf`, `p` or `p/q`.
  static Rate parse(std::string_view text) {
    if (text == "inf") return infinite();
    const auto slash = text.find('/');
    const auto num = parse_int(text.substr(0, slash), text);
    const auto den = slash == std::string_view::npos ? 1 : parse_int(text.substr(slash + 1), text);
    if (num <= 0 || den <= 0) throw ParseError("rate must be positive: '" + std::string(text) + "'");
    return finite(num, den);
  }

  constexpr bool is_infinite() const noexcept { return den_ == 0; }
  constexpr bool is_finite() const noexcept { return den_ != 0; }
  constexpr std::int64_t num() const noexcept { return num_; }
  constexpr std::int64_t den() const noexcept { return den_; }

  double to_double() const noexcept {
    return is_infinite() ? std::numeric_limits<double>::infinity()
                         : static_cast<double>(num_) / static_cast<double>(den_);
  }

  /// Canonical text: `inf` or `p/q` (denominator always written).
  std::string str() const {
    if (is_infinite()) return "inf";
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

  friend constexpr bool operator==(const Rate& a, const Rate& b) noexcept {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }

  friend constexpr std::strong_ordering operator<=>(const Rate& a, const Rate& b) noexcept {
    if (a.is_infinite() || b.is_infinite()) {
      return static_cast<int>(a.is_infinite()) <=> static_cast<int>(b.is_infinite());
    }
    const __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
    const __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
    return lhs <=> rhs;
  }

 private:
  static std::int64_t parse_int(std::string_view digits, std::string_view whole) {
    if (digits.empty() || digits.size() > 18) {
      throw ParseError("invalid rate '" + std::string(whole) + "'");
    }
    std::int64_t v = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') throw ParseError("invalid rate '" + std::string(whole) + "'");
      v = v * 10 + (c - '0');
    }
    return v;
  }

  // den_ == 0 encodes Infinite.
  std::int64_t num_ = 1;
  std::int64_t den_ = 0;
};

inline Rate min(const Rate& a, const Rate& b) { return b < a ? b : a; }
inline Rate max(const Rate& a, const Rate& b) { return a < b ? b : a; }

}  // namespace cloudrisk
