#pragma once

// Enumerates the small label space used by the exhaustive algebra checks:
// principals {A,B,C} (or a prefix), rates {1, 2, inf}. Each label is also
// kept in an integer encoding so oracles can work without the Label class.

#include <array>
#include <vector>

#include "cloudrisk/label.hpp"

namespace cloudrisk::testing {

/// Timing level per principal: 0 absent, 1 -> rate 1, 2 -> rate 2, 3 -> inf.
struct EncodedLabel {
  std::array<bool, 3> content{};
  std::array<int, 3> level{};
};

inline const std::array<Principal, 3>& space_principals() {
  static const std::array<Principal, 3> ps{Principal{"A"}, Principal{"B"}, Principal{"C"}};
  return ps;
}

inline Rate level_rate(int level) {
  return level == 3 ? Rate::infinite() : Rate::finite(level);
}

inline Label decode(const EncodedLabel& e, int n) {
  Label l;
  for (int i = 0; i < n; ++i) {
    const auto& p = space_principals()[i];
    if (e.content[i]) l.add_content(p);
    if (e.level[i] != 0) l.add_timing(p, level_rate(e.level[i]));
  }
  return l;
}

/// All labels over the first `n` principals: 2^n * 4^n of them.
inline std::vector<EncodedLabel> enumerate_space(int n) {
  std::vector<EncodedLabel> out;
  const int content_states = 1 << n;
  int timing_states = 1;
  for (int i = 0; i < n; ++i) timing_states *= 4;
  for (int c = 0; c < content_states; ++c) {
    for (int t = 0; t < timing_states; ++t) {
      EncodedLabel e;
      int rest = t;
      for (int i = 0; i < n; ++i) {
        e.content[i] = (c >> i) & 1;
        e.level[i] = rest % 4;
        rest /= 4;
      }
      out.push_back(e);
    }
  }
  return out;
}

/// Element-wise flow oracle on the encoding.
inline bool oracle_can_flow(const EncodedLabel& s, const EncodedLabel& d) {
  for (int i = 0; i < 3; ++i) {
    if (s.content[i] && !d.content[i]) return false;
    if (s.level[i] > d.level[i]) return false;
  }
  return true;
}

}  // namespace cloudrisk::testing
