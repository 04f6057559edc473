// Copyright 2026 The tiertrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TIERTRACE_UNITS_HPP_
#define TIERTRACE_UNITS_HPP_

#include <cstdint>
#include <string>

#include "tiertrace/event_model.hpp"

namespace tiertrace {

// Renders a duration with 3 significant digits in the largest unit that keeps
// the value >= 1: 1234567 -> "1.23 ms", 999 -> "999 ns". Integer arithmetic
// only, rounding half up.
inline std::string format_duration(Nanos ns) {
  if (ns < 1000) return std::to_string(ns) + " ns";
  struct Unit {
    unsigned __int128 div;
    const char* suffix;
  };
  static constexpr Unit kUnits[] = {
      {1'000, " \xC2\xB5s"}, {1'000'000, " ms"}, {1'000'000'000, " s"}};
  for (std::size_t u = 0; u < 3; ++u) {
    const auto d = kUnits[u].div;
    const bool last = u == 2;
    for (int decimals = 2; decimals >= 0; --decimals) {
      unsigned __int128 scale = 1;
      for (int i = 0; i < decimals; ++i) scale *= 10;
      const unsigned __int128 q = (static_cast<unsigned __int128>(ns) * scale + d / 2) / d;
      // Three significant digits: at most 3 digits once scaled.
      if (q < 1000 || (decimals == 0 && last)) {
        if (decimals == 0 && q >= 1000 && !last) break;
        std::string digits = std::to_string(static_cast<std::uint64_t>(q));
        if (decimals > 0) {
          if (digits.size() <= static_cast<std::size_t>(decimals)) {
            digits.insert(0, decimals + 1 - digits.size(), '0');
          }
          digits.insert(digits.size() - decimals, ".");
        }
        return digits + kUnits[u].suffix;
      }
    }
  }
  return std::to_string(ns) + " ns";  // unreachable
}

}  // namespace tiertrace

#endif  // TIERTRACE_UNITS_HPP_
