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

#ifndef TIERTRACE_RATIONAL_HPP_
#define TIERTRACE_RATIONAL_HPP_

#include <compare>
#include <cstdint>
#include <string>

#include "tiertrace/error.hpp"

namespace tiertrace {

/// Non-negative exact fraction, always kept in lowest terms.
///
/// Used for the planning formulas (window duration, relative overhead,
/// observed rate) so that identities like `window * rate == capacity` hold
/// exactly rather than to within a float epsilon.
class Rational {
 public:
  using u128 = unsigned __int128;

  constexpr Rational() = default;
  constexpr Rational(std::uint64_t whole) : num_(whole), den_(1) {}  // NOLINT

  // Throws UndefinedError when `den` is zero and RangeError when the reduced
  // fraction does not fit in 64-bit terms.
  static Rational of(u128 num, u128 den) {
    if (den == 0) throw UndefinedError("rational with zero denominator");
    const u128 g = gcd(num, den);
    num /= g;
    den /= g;
    if (num > UINT64_MAX || den > UINT64_MAX) {
      throw RangeError("rational", "term exceeds 64 bits");
    }
    Rational r;
    r.num_ = static_cast<std::uint64_t>(num);
    r.den_ = static_cast<std::uint64_t>(den);
    return r;
  }

  constexpr std::uint64_t num() const noexcept { return num_; }
  constexpr std::uint64_t den() const noexcept { return den_; }

  double to_double() const noexcept {
    return static_cast<double>(static_cast<long double>(num_) / den_);
  }

  // Decimal rendering rounded half-up to at most `max_frac_digits` places;
  // trailing zeros are trimmed, so terminating fractions print exactly.
  std::string to_decimal(int max_frac_digits = 9) const {
    if (max_frac_digits < 0) max_frac_digits = 0;
    if (max_frac_digits > 18) max_frac_digits = 18;
    u128 scale = 1;
    for (int i = 0; i < max_frac_digits; ++i) scale *= 10;
    const u128 scaled = (static_cast<u128>(num_) * scale + den_ / 2) / den_;
    std::string whole = u128_to_string(scaled / scale);
    if (max_frac_digits == 0) return whole;
    std::string frac = u128_to_string(scaled % scale);
    frac.insert(0, static_cast<std::size_t>(max_frac_digits) - frac.size(), '0');
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    return frac.empty() ? whole : whole + "." + frac;
  }

  friend Rational operator*(const Rational& a, const Rational& b) {
    return of(static_cast<u128>(a.num_) * b.num_,
              static_cast<u128>(a.den_) * b.den_);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    return of(static_cast<u128>(a.num_) * b.den_,
              static_cast<u128>(a.den_) * b.num_);
  }
  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a,
                                          const Rational& b) {
    return static_cast<u128>(a.num_) * b.den_ <=>
           static_cast<u128>(b.num_) * a.den_;
  }

 private:
  static constexpr u128 gcd(u128 a, u128 b) {
    while (b != 0) {
      const u128 t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }

  static std::string u128_to_string(u128 v) {
    if (v == 0) return "0";
    std::string s;
    while (v > 0) {
      s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
      v /= 10;
    }
    return s;
  }

  std::uint64_t num_ = 0;
  std::uint64_t den_ = 1;
};

}  // namespace tiertrace

#endif  // TIERTRACE_RATIONAL_HPP_
