#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>

#include "redemption/error.hpp"

namespace redemption {

/// Exact non-negative rational used for grid steps, weights and lambda.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr Fraction() = default;
  constexpr Fraction(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (den == 0) throw InputError("fraction with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  [[nodiscard]] constexpr double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  /// Returns num/den * scale when that is an integer, otherwise -1.
  [[nodiscard]] constexpr std::int64_t numerator_over(std::int64_t scale) const {
    if ((num * scale) % den != 0) return -1;
    return num * scale / den;
  }

  friend constexpr bool operator==(const Fraction& a, const Fraction& b) { return a.num == b.num && a.den == b.den; }
  friend constexpr std::strong_ordering operator<=>(const Fraction& a, const Fraction& b) {
    return a.num * b.den <=> b.num * a.den;
  }
};

/// Parses a plain decimal ("0.05", "1", ".8", "3/20") into an exact fraction.
inline Fraction parse_fraction(std::string_view text) {
  auto fail = [&]() -> Fraction { throw InputError("not an exact decimal or fraction: '" + std::string(text) + "'"); };
  if (text.empty()) return fail();

  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    std::int64_t n = 0, d = 0;
    const auto a = text.substr(0, slash), b = text.substr(slash + 1);
    if (std::from_chars(a.data(), a.data() + a.size(), n).ptr != a.data() + a.size() || a.empty()) return fail();
    if (std::from_chars(b.data(), b.data() + b.size(), d).ptr != b.data() + b.size() || b.empty()) return fail();
    if (d == 0 || n < 0 || d < 0) return fail();
    return Fraction(n, d);
  }

  if (text.front() == '+') text.remove_prefix(1);
  std::int64_t num = 0, den = 1;
  bool seen_point = false, seen_digit = false;
  for (char c : text) {
    if (c == '.') {
      if (seen_point) return fail();
      seen_point = true;
      continue;
    }
    if (c < '0' || c > '9') return fail();
    seen_digit = true;
    if (num > (INT64_MAX - 9) / 10 || (seen_point && den > INT64_MAX / 10)) return fail();
    num = num * 10 + (c - '0');
    if (seen_point) den *= 10;
  }
  if (!seen_digit) return fail();
  return Fraction(num, den);
}

inline std::string to_string(const Fraction& f) { return std::to_string(f.num) + "/" + std::to_string(f.den); }

}  // namespace redemption
