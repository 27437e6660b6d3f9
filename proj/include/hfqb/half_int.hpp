#pragma once

// Exact half-integer angular momentum quantum numbers (F, I, J, ...),
// stored as twice the value so that triangle rules, parities and phases
// can be decided in integer arithmetic.

#include <compare>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace hfqb {

class half_int {
public:
  constexpr half_int() = default;
  constexpr half_int(int whole) : twice_(2 * whole) {}  // implicit: 3 means j = 3

  static constexpr half_int from_twice(int twice) {
    half_int h;
    h.twice_ = twice;
    return h;
  }

  constexpr int twice() const { return twice_; }
  constexpr bool is_integer() const { return twice_ % 2 == 0; }
  constexpr double value() const { return twice_ / 2.0; }

  friend constexpr half_int operator+(half_int a, half_int b) {
    return from_twice(a.twice_ + b.twice_);
  }
  friend constexpr half_int operator-(half_int a, half_int b) {
    return from_twice(a.twice_ - b.twice_);
  }
  friend constexpr auto operator<=>(half_int a, half_int b) = default;

private:
  int twice_ = 0;
};

constexpr half_int abs(half_int h) {
  return half_int::from_twice(h.twice() < 0 ? -h.twice() : h.twice());
}

inline std::string to_string(half_int h) {
  if (h.is_integer()) return std::to_string(h.twice() / 2);
  return std::to_string(h.twice()) + "/2";
}

// Accepts "7/2", "3.5" and "4". Used by the CLI flag layer.
inline half_int parse_half_int(const std::string& text) {
  const auto fail = [&] {
    throw std::invalid_argument("not a half-integer: '" + text + "'");
  };
  if (text.empty()) fail();
  std::size_t pos = 0;
  try {
    if (const auto slash = text.find('/'); slash != std::string::npos) {
      const int num = std::stoi(text.substr(0, slash), &pos);
      if (pos != slash) fail();
      const int den = std::stoi(text.substr(slash + 1), &pos);
      if (pos != text.size() - slash - 1) fail();
      if (den == 1) return half_int(num);
      if (den == 2) return half_int::from_twice(num);
      fail();
    }
    if (text.find('.') != std::string::npos) {
      const double v = std::stod(text, &pos);
      if (pos != text.size()) fail();
      const double twice = 2.0 * v;
      const long long rounded = static_cast<long long>(twice < 0 ? twice - 0.5 : twice + 0.5);
      if (std::abs(twice - static_cast<double>(rounded)) > 1e-9) fail();
      return half_int::from_twice(static_cast<int>(rounded));
    }
    const int whole = std::stoi(text, &pos);
    if (pos != text.size()) fail();
    return half_int(whole);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    fail();
  }
  return {};  // unreachable
}

}  // namespace hfqb
