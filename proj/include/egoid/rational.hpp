#pragma once

#include <cstdint>
#include <string>

namespace egoid {

/// Frame rate as an exact ratio (e.g. 30000/1001).
struct Rational {
  std::uint32_t num = 15;
  std::uint32_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool valid() const { return num > 0 && den > 0; }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

  friend bool operator==(const Rational&, const Rational&) = default;
};

/// Parses "15", "15/1" or "30000/1001"; returns false on malformed input.
bool parse_rational(const std::string& text, Rational& out);

}  // namespace egoid
