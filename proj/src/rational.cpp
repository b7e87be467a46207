#include "egoid/rational.hpp"

#include <exception>

namespace egoid {

bool parse_rational(const std::string& text, Rational& out) {
  try {
    const auto slash = text.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const unsigned long num = std::stoul(text, &used);
      if (used != text.size()) return false;
      out = Rational{static_cast<std::uint32_t>(num), 1};
    } else {
      const std::string a = text.substr(0, slash);
      const std::string b = text.substr(slash + 1);
      std::size_t used_b = 0;
      const unsigned long num = std::stoul(a, &used);
      const unsigned long den = std::stoul(b, &used_b);
      if (used != a.size() || used_b != b.size()) return false;
      out = Rational{static_cast<std::uint32_t>(num), static_cast<std::uint32_t>(den)};
    }
  } catch (const std::exception&) {
    return false;
  }
  return out.valid();
}

}  // namespace egoid
