#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>

namespace superconv {

// Shortest-safe text for CSV: %.17g round-trips every double exactly.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

}  // namespace superconv
