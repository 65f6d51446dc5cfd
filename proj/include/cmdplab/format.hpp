#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace cmdplab {

/// Shortest-safe round-trip text for a double: 17 significant digits, with
/// "inf"/"-inf" spelled out.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace cmdplab
