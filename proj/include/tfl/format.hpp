#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace tfl {

/// Round-trippable decimal form; "nan" / "inf" / "-inf" for non-finite values.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace tfl
