#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace lmpspike::text {

// Fixed-width scientific text for tables and CSV; "null" for non-finite.
inline std::string num(double x, int digits = 10) {
  if (!std::isfinite(x)) return "null";
  if (x == 0.0) x = 0.0;  // drop the sign of negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", digits, x);
  return buf;
}

}  // namespace lmpspike::text
