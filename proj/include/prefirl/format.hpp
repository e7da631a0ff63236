#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <cmath>

namespace prefirl {

/// Round-trip representation with 17 significant digits.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) throw std::domain_error("cannot serialize a non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace prefirl
