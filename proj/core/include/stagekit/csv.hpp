#pragma once

#include <cstdio>
#include <string>

namespace stagekit {

// Compact, locale-independent float formatting for CSV output. All
// emitted files go through this so repeated runs are byte-identical.
inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace stagekit
