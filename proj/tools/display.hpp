#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "tate/report.hpp"

namespace tate::display {

/// Percentage points, at most two decimals, trailing zeros dropped.
inline std::string pp(double proportion) {
  const double v = std::round(proportion * 10000.0) / 100.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

/// "point (lo, hi)" in percentage points.
inline std::string ci_cell(double point, double lo, double hi) {
  return pp(point) + " (" + pp(lo) + ", " + pp(hi) + ")";
}

inline std::string ci_cell(const EstimateReport& r) { return ci_cell(r.point, r.lo, r.hi); }

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace tate::display
