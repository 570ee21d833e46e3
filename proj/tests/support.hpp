#pragma once

// Shared test oracles, implemented independently of the library code paths
// they check (plain textbook algorithms, no shared helpers).

#include <cstddef>
#include <vector>

namespace testsupport {

// Cox-de Boor recursion, direct form. The top nonempty span is treated as
// right-closed so the basis covers the full [lo, hi] range.
inline double coxdeboor(const std::vector<double>& knots, std::size_t i, int d, double x,
                        double hi) {
  if (d == 0) {
    const bool top = knots[i] < knots[i + 1] && knots[i + 1] == hi;
    return (x >= knots[i] && x < knots[i + 1]) || (top && x == hi) ? 1.0 : 0.0;
  }
  double value = 0.0;
  const double dl = knots[i + d] - knots[i];
  if (dl > 0.0) value += (x - knots[i]) / dl * coxdeboor(knots, i, d - 1, x, hi);
  const double dr = knots[i + d + 1] - knots[i + 1];
  if (dr > 0.0) value += (knots[i + d + 1] - x) / dr * coxdeboor(knots, i + 1, d - 1, x, hi);
  return value;
}

inline std::vector<double> recursive_bspline(double x, const std::vector<double>& knots,
                                             int degree) {
  const std::size_t k = knots.size() - static_cast<std::size_t>(degree) - 1;
  const double hi = knots[k];
  std::vector<double> values(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) values[i] = coxdeboor(knots, i, degree, x, hi);
  return values;
}

}  // namespace testsupport
