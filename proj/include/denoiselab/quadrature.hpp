#pragma once

#include <functional>

namespace dlab {

// Adaptive Simpson integration of f over [a, b] to absolute tolerance tol.
// The interval is first split into initial_panels equal panels so that narrow
// features away from the panel midpoints are not missed, then each panel is
// refined recursively. Throws std::runtime_error if the recursion depth cap
// is reached before the tolerance is met.
double integrate_adaptive_simpson(const std::function<double(double)>& f,
                                  double a, double b, double tol,
                                  int initial_panels = 16, int max_depth = 52);

}  // namespace dlab
