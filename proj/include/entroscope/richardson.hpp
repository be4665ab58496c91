#pragma once

#include <string>
#include <utility>
#include <vector>

namespace entroscope {

struct ExtrapolationReport {
  std::vector<std::pair<double, double>> samples;  // (h, value), h strictly decreasing
  double limit = 0.0;
  double observed_order = 0.0;  // NaN when the sequence is flat to roundoff
  bool converged = false;
  double residual = 0.0;  // |last extrapolant - previous|
  std::string diagnostic;
};

// Iterated Richardson elimination assuming an error series starting at
// h^expected_order with successive integer orders above it. The observed
// order is measured from the raw samples and reported, not assumed.
ExtrapolationReport richardson_limit(const std::vector<std::pair<double, double>>& samples,
                                     double expected_order, double rel_tol = 1e-6);

}  // namespace entroscope
