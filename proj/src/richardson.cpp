#include "entroscope/richardson.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace entroscope {

ExtrapolationReport richardson_limit(const std::vector<std::pair<double, double>>& samples,
                                     double expected_order, double rel_tol) {
  if (samples.size() < 3) throw std::invalid_argument("richardson_limit: need at least 3 samples");
  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    if (!(samples[i].first > samples[i + 1].first) || !(samples[i + 1].first > 0.0))
      throw std::invalid_argument("richardson_limit: h must be strictly decreasing and positive");
  }

  ExtrapolationReport rep;
  rep.samples = samples;
  size_t n = samples.size();

  // observed order from raw successive differences (median across triples)
  std::vector<double> orders;
  for (size_t k = 0; k + 2 < n; ++k) {
    double d0 = samples[k + 1].second - samples[k].second;
    double d1 = samples[k + 2].second - samples[k + 1].second;
    double r = samples[k].first / samples[k + 1].first;
    if (std::fabs(d1) > 0.0 && std::fabs(d0) > 0.0 && r > 1.0)
      orders.push_back(std::log(std::fabs(d0 / d1)) / std::log(r));
  }
  if (orders.empty()) {
    rep.observed_order = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::sort(orders.begin(), orders.end());
    rep.observed_order = orders[orders.size() / 2];
  }

  // tableau with elimination orders p, p+1, p+2, ...
  std::vector<std::vector<double>> t(n);
  for (size_t k = 0; k < n; ++k) t[k] = {samples[k].second};
  double prev_extrap = samples.back().second;
  double last_extrap = prev_extrap;
  for (size_t j = 0; j + 1 < n; ++j) {
    double p = expected_order + static_cast<double>(j);
    for (size_t k = 0; k + j + 1 < n; ++k) {
      double r = samples[k].first / samples[k + 1].first;
      double f = std::pow(r, p);
      double hi = t[k + 1][j];
      double lo = t[k][j];
      t[k].push_back(hi + (hi - lo) / (f - 1.0));
    }
    prev_extrap = last_extrap;
    last_extrap = t[0][j + 1];
  }

  rep.limit = last_extrap;
  rep.residual = std::fabs(last_extrap - prev_extrap);
  double tol = rel_tol * (1.0 + std::fabs(last_extrap));
  rep.converged = rep.residual <= tol && std::isfinite(last_extrap);
  if (!rep.converged) {
    // distinguish a genuinely non-Cauchy tail from plain slow convergence
    double tail0 = std::fabs(samples[n - 2].second - samples[n - 3].second);
    double tail1 = std::fabs(samples[n - 1].second - samples[n - 2].second);
    rep.diagnostic = (tail1 >= tail0 && tail1 > tol) ? "tail not Cauchy: successive differences do not shrink"
                                                     : "extrapolation residual above tolerance";
  }
  return rep;
}

}  // namespace entroscope
