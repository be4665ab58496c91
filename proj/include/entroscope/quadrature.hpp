#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace entroscope {

enum class RuleKind { GaussHermite, PeriodicTrapezoid, Adaptive, MonteCarlo };

struct QuadratureRule {
  RuleKind kind = RuleKind::GaussHermite;
  int order = 64;      // Gauss-Hermite points per axis
  int nodes = 0;       // periodic trapezoid; 0 = auto-scale with eps
  double rel_tol = 1e-10;
  double abs_tol = 1e-13;
  int max_depth = 28;  // adaptive
  std::int64_t samples = 200000;
  std::uint64_t mc_seed = 0;  // Monte Carlo; a rule plus this seed fixes the node set

  static QuadratureRule gauss_hermite(int order = 64);
  static QuadratureRule periodic_trapezoid(int nodes = 0);
  static QuadratureRule adaptive(double rel_tol = 1e-10, double abs_tol = 1e-13, int max_depth = 28);
  static QuadratureRule monte_carlo(std::int64_t samples, std::uint64_t seed);

  std::string method_name() const;
};

struct Estimate {
  double value = 0.0;
  double error = 0.0;  // >= 0; standard error of the mean for Monte Carlo
  std::string method;
  std::int64_t evaluations = 0;
  bool converged = true;
};

struct Rule1d {
  std::vector<double> x;
  std::vector<double> w;
};

// Gauss-Hermite (weight e^{-x^2}, sum of weights = sqrt(pi)); cached per order.
const Rule1d& gauss_hermite_rule(int order);

// Gauss-Legendre on [-1, 1] (sum of weights = 2); cached per order.
const Rule1d& gauss_legendre_rule(int order);

// Adaptive Simpson on [a, b]; flags converged = false when the depth budget
// runs out before local tolerances are met (never silently).
Estimate adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                          double rel_tol, double abs_tol, int max_depth);

// Odd Monte Carlo chunk size would break schedule independence; fixed here.
inline constexpr std::int64_t kMcChunk = 4096;

}  // namespace entroscope
