#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include "entroscope/probes.hpp"
#include "entroscope/richardson.hpp"
#include "entroscope/test_function.hpp"

namespace entroscope {

// Perturbing a probe mu by density 1 + t f and asking how fast the relative
// entropy grows in t is the core measurement here. Everything below reduces
// to integrals of phi(u) = (1+u) log(1+u) against a probe.

struct EntropyCurvePoint {
  double t = 0.0;
  double ent = 0.0;         // D((1+tf)mu || mu), unnormalized comparison
  double quad_error = 0.0;  // quadrature error estimate, not a statistical bound
};

// shared, thread-safe tally of nodes where 1 + tf fell in [-1e-12, 0] and the
// integrand was clamped to zero
struct ClampStats {
  std::atomic<std::int64_t> count{0};
};

struct QuadraticReport {
  ExtrapolationReport t_report;  // samples = (t, second-difference quotient)
  double value = 0.0;            // extrapolated t -> 0 limit
  double analytic = 0.0;         // derivative identity: integral of f^2 d mu
  double agreement = 0.0;        // |value - analytic|
  double f_mean = 0.0;           // integral of f d mu; perturbed mass is 1 + t * f_mean
  std::int64_t clamp_count = 0;
  std::int64_t evaluations = 0;
};

struct JointReport {
  ExtrapolationReport t_report;  // diagonal schedule t = s = h
  double value = 0.0;
  double analytic = 0.0;  // integral of f g d mu
  double agreement = 0.0;
  // off-diagonal spot check at (t, s) = (2h, h): the limit should not care
  // how (t, s) approaches zero, so the gap is a uniformity diagnostic
  double spot_value = 0.0;
  double spot_gap = 0.0;
  std::int64_t clamp_count = 0;
  std::int64_t evaluations = 0;
};

struct CoefficientEstimate {
  struct PerEps {
    double eps = 0.0;
    double value = 0.0;     // t-limit of the quadratic (or joint) quotient at this eps
    double analytic = 0.0;  // moment integral at this eps
    ExtrapolationReport t_report;
  };
  std::vector<PerEps> per_eps;
  double limit = 0.0;  // NaN unless eps_report.converged
  ExtrapolationReport eps_report;
  std::optional<double> analytic_limit;  // extrapolated moment path
  std::optional<double> agreement;
  std::int64_t clamp_count = 0;
  std::int64_t evaluations = 0;
};

struct SmoothCheckReport {
  struct PerPoint {
    Point x;
    CoefficientEstimate estimate;
    bool finite = false;
  };
  std::vector<PerPoint> per_point;
  bool verdict = false;
  std::string warning;  // set when the point list was empty (vacuous verdict)
};

// D(nu || mu) = integral of r log r d mu for nu = r mu; 0 log 0 := 0.
// A ratio below -1e-12 at a node aborts with a DomainError naming the node.
Estimate kl_divergence(const TestFunction& ratio, const ProbeFamily& p, const Point& x,
                       double eps, const QuadratureRule& rule);

// integral of (1+tf) log(1+tf) d mu_{x,eps}; requires |t| * f.sup_bound <= 1
Estimate entropy_response(const ProbeFamily& p, const Point& x, double eps,
                          const TestFunction& f, double t, const QuadratureRule& rule,
                          ClampStats* clamps = nullptr);

std::vector<EntropyCurvePoint> entropy_curve(const ProbeFamily& p, const Point& x, double eps,
                                             const TestFunction& f,
                                             const std::vector<double>& ts,
                                             const QuadratureRule& rule,
                                             ClampStats* clamps = nullptr);

// default geometric schedules: t_k = min(0.5/B, 0.25) 2^{-k}, k = 0..5, and
// eps_k = eps0 4^{-k}; joint schedules halve the start so (t+s) B <= 1 holds
std::vector<double> default_t_schedule(double sup_bound);
std::vector<double> default_joint_schedule(double bf, double bg);
std::vector<double> default_eps_schedule(double eps0 = 0.25, int count = 6);

// quadratic entropy coefficient I_{x,eps}(f): the t -> 0 limit of
// [Ent(t) - 2 Ent(0) + Ent(-t)] / t^2, integrated as one differenced pass
// per t (cancellation-safe), plus the derivative-identity moment path.
QuadraticReport quadratic_response(const ProbeFamily& p, const Point& x, double eps,
                                   const TestFunction& f, const std::vector<double>& t_schedule,
                                   const QuadratureRule& rule, double rel_tol = 1e-6);

// joint coefficient I_{x,eps}(f,g) along the diagonal t = s = h
JointReport joint_response(const ProbeFamily& p, const Point& x, double eps,
                           const TestFunction& f, const TestFunction& g,
                           const std::vector<double>& schedule, const QuadratureRule& rule,
                           double rel_tol = 1e-6);

// small-scale coefficient I_x(f) (or I_x(f,g)): per-eps coefficients
// extrapolated eps -> 0; limit is NaN when the eps tail does not converge
CoefficientEstimate small_scale_coefficient(const ProbeFamily& p, const Point& x,
                                            const TestFunction& f, const TestFunction* g,
                                            const std::vector<double>& eps_schedule,
                                            const QuadratureRule& rule, double rel_tol = 1e-6);

// entropy-smoothness: the small-scale limit exists and is finite at every
// supplied point; empty lists pass vacuously with a warning
SmoothCheckReport entropy_smooth_check(const ProbeFamily& p, const TestFunction& f,
                                       const std::vector<Point>& points,
                                       const std::vector<double>& eps_schedule,
                                       const QuadratureRule& rule, double rel_tol = 1e-6);

}  // namespace entroscope
