#include "entroscope/entropy.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

namespace entroscope {

namespace {

std::string describe_node(const Point& y) {
  std::string s = "(";
  char buf[32];
  for (size_t i = 0; i < y.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6g", y[i]);
    if (i) s += ", ";
    s += buf;
  }
  s += ")";
  return s;
}

// phi(u) = (1+u) log(1+u), the integrand kernel shared by every response.
// Values of 1+u in [-1e-12, 0] are quadrature dust on the boundary of the
// admissible perturbations; they clamp to the continuous extension 0.
double phi(double u, ClampStats* clamps, const Point& y) {
  double v = 1.0 + u;
  if (v > 0.0) return v * std::log1p(u);
  if (v >= -1e-12) {
    if (clamps) clamps->count.fetch_add(1, std::memory_order_relaxed);
    return 0.0;
  }
  throw DomainError("entropy integrand: 1 + t*f = " + std::to_string(v) +
                    " < -1e-12 at node " + describe_node(y));
}

void check_schedule(const std::vector<double>& sched, const char* what) {
  if (sched.size() < 3) throw InputError(std::string(what) + ": need at least 3 schedule points");
  for (size_t i = 0; i < sched.size(); ++i) {
    if (!(sched[i] > 0.0)) throw InputError(std::string(what) + ": schedule values must be positive");
    if (i && !(sched[i] < sched[i - 1]))
      throw InputError(std::string(what) + ": schedule must be strictly decreasing");
  }
}

}  // namespace

Estimate kl_divergence(const TestFunction& ratio, const ProbeFamily& p, const Point& x,
                       double eps, const QuadratureRule& rule) {
  auto g = [&ratio](const Point& y) {
    double r = ratio.eval(y);
    if (r <= 0.0) {
      if (r < -1e-12)
        throw DomainError("kl divergence: negative ratio r = " + std::to_string(r) +
                          " at node " + describe_node(y));
      return 0.0;  // 0 log 0 := 0
    }
    return r * std::log(r);
  };
  return integrate(p, x, eps, g, rule);
}

Estimate entropy_response(const ProbeFamily& p, const Point& x, double eps,
                          const TestFunction& f, double t, const QuadratureRule& rule,
                          ClampStats* clamps) {
  if (std::fabs(t) * f.sup_bound > 1.0 + 1e-12)
    throw InputError("entropy response: |t| * sup bound = " +
                     std::to_string(std::fabs(t) * f.sup_bound) + " exceeds 1");
  auto g = [&f, t, clamps](const Point& y) { return phi(t * f.eval(y), clamps, y); };
  return integrate(p, x, eps, g, rule);
}

std::vector<EntropyCurvePoint> entropy_curve(const ProbeFamily& p, const Point& x, double eps,
                                             const TestFunction& f, const std::vector<double>& ts,
                                             const QuadratureRule& rule, ClampStats* clamps) {
  std::vector<EntropyCurvePoint> out;
  out.reserve(ts.size());
  for (double t : ts) {
    Estimate e = entropy_response(p, x, eps, f, t, rule, clamps);
    out.push_back({t, e.value, e.error});
  }
  return out;
}

std::vector<double> default_t_schedule(double sup_bound) {
  double t0 = std::min(0.5 / std::max(sup_bound, 1e-300), 0.25);
  std::vector<double> ts;
  for (int k = 0; k < 6; ++k) ts.push_back(t0 * std::pow(2.0, -k));
  return ts;
}

std::vector<double> default_joint_schedule(double bf, double bg) {
  double b = std::max(std::max(bf, bg), 1e-300);
  double t0 = std::min(0.25 / b, 0.125);
  std::vector<double> ts;
  for (int k = 0; k < 6; ++k) ts.push_back(t0 * std::pow(2.0, -k));
  return ts;
}

std::vector<double> default_eps_schedule(double eps0, int count) {
  std::vector<double> es;
  for (int k = 0; k < count; ++k) es.push_back(eps0 * std::pow(4.0, -k));
  return es;
}

QuadraticReport quadratic_response(const ProbeFamily& p, const Point& x, double eps,
                                   const TestFunction& f, const std::vector<double>& t_schedule,
                                   const QuadratureRule& rule, double rel_tol) {
  check_schedule(t_schedule, "quadratic response");
  if (t_schedule.front() * f.sup_bound > 1.0 + 1e-12)
    throw InputError("quadratic response: t0 * sup bound exceeds 1");

  QuadraticReport rep;
  ClampStats clamps;
  std::vector<std::pair<double, double>> samples;
  for (double t : t_schedule) {
    // one differenced pass per t: in exact arithmetic this equals
    // [Ent(t) - 2 Ent(0) + Ent(-t)] / t^2, but it never subtracts two
    // separately integrated near-equal numbers
    auto g = [&f, t, &clamps](const Point& y) {
      double u = t * f.eval(y);
      return (phi(u, &clamps, y) + phi(-u, &clamps, y)) / (t * t);
    };
    Estimate e = integrate(p, x, eps, g, rule);
    samples.emplace_back(t, e.value);
    rep.evaluations += e.evaluations;
  }
  rep.t_report = richardson_limit(samples, 1.0, rel_tol);
  rep.value = rep.t_report.limit;

  Estimate moment = integrate(p, x, eps, [&f](const Point& y) {
    double v = f.eval(y);
    return v * v;
  }, rule);
  Estimate mean = integrate(p, x, eps, [&f](const Point& y) { return f.eval(y); }, rule);
  rep.analytic = moment.value;
  rep.f_mean = mean.value;
  rep.agreement = std::fabs(rep.value - rep.analytic);
  rep.evaluations += moment.evaluations + mean.evaluations;
  rep.clamp_count = clamps.count.load();
  return rep;
}

JointReport joint_response(const ProbeFamily& p, const Point& x, double eps,
                           const TestFunction& f, const TestFunction& g,
                           const std::vector<double>& schedule, const QuadratureRule& rule,
                           double rel_tol) {
  check_schedule(schedule, "joint response");
  double b = std::max(f.sup_bound, g.sup_bound);
  if (2.0 * schedule.front() * b > 1.0 + 1e-12)
    throw InputError("joint response: (t0 + s0) * sup bound exceeds 1");

  JointReport rep;
  ClampStats clamps;
  auto quotient = [&](double t, double s) {
    auto integrand = [&, t, s](const Point& y) {
      double fv = f.eval(y), gv = g.eval(y);
      return (phi(t * fv + s * gv, &clamps, y) - phi(t * fv, &clamps, y) -
              phi(s * gv, &clamps, y)) /
             (t * s);
    };
    return integrate(p, x, eps, integrand, rule);
  };

  std::vector<std::pair<double, double>> samples;
  for (double h : schedule) {
    Estimate e = quotient(h, h);
    samples.emplace_back(h, e.value);
    rep.evaluations += e.evaluations;
  }
  rep.t_report = richardson_limit(samples, 1.0, rel_tol);
  rep.value = rep.t_report.limit;

  // the limit must not depend on the approach path; probe one off-diagonal ray
  double hs = schedule.back();
  Estimate spot = quotient(2.0 * hs, hs);
  rep.spot_value = spot.value;
  rep.spot_gap = std::fabs(spot.value - rep.value);
  rep.evaluations += spot.evaluations;

  Estimate moment = integrate(p, x, eps, [&f, &g](const Point& y) {
    return f.eval(y) * g.eval(y);
  }, rule);
  rep.analytic = moment.value;
  rep.agreement = std::fabs(rep.value - rep.analytic);
  rep.evaluations += moment.evaluations;
  rep.clamp_count = clamps.count.load();
  return rep;
}

CoefficientEstimate small_scale_coefficient(const ProbeFamily& p, const Point& x,
                                            const TestFunction& f, const TestFunction* g,
                                            const std::vector<double>& eps_schedule,
                                            const QuadratureRule& rule, double rel_tol) {
  check_schedule(eps_schedule, "small-scale coefficient");
  CoefficientEstimate out;
  std::vector<std::pair<double, double>> num_samples, ana_samples;
  for (double eps : eps_schedule) {
    CoefficientEstimate::PerEps pe;
    pe.eps = eps;
    if (g) {
      JointReport jr = joint_response(p, x, eps, f, *g,
                                      default_joint_schedule(f.sup_bound, g->sup_bound), rule,
                                      rel_tol);
      pe.value = jr.value;
      pe.analytic = jr.analytic;
      pe.t_report = jr.t_report;
      out.clamp_count += jr.clamp_count;
      out.evaluations += jr.evaluations;
    } else {
      QuadraticReport qr =
          quadratic_response(p, x, eps, f, default_t_schedule(f.sup_bound), rule, rel_tol);
      pe.value = qr.value;
      pe.analytic = qr.analytic;
      pe.t_report = qr.t_report;
      out.clamp_count += qr.clamp_count;
      out.evaluations += qr.evaluations;
    }
    num_samples.emplace_back(eps, pe.value);
    ana_samples.emplace_back(eps, pe.analytic);
    out.per_eps.push_back(std::move(pe));
  }

  out.eps_report = richardson_limit(num_samples, 1.0, rel_tol);
  out.limit = out.eps_report.converged ? out.eps_report.limit
                                       : std::numeric_limits<double>::quiet_NaN();
  ExtrapolationReport ana = richardson_limit(ana_samples, 1.0, rel_tol);
  if (ana.converged) {
    out.analytic_limit = ana.limit;
    if (std::isfinite(out.limit)) out.agreement = std::fabs(out.limit - *out.analytic_limit);
  }
  return out;
}

SmoothCheckReport entropy_smooth_check(const ProbeFamily& p, const TestFunction& f,
                                       const std::vector<Point>& points,
                                       const std::vector<double>& eps_schedule,
                                       const QuadratureRule& rule, double rel_tol) {
  SmoothCheckReport rep;
  if (points.empty()) {
    rep.verdict = true;
    rep.warning = "no points supplied; the verdict is vacuous";
    return rep;
  }
  rep.verdict = true;
  for (const Point& x : points) {
    SmoothCheckReport::PerPoint pp;
    pp.x = x;
    pp.estimate = small_scale_coefficient(p, x, f, nullptr, eps_schedule, rule, rel_tol);
    pp.finite = pp.estimate.eps_report.converged && std::isfinite(pp.estimate.limit);
    rep.verdict = rep.verdict && pp.finite;
    rep.per_point.push_back(std::move(pp));
  }
  return rep;
}

}  // namespace entroscope
