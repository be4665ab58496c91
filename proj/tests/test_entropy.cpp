#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "entroscope/entropy.hpp"
#include "entroscope/probes.hpp"
#include "entroscope/spaces.hpp"
#include "entroscope/test_function.hpp"

using namespace entroscope;

namespace {

// oracle constants frozen from an independent high-precision quadrature
// (scipy.integrate.quad against the standard normal, abs tol 1e-13)
constexpr double kTiltedKl = 0.1416522679610306;       // E[r log r], r = max(1 + y/2, 0)
constexpr double kClampedResponse = 0.03239087075886655;  // E[phi(t f)], f = clip(y, +-4), t = 1/4

TestFunction clipped_coordinate(int dim, int axis, double cap) {
  return tf_make(dim, cap, "clip(y" + std::to_string(axis + 1) + ")",
                 [axis, cap](const Point& y) { return std::clamp(y[static_cast<size_t>(axis)], -cap, cap); });
}

// angular offset chart on the circle, centered at theta0 with value c there
TestFunction angle_chart(double theta0, double c) {
  return tf_make(1, M_PI + std::fabs(c), "angle-offset",
                 [theta0, c](const Point& y) { return wrap_to_pi(y[0] - theta0) + c; });
}

}  // namespace

TEST_CASE("kl divergence handles trivial, tilted, and negative ratios") {
  ProbePtr g = make_gaussian_probe(1);

  TestFunction one = tf_constant(1, 1.0);
  Estimate d0 = kl_divergence(one, *g, {0.0}, 1.0, g->native_rule());
  CHECK(std::fabs(d0.value) <= 1e-12);

  // r = max(1 + y/2, 0): vanishes below y = -2, so r log r has a kink there;
  // the adaptive engine resolves it, the frozen oracle pins the value
  TestFunction tilt = tf_make(1, 10.0, "tilted-ratio",
                              [](const Point& y) { return std::max(1.0 + 0.5 * y[0], 0.0); });
  Estimate d1 = kl_divergence(tilt, *g, {0.0}, 1.0, QuadratureRule::adaptive());
  CHECK(std::fabs(d1.value - kTiltedKl) <= 1e-8);
  CHECK(std::fabs(kTiltedKl - 0.125) <= 0.05);  // second-order Taylor bound

  TestFunction raw = tf_make(1, 10.0, "raw-tilt",
                             [](const Point& y) { return 1.0 + 0.5 * y[0]; });
  CHECK_THROWS_WITH_AS(kl_divergence(raw, *g, {0.0}, 1.0, g->native_rule()),
                       doctest::Contains("negative ratio"), DomainError);
}

TEST_CASE("entropy response matches closed forms and the taylor bound") {
  ProbePtr g = make_gaussian_probe(1);
  TestFunction f = clipped_coordinate(1, 0, 4.0);

  Estimate at0 = entropy_response(*g, {0.0}, 1.0, f, 0.0, g->native_rule());
  CHECK(at0.value == 0.0);

  // constant perturbation: the integrand is constant and mass is 1
  TestFunction c = tf_constant(1, 0.3);
  Estimate ec = entropy_response(*g, {0.5}, 0.2, c, 0.5, g->native_rule());
  CHECK(std::fabs(ec.value - 1.15 * std::log(1.15)) <= 1e-12);

  ClampStats clamps;
  Estimate e = entropy_response(*g, {0.0}, 1.0, f, 0.25, QuadratureRule::adaptive(), &clamps);
  CHECK(std::fabs(e.value - kClampedResponse) <= 1e-8);
  CHECK(std::fabs(e.value - 0.25 * 0.25 / 2.0) <= 0.25 * 0.25 * 0.25);

  // t at the boundary 1/B: nodes past the clip point hit 1 + tf = 0 exactly
  ClampStats boundary;
  Estimate eb = entropy_response(*g, {0.0}, 1.0, f, 0.25, g->native_rule(), &boundary);
  CHECK(std::isfinite(eb.value));
  CHECK(boundary.count.load() > 0);

  CHECK_THROWS_AS(entropy_response(*g, {0.0}, 1.0, f, 0.5, g->native_rule()), InputError);
}

TEST_CASE("response curve respects the perturbed-mass lower bound") {
  ProbePtr g = make_gaussian_probe(1);
  TestFunction c = tf_constant(1, 0.4);  // mean 0.4, so the comparison measure gains mass
  auto curve = entropy_curve(*g, {0.0}, 0.5, c, {0.5, 0.25, 0.1}, g->native_rule());
  REQUIRE(curve.size() == 3);
  for (const auto& pt : curve) {
    CHECK(pt.ent + 1e-12 >= pt.t * 0.4);  // D(nu||mu) >= nu(X) - 1
    CHECK(pt.quad_error >= 0.0);
  }

  TestFunction odd = tf_make(1, 1.0, "sin", [](const Point& y) { return std::sin(y[0]); });
  for (const auto& pt : entropy_curve(*g, {0.0}, 0.5, odd, {0.5, 0.25, 0.1}, g->native_rule())) {
    CHECK(pt.ent >= -1e-12);  // centered perturbation: plain KL nonnegativity
  }
}

TEST_CASE("quadratic response recovers second moments") {
  ProbePtr g = make_gaussian_probe(1);

  // constant function: quotient is the same scalar second difference at any scale
  TestFunction c = tf_constant(1, 0.7);
  QuadraticReport qc = quadratic_response(*g, {0.2}, 0.3, c, default_t_schedule(0.7),
                                          g->native_rule());
  CHECK(std::fabs(qc.value - 0.49) <= 1e-8);
  CHECK(std::fabs(qc.analytic - 0.49) <= 1e-12);
  CHECK(std::fabs(qc.f_mean - 0.7) <= 1e-12);

  TestFunction f = clipped_coordinate(1, 0, 4.0);
  for (double eps : {0.25, 0.1, 0.0625}) {
    QuadraticReport q = quadratic_response(*g, {0.0}, eps, f, default_t_schedule(4.0),
                                           g->native_rule());
    CHECK(std::fabs(q.analytic - eps) <= 1e-10);  // second moment of the probe
    CHECK(q.agreement <= 1e-8);
    CHECK(q.t_report.converged);
    CHECK(q.value >= -1e-12);
  }

  CHECK_THROWS_AS(quadratic_response(*g, {0.0}, 0.25, f, {0.5, 0.25, 0.125}, g->native_rule()),
                  InputError);  // t0 * B = 2 breaks the admissibility bound
}

TEST_CASE("small-scale coefficient recovers the squared center value") {
  ProbePtr g = make_gaussian_probe(1);
  // f(0) = 1, so the concentrating limit is 1 while per-eps values are 1 + eps-ish
  TestFunction f1 = tf_add(clipped_coordinate(1, 0, 4.0), tf_constant(1, 1.0));
  CoefficientEstimate ce =
      small_scale_coefficient(*g, {0.0}, f1, nullptr, default_eps_schedule(), g->native_rule());
  REQUIRE(ce.eps_report.converged);
  CHECK(std::fabs(ce.limit - 1.0) <= 1e-6);
  REQUIRE(ce.analytic_limit.has_value());
  CHECK(std::fabs(*ce.analytic_limit - 1.0) <= 1e-8);
  REQUIRE(ce.agreement.has_value());
  CHECK(*ce.agreement <= 1e-6);
  CHECK(ce.per_eps.size() == 6);

  // pure coordinate: per-eps value eps, limit 0
  TestFunction f0 = clipped_coordinate(1, 0, 4.0);
  CoefficientEstimate cz =
      small_scale_coefficient(*g, {0.0}, f0, nullptr, {0.1, 0.025, 0.00625}, g->native_rule());
  REQUIRE(cz.eps_report.converged);
  CHECK(std::fabs(cz.limit) <= 1e-8);

  // circle: an angular offset chart worth c at its center has coefficient c^2
  ProbePtr circle = make_circle_probe();
  TestFunction fc = angle_chart(2.0, 1.5);
  CoefficientEstimate cc =
      small_scale_coefficient(*circle, {2.0}, fc, nullptr, default_eps_schedule(), circle->native_rule());
  REQUIRE(cc.eps_report.converged);
  CHECK(std::fabs(cc.limit - 2.25) <= 1e-6);
}

TEST_CASE("joint response collapses on the diagonal and annihilates odd pairs") {
  ProbePtr g2 = make_gaussian_probe(2);
  Point x{0.0, 0.0};
  TestFunction f = clipped_coordinate(2, 0, 4.0);
  TestFunction g = clipped_coordinate(2, 1, 4.0);

  JointReport diag = joint_response(*g2, x, 0.5, f, f,
                                    default_joint_schedule(4.0, 4.0), g2->native_rule());
  QuadraticReport quad = quadratic_response(*g2, x, 0.5, f,
                                            default_joint_schedule(4.0, 4.0), g2->native_rule());
  CHECK(std::fabs(diag.value - quad.value) <= 1e-8);

  JointReport mixed = joint_response(*g2, x, 0.5, f, g,
                                     default_joint_schedule(4.0, 4.0), g2->native_rule());
  CHECK(std::fabs(mixed.value) <= 1e-8);
  CHECK(std::fabs(mixed.analytic) <= 1e-12);
  CHECK(mixed.spot_gap <= 1e-6);

  // odd third moment pair on one axis: E[f g] = 0 by symmetry
  ProbePtr g1 = make_gaussian_probe(1);
  TestFunction fy = clipped_coordinate(1, 0, 4.0);
  TestFunction gy = tf_make(1, 20.0, "y^2-1", [](const Point& y) {
    double v = std::clamp(y[0], -4.0, 4.0);
    return v * v - 1.0;
  });
  JointReport odd = joint_response(*g1, {0.0}, 1.0, fy, gy,
                                   default_joint_schedule(4.0, 20.0), g1->native_rule());
  CHECK(std::fabs(odd.analytic) <= 1e-12);
  CHECK(std::fabs(odd.value) <= 1e-8);

  JointReport swapped = joint_response(*g1, {0.0}, 1.0, gy, fy,
                                       default_joint_schedule(4.0, 20.0), g1->native_rule());
  CHECK(std::fabs(swapped.value - odd.value) <= 1e-12);

  CHECK_THROWS_AS(joint_response(*g1, {0.0}, 1.0, fy, gy, {0.2, 0.1, 0.05}, g1->native_rule()),
                  InputError);  // (t0 + s0) * 20 > 1
}

TEST_CASE("bilinear structure: polarization, scaling, nonnegativity") {
  ProbePtr g2 = make_gaussian_probe(2);
  Point x{0.3, -0.1};
  double eps = 0.4;
  TestFunction f = tf_make(2, 1.0, "sin1", [](const Point& y) { return std::sin(y[0]); });
  TestFunction g = tf_make(2, 1.0, "cos2", [](const Point& y) { return std::cos(y[1]); });

  auto sched = default_joint_schedule(f.sup_bound + g.sup_bound, f.sup_bound + g.sup_bound);
  JointReport fg = joint_response(*g2, x, eps, f, g, sched, g2->native_rule());
  QuadraticReport qf = quadratic_response(*g2, x, eps, f, sched, g2->native_rule());
  QuadraticReport qg = quadratic_response(*g2, x, eps, g, sched, g2->native_rule());
  QuadraticReport qsum = quadratic_response(*g2, x, eps, tf_add(f, g), sched, g2->native_rule());
  CHECK(std::fabs(fg.value - 0.5 * (qsum.value - qf.value - qg.value)) <= 1e-9);

  std::vector<double> base_sched = default_t_schedule(f.sup_bound);
  QuadraticReport base = quadratic_response(*g2, x, eps, f, base_sched, g2->native_rule());
  for (double alpha : {-2.0, -1.0, 0.5, 3.0}) {
    TestFunction af = tf_scale(f, alpha);
    // the shrunken admissible t-domain of alpha*f: match points t -> t/|alpha|
    std::vector<double> sched_a = base_sched;
    for (double& t : sched_a) t /= std::fabs(alpha);
    QuadraticReport qa = quadratic_response(*g2, x, eps, af, sched_a, g2->native_rule());
    CHECK(std::fabs(qa.value - alpha * alpha * base.value) <=
          1e-9 * (1.0 + alpha * alpha * std::fabs(base.value)));
    CHECK(qa.value >= -1e-12);
  }
}

TEST_CASE("analytic and numeric paths agree across probe families") {
  struct Entry {
    ProbePtr p;
    Point x;
    std::vector<TestFunction> fs;
  };
  std::vector<Entry> battery;
  battery.push_back({make_gaussian_probe(1), {0.4},
                     {tf_make(1, 1.0, "sin", [](const Point& y) { return std::sin(y[0]); }),
                      tf_make(1, 0.5, "y/(1+y^2)", [](const Point& y) { return y[0] / (1.0 + y[0] * y[0]); })}});
  battery.push_back({make_gaussian_probe(2), {0.0, 0.2},
                     {tf_make(2, 1.0, "sin*cos", [](const Point& y) { return std::sin(y[0]) * std::cos(y[1]); })}});
  battery.push_back({make_circle_probe(), {1.2},
                     {tf_make(1, 1.0, "sin", [](const Point& y) { return std::sin(y[0]); }),
                      tf_make(1, 1.0, "cos", [](const Point& y) { return std::cos(y[0]); })}});
  battery.push_back({make_product_probe(make_gaussian_probe(1), make_circle_probe()), {0.1, 2.0},
                     {tf_make(2, 1.0, "sin*cos", [](const Point& y) { return std::sin(y[0]) * std::cos(y[1]); })}});
  battery.push_back({make_mollifier_probe(1, MollifierKernel::CosineBump), {0.5},
                     {tf_make(1, 1.0, "sin", [](const Point& y) { return std::sin(y[0]); })}});

  for (const auto& entry : battery) {
    for (const auto& f : entry.fs) {
      for (double eps : {0.25, 0.0625}) {
        QuadraticReport q = quadratic_response(*entry.p, entry.x, eps, f,
                                               default_t_schedule(f.sup_bound),
                                               entry.p->native_rule());
        INFO(entry.p->kind_name(), " ", f.label, " eps=", eps);
        CHECK(q.t_report.converged);
        CHECK(q.agreement <= 1e-6 * (1.0 + std::fabs(q.analytic)));
      }
    }
  }
}

TEST_CASE("pushforward transport preserves the response curve") {
  ProbePtr base = make_gaussian_probe(1);
  TestFunction phi_obs = tf_make(1, 1.0, "sin", [](const Point& w) { return std::sin(w[0]); });

  auto run = [&](const MapSpec& map, const Point& x) {
    ProbePtr pf = make_pushforward_probe(base, map, {{-1.5}, {-0.2}, {0.6}, {1.8}});
    Point z = map.forward(x);
    TestFunction pulled = tf_make(1, 1.0, "sin(F)", [&map](const Point& y) {
      return std::sin(map.forward(y)[0]);
    });
    for (double t : {0.5, 0.25, 0.1, 0.05}) {
      // density route on the image side vs native nodes on the base side:
      // the two sides share no quadrature grid
      Estimate lhs = entropy_response(*pf, z, 0.3, phi_obs, t, QuadratureRule::adaptive());
      Estimate rhs = entropy_response(*base, x, 0.3, pulled, t, base->native_rule());
      CHECK(std::fabs(lhs.value - rhs.value) <= 1e-8);
    }
    QuadraticReport ql = quadratic_response(*pf, z, 0.3, phi_obs, default_t_schedule(1.0),
                                            QuadratureRule::adaptive());
    QuadraticReport qr = quadratic_response(*base, x, 0.3, pulled, default_t_schedule(1.0),
                                            base->native_rule());
    CHECK(std::fabs(ql.value - qr.value) <= 1e-8);
  };

  MapSpec affine;
  affine.forward = [](const Point& z) { return Point{2.0 * z[0] + 1.0}; };
  affine.inverse = [](const Point& w) { return Point{(w[0] - 1.0) / 2.0}; };
  run(affine, {0.4});

  MapSpec cubic;
  cubic.forward = [](const Point& z) { return Point{z[0] + z[0] * z[0] * z[0] / 10.0}; };
  cubic.inverse = [](const Point& w) {
    double z = w[0];
    for (int i = 0; i < 60; ++i) {
      double fz = z + z * z * z / 10.0 - w[0];
      z -= fz / (1.0 + 0.3 * z * z);
    }
    return Point{z};
  };
  run(cubic, {0.2});
}

TEST_CASE("entropy smoothness verdicts") {
  ProbePtr g = make_gaussian_probe(1);
  TestFunction f = tf_make(1, 2.0, "smooth", [](const Point& y) {
    double v = std::clamp(y[0], -4.0, 4.0);
    return std::sin(v) + 0.5;
  });
  SmoothCheckReport rep = entropy_smooth_check(*g, f, {{0.0}, {0.7}, {-1.3}},
                                               default_eps_schedule(), g->native_rule());
  CHECK(rep.verdict);
  REQUIRE(rep.per_point.size() == 3);
  for (const auto& pp : rep.per_point) {
    CHECK(pp.finite);
    double fx = f.eval(pp.x);
    CHECK(std::fabs(pp.estimate.limit - fx * fx) <= 1e-5);
  }

  SmoothCheckReport empty = entropy_smooth_check(*g, f, {}, default_eps_schedule(), g->native_rule());
  CHECK(empty.verdict);
  CHECK(!empty.warning.empty());
}
