#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "entroscope/spaces.hpp"

namespace entroscope {

// A bounded measurable observable on a model space. sup_bound is the B in the
// |t| * B <= 1 domain restriction of the perturbed measures; it may be exact
// (user-supplied) or sampled-and-inflated (bound_estimated = true).
struct TestFunction {
  std::function<double(const Point&)> eval;
  int dim = 1;
  double sup_bound = 1.0;
  bool bound_estimated = false;
  std::string label;

  double operator()(const Point& y) const { return eval(y); }
};

inline TestFunction tf_make(int dim, double bound, std::string label,
                            std::function<double(const Point&)> f) {
  TestFunction t;
  t.eval = std::move(f);
  t.dim = dim;
  t.sup_bound = bound;
  t.label = std::move(label);
  return t;
}

inline TestFunction tf_constant(int dim, double c) {
  return tf_make(dim, std::fabs(c), "const(" + std::to_string(c) + ")", [c](const Point&) { return c; });
}

inline TestFunction tf_add(const TestFunction& f, const TestFunction& g) {
  TestFunction t;
  auto fe = f.eval, ge = g.eval;
  t.eval = [fe, ge](const Point& y) { return fe(y) + ge(y); };
  t.dim = f.dim;
  t.sup_bound = f.sup_bound + g.sup_bound;
  t.bound_estimated = f.bound_estimated || g.bound_estimated;
  t.label = "(" + f.label + "+" + g.label + ")";
  return t;
}

inline TestFunction tf_scale(const TestFunction& f, double a) {
  TestFunction t;
  auto fe = f.eval;
  t.eval = [fe, a](const Point& y) { return a * fe(y); };
  t.dim = f.dim;
  t.sup_bound = std::fabs(a) * f.sup_bound;
  t.bound_estimated = f.bound_estimated;
  t.label = std::to_string(a) + "*" + f.label;
  return t;
}

// f - f(x): the centering used before Gram assembly and product checks
inline TestFunction tf_center(const TestFunction& f, const Point& x) {
  double fx = f.eval(x);
  TestFunction t;
  auto fe = f.eval;
  t.eval = [fe, fx](const Point& y) { return fe(y) - fx; };
  t.dim = f.dim;
  t.sup_bound = f.sup_bound + std::fabs(fx);
  t.bound_estimated = f.bound_estimated;
  t.label = f.label + "-centered";
  return t;
}

// lift a factor observable to the product space (left block starts at 0,
// right block starts at left_dim)
inline TestFunction tf_lift(const TestFunction& f, int product_dim, int offset) {
  TestFunction t;
  auto fe = f.eval;
  int fdim = f.dim;
  t.eval = [fe, fdim, offset](const Point& y) {
    Point sub(y.begin() + offset, y.begin() + offset + fdim);
    return fe(sub);
  };
  t.dim = product_dim;
  t.sup_bound = f.sup_bound;
  t.bound_estimated = f.bound_estimated;
  t.label = f.label + "@+" + std::to_string(offset);
  return t;
}

// Smooth post-composition catalog. Each entry turns h and a TestFunction f
// into h(f) with a sound sup-bound.
struct SmoothComposer {
  std::string name;
  std::function<TestFunction(const TestFunction&)> apply;
};

inline double bump_profile(double u) {
  // C-infinity bump, 1 at 0, exactly 0 outside (-1, 1)
  if (std::fabs(u) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

inline SmoothComposer composer_unary(const std::string& name, double (*h)(double),
                                     std::function<double(double)> bound_of_bound) {
  SmoothComposer c;
  c.name = name;
  c.apply = [name, h, bound_of_bound](const TestFunction& f) {
    TestFunction t;
    auto fe = f.eval;
    t.eval = [fe, h](const Point& y) { return h(fe(y)); };
    t.dim = f.dim;
    t.sup_bound = bound_of_bound(f.sup_bound);
    t.bound_estimated = f.bound_estimated;
    t.label = name + "(" + f.label + ")";
    return t;
  };
  return c;
}

inline SmoothComposer composer_polynomial(const std::vector<double>& coeffs) {
  SmoothComposer c;
  c.name = "polynomial";
  c.apply = [coeffs](const TestFunction& f) {
    TestFunction t;
    auto fe = f.eval;
    t.eval = [fe, coeffs](const Point& y) {
      double v = fe(y), acc = 0.0, p = 1.0;
      for (double a : coeffs) {
        acc += a * p;
        p *= v;
      }
      return acc;
    };
    t.dim = f.dim;
    double b = 0.0, p = 1.0;
    for (double a : coeffs) {
      b += std::fabs(a) * p;
      p *= f.sup_bound;
    }
    t.sup_bound = b;
    t.bound_estimated = f.bound_estimated;
    t.label = "poly(" + f.label + ")";
    return t;
  };
  return c;
}

inline std::vector<SmoothComposer> smooth_composer_catalog() {
  std::vector<SmoothComposer> cat;
  cat.push_back(composer_unary("sin", [](double v) { return std::sin(v); },
                               [](double) { return 1.0; }));
  cat.push_back(composer_unary("cos", [](double v) { return std::cos(v); },
                               [](double) { return 1.0; }));
  cat.push_back(composer_unary("exp", [](double v) { return std::exp(v); },
                               [](double b) { return std::exp(b); }));
  cat.push_back(composer_unary("atan", [](double v) { return std::atan(v); },
                               [](double b) { return std::min(M_PI / 2.0, std::atan(b) + 0.0); }));
  cat.push_back(composer_unary("bump", [](double v) { return bump_profile(v); },
                               [](double) { return 1.0; }));
  cat.push_back(composer_polynomial({0.0, 1.0}));
  return cat;
}

}  // namespace entroscope
