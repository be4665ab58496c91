#include "entroscope/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace entroscope {

QuadratureRule QuadratureRule::gauss_hermite(int order) {
  QuadratureRule r;
  r.kind = RuleKind::GaussHermite;
  r.order = order;
  return r;
}

QuadratureRule QuadratureRule::periodic_trapezoid(int nodes) {
  QuadratureRule r;
  r.kind = RuleKind::PeriodicTrapezoid;
  r.nodes = nodes;
  return r;
}

QuadratureRule QuadratureRule::adaptive(double rel_tol, double abs_tol, int max_depth) {
  QuadratureRule r;
  r.kind = RuleKind::Adaptive;
  r.rel_tol = rel_tol;
  r.abs_tol = abs_tol;
  r.max_depth = max_depth;
  return r;
}

QuadratureRule QuadratureRule::monte_carlo(std::int64_t samples, std::uint64_t seed) {
  QuadratureRule r;
  r.kind = RuleKind::MonteCarlo;
  r.samples = samples;
  r.mc_seed = seed;
  return r;
}

std::string QuadratureRule::method_name() const {
  switch (kind) {
    case RuleKind::GaussHermite: return "gauss-hermite-tensor(" + std::to_string(order) + ")";
    case RuleKind::PeriodicTrapezoid: return "periodic-trapezoid(" + std::to_string(nodes) + ")";
    case RuleKind::Adaptive: return "adaptive";
    case RuleKind::MonteCarlo: return "monte-carlo(" + std::to_string(samples) + ")";
  }
  return "unknown";
}

namespace {

// Orthonormal-polynomial evaluation; roots located by interlacing bisection
// (roots of degree n-1 separate roots of degree n), then Newton polish.
// Weights via the Christoffel function w_i = 1 / sum_k p_k(x_i)^2.

double hermite_orthonormal(int n, double x, double* deriv = nullptr) {
  // weight e^{-x^2}: h_0 = pi^{-1/4}, h_{k+1} = x*sqrt(2/(k+1))*h_k - sqrt(k/(k+1))*h_{k-1}
  double hkm1 = 0.0;
  double hk = std::pow(M_PI, -0.25);
  for (int k = 0; k < n; ++k) {
    double hkp1 = x * std::sqrt(2.0 / (k + 1)) * hk - std::sqrt(static_cast<double>(k) / (k + 1)) * hkm1;
    hkm1 = hk;
    hk = hkp1;
  }
  if (deriv) *deriv = std::sqrt(2.0 * n) * hkm1;
  return hk;
}

double legendre_orthonormal(int n, double x, double* deriv = nullptr) {
  // weight 1 on [-1,1]: P recurrence then normalize each degree by sqrt((2k+1)/2)
  double pkm1 = 0.0, pk = 1.0;  // un-normalized P_k
  for (int k = 0; k < n; ++k) {
    double pkp1 = ((2.0 * k + 1.0) * x * pk - k * pkm1) / (k + 1.0);
    pkm1 = pk;
    pk = pkp1;
  }
  if (deriv) {
    // (1-x^2) P_n'(x) = n (P_{n-1}(x) - x P_n(x))
    double d = (std::fabs(1.0 - x * x) > 1e-300) ? n * (pkm1 - x * pk) / (1.0 - x * x) : 0.0;
    *deriv = d * std::sqrt((2.0 * n + 1.0) / 2.0);
  }
  return pk * std::sqrt((2.0 * n + 1.0) / 2.0);
}

using PolyEval = double (*)(int, double, double*);

std::vector<double> roots_by_interlacing(int order, PolyEval eval, double lo_bound, double hi_bound) {
  std::vector<double> prev;  // roots of degree n-1
  for (int n = 1; n <= order; ++n) {
    std::vector<double> brackets;
    brackets.push_back(lo_bound);
    for (double r : prev) brackets.push_back(r);
    brackets.push_back(hi_bound);
    std::vector<double> roots;
    roots.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      double a = brackets[static_cast<size_t>(i)];
      double b = brackets[static_cast<size_t>(i) + 1];
      double fa = eval(n, a, nullptr);
      double fb = eval(n, b, nullptr);
      if (fa == 0.0) { roots.push_back(a); continue; }
      if (fb == 0.0) { roots.push_back(b); continue; }
      // bisection to locate, Newton to finish
      double x = 0.5 * (a + b);
      for (int it = 0; it < 64; ++it) {
        double fx = eval(n, x, nullptr);
        if (fx == 0.0) break;
        if ((fx > 0.0) == (fa > 0.0)) { a = x; fa = fx; } else { b = x; }
        x = 0.5 * (a + b);
        if (b - a < 1e-12 * (std::fabs(a) + std::fabs(b) + 1.0)) break;
      }
      // this close to the root Newton is safe unguarded and converges to
      // machine precision in a couple of steps
      for (int it = 0; it < 6; ++it) {
        double d;
        double fx = eval(n, x, &d);
        if (d == 0.0) break;
        double step = fx / d;
        x -= step;
        if (std::fabs(step) < 4e-16 * (1.0 + std::fabs(x))) break;
      }
      roots.push_back(x);
    }
    prev = std::move(roots);
  }
  // the rules are symmetric by theory; enforce it exactly
  size_t n = prev.size();
  for (size_t i = 0; i < n / 2; ++i) {
    double m = 0.5 * (prev[i] - prev[n - 1 - i]);
    prev[i] = m;
    prev[n - 1 - i] = -m;
  }
  if (n % 2 == 1) prev[n / 2] = 0.0;
  return prev;
}

Rule1d build_gauss_hermite(int order) {
  double bound = std::sqrt(2.0 * order + 1.0) + 2.0;
  std::vector<double> roots = roots_by_interlacing(order, &hermite_orthonormal, -bound, bound);
  Rule1d rule;
  rule.x = roots;
  rule.w.resize(roots.size());
  for (size_t i = 0; i < roots.size(); ++i) {
    double x = roots[i];
    double hkm1 = 0.0, hk = std::pow(M_PI, -0.25), sum = hk * hk;
    for (int k = 0; k < order - 1; ++k) {
      double hkp1 = x * std::sqrt(2.0 / (k + 1)) * hk - std::sqrt(static_cast<double>(k) / (k + 1)) * hkm1;
      hkm1 = hk;
      hk = hkp1;
      sum += hk * hk;
    }
    rule.w[i] = 1.0 / sum;
  }
  return rule;
}

Rule1d build_gauss_legendre(int order) {
  std::vector<double> roots = roots_by_interlacing(order, &legendre_orthonormal, -1.0, 1.0);
  Rule1d rule;
  rule.x = roots;
  rule.w.resize(roots.size());
  for (size_t i = 0; i < roots.size(); ++i) {
    double x = roots[i];
    double pkm1 = 0.0, pk = 1.0, sum = 0.5;  // p_0^2 = 1/2
    for (int k = 0; k < order - 1; ++k) {
      double pkp1 = ((2.0 * k + 1.0) * x * pk - k * pkm1) / (k + 1.0);
      pkm1 = pk;
      pk = pkp1;
      double pn = pk * std::sqrt((2.0 * (k + 1) + 1.0) / 2.0);
      sum += pn * pn;
    }
    rule.w[i] = 1.0 / sum;
  }
  return rule;
}

template <Rule1d (*Builder)(int)>
const Rule1d& cached_rule(int order) {
  static std::map<int, Rule1d> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, Builder(order)).first;
  return it->second;
}

}  // namespace

const Rule1d& gauss_hermite_rule(int order) {
  if (order < 1 || order > 256) throw std::invalid_argument("gauss_hermite_rule: order out of range [1,256]");
  return cached_rule<&build_gauss_hermite>(order);
}

const Rule1d& gauss_legendre_rule(int order) {
  if (order < 1 || order > 256) throw std::invalid_argument("gauss_legendre_rule: order out of range [1,256]");
  return cached_rule<&build_gauss_legendre>(order);
}

namespace {

struct SimpsonState {
  const std::function<double(double)>* f;
  double rel_tol;
  int max_depth;
  std::int64_t evals = 0;
  bool converged = true;
};

double simpson_segment(double fa, double fm, double fb, double h6) { return h6 * (fa + 4.0 * fm + fb); }

double adaptive_step(SimpsonState& st, double a, double b, double fa, double fm, double fb, double whole,
                     double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = (*st.f)(lm), frm = (*st.f)(rm);
  st.evals += 2;
  double left = simpson_segment(fa, flm, fm, (m - a) / 6.0);
  double right = simpson_segment(fm, frm, fb, (b - m) / 6.0);
  double delta = left + right - whole;
  if (std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth >= st.max_depth) {
    st.converged = false;
    return left + right + delta / 15.0;
  }
  return adaptive_step(st, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         adaptive_step(st, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

Estimate adaptive_simpson(const std::function<double(double)>& f, double a, double b, double rel_tol,
                          double abs_tol, int max_depth) {
  SimpsonState st{&f, rel_tol, max_depth};
  // seed with a uniform partition: a feature living between the first few
  // sample points of a single top-level interval would otherwise be accepted
  // away as zero (integrands against localized densities do exactly that)
  constexpr int kSeedPanels = 32;
  double h = (b - a) / kSeedPanels;
  double value = 0.0;
  double fl = f(a);
  st.evals = 1;
  for (int i = 0; i < kSeedPanels; ++i) {
    double pa = a + i * h;
    double pb = (i + 1 == kSeedPanels) ? b : a + (i + 1) * h;
    double fm = f(0.5 * (pa + pb));
    double fr = f(pb);
    st.evals += 2;
    double whole = simpson_segment(fl, fm, fr, (pb - pa) / 6.0);
    double tol = std::max(abs_tol / kSeedPanels, rel_tol * std::fabs(whole));
    value += adaptive_step(st, pa, pb, fl, fm, fr, whole, tol, 0);
    fl = fr;
  }
  Estimate e;
  e.value = value;
  e.error = std::max(abs_tol, rel_tol * std::fabs(value));
  e.method = "adaptive-simpson";
  e.evaluations = st.evals;
  e.converged = st.converged;
  return e;
}

}  // namespace entroscope
