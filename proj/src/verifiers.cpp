#include "entroscope/verifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "entroscope/parallel.hpp"

namespace entroscope {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double radical_inverse(int base, int index) {
  double inv = 1.0 / base, frac = inv, v = 0.0;
  while (index > 0) {
    v += (index % base) * frac;
    index /= base;
    frac *= inv;
  }
  return v;
}

struct PairIndex {
  int i, j;
};

std::vector<PairIndex> upper_triangle(int k) {
  std::vector<PairIndex> pairs;
  pairs.reserve(static_cast<size_t>(k) * (k + 1) / 2);
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j) pairs.push_back({i, j});
  return pairs;
}

// mirror the upper triangle, attach eigen/PD verdict. PD is withheld when
// any entry failed to converge (a NaN would otherwise poison the verdict).
void assemble(InformationGram& g, int k, const std::vector<double>& upper, double margin_factor) {
  g.matrix = Matrix(k, k);
  auto pairs = upper_triangle(k);
  g.reliable = true;
  for (size_t idx = 0; idx < pairs.size(); ++idx) {
    double v = upper[idx];
    if (!std::isfinite(v)) g.reliable = false;
    g.matrix(pairs[idx].i, pairs[idx].j) = v;
    g.matrix(pairs[idx].j, pairs[idx].i) = v;
  }
  if (!g.reliable) {
    g.min_eig = kNan;
    g.pd_margin = kNan;
    g.pd.reset();
    return;
  }
  g.min_eig = k > 0 ? min_eigenvalue(g.matrix) : 0.0;
  double diag_scale = 0.0;
  for (int i = 0; i < k; ++i) diag_scale += std::fabs(g.matrix(i, i));
  diag_scale = k > 0 ? diag_scale / k : 0.0;
  g.pd_margin = margin_factor * diag_scale;
  g.pd = k > 0 && g.min_eig > g.pd_margin;
}

std::vector<std::string> collect_labels(const std::vector<TestFunction>& funcs) {
  std::vector<std::string> labels;
  labels.reserve(funcs.size());
  for (const auto& f : funcs) labels.push_back(f.label);
  return labels;
}

// re-extrapolate an already computed per-eps path with every value divided
// by its scale; no new integrals are spent
CoefficientEstimate normalize_by_scale(const CoefficientEstimate& raw, double rel_tol) {
  CoefficientEstimate out = raw;
  std::vector<std::pair<double, double>> num, ana;
  for (auto& pe : out.per_eps) {
    pe.value /= pe.eps;
    pe.analytic /= pe.eps;
    num.push_back({pe.eps, pe.value});
    ana.push_back({pe.eps, pe.analytic});
  }
  out.eps_report = richardson_limit(num, 1.0, rel_tol);
  out.limit = out.eps_report.converged ? out.eps_report.limit : kNan;
  ExtrapolationReport ar = richardson_limit(ana, 1.0, rel_tol);
  if (ar.converged) {
    out.analytic_limit = ar.limit;
    if (out.eps_report.converged) out.agreement = std::fabs(*out.analytic_limit - out.limit);
  } else {
    out.analytic_limit.reset();
    out.agreement.reset();
  }
  return out;
}

std::vector<double> eps_schedule_of(const GramOptions& opt) {
  return opt.eps_schedule.empty() ? default_eps_schedule() : opt.eps_schedule;
}

// wrap a single fixed-scale response in the per-eps container so at-scale
// Grams carry the same diagnostics shape as extrapolated ones
CoefficientEstimate at_scale_entry(const ProbeFamily& p, const Point& x, const TestFunction& f,
                                   const TestFunction* g, double eps, const QuadratureRule& rule,
                                   double rel_tol) {
  CoefficientEstimate est;
  CoefficientEstimate::PerEps pe;
  pe.eps = eps;
  if (g == nullptr) {
    QuadraticReport r = quadratic_response(p, x, eps, f, default_t_schedule(f.sup_bound), rule, rel_tol);
    pe.value = r.value;
    pe.analytic = r.analytic;
    pe.t_report = r.t_report;
    est.clamp_count = r.clamp_count;
    est.evaluations = r.evaluations;
  } else {
    JointReport r = joint_response(p, x, eps, f, *g, default_joint_schedule(f.sup_bound, g->sup_bound),
                                   rule, rel_tol);
    pe.value = r.value;
    pe.analytic = r.analytic;
    pe.t_report = r.t_report;
    est.clamp_count = r.clamp_count;
    est.evaluations = r.evaluations;
  }
  est.limit = pe.t_report.converged ? pe.value : kNan;
  est.eps_report.converged = pe.t_report.converged;
  est.eps_report.limit = pe.value;
  est.eps_report.diagnostic = "single fixed scale, no extrapolation";
  est.analytic_limit = pe.analytic;
  est.agreement = std::fabs(pe.analytic - pe.value);
  est.per_eps.push_back(std::move(pe));
  return est;
}

InformationGram gram_common(const ProbeFamily& p, const Point& x,
                            const std::vector<TestFunction>& funcs, const std::string& basis,
                            double eps, const GramOptions& opt,
                            const std::function<CoefficientEstimate(int, int)>& compute) {
  if (funcs.empty()) throw InputError("gram: need at least one function");
  p.validate_center(x);
  InformationGram g;
  g.x = x;
  g.labels = collect_labels(funcs);
  g.basis = basis;
  g.eps = eps;
  int k = static_cast<int>(funcs.size());
  auto pairs = upper_triangle(k);
  g.entries.resize(pairs.size());
  parallel_for(pairs.size(), [&](size_t idx) {
    g.entries[idx] = compute(pairs[idx].i, pairs[idx].j);
  });
  std::vector<double> upper(pairs.size());
  for (size_t idx = 0; idx < pairs.size(); ++idx) upper[idx] = g.entries[idx].limit;
  assemble(g, k, upper, opt.pd_margin_factor);
  return g;
}

Point nudge(const Point& x, const Point& toward, double factor) {
  Point y = x;
  for (size_t i = 0; i < x.size(); ++i) y[i] += factor * (toward[i] - x[i]);
  return y;
}

// Neville polynomial extrapolation of (h_i, v_i) to h = 0
double extrapolate_to_zero(const std::vector<double>& h, std::vector<double> v) {
  size_t n = h.size();
  for (size_t m = 1; m < n; ++m)
    for (size_t i = 0; i + m < n; ++i)
      v[i] = (h[i] * v[i + 1] - h[i + m] * v[i]) / (h[i] - h[i + m]);
  return v[0];
}

TestFunction compose_with_map(const TestFunction& g, const MapSpec& map, int domain_dim) {
  auto ge = g.eval;
  auto fwd = map.forward;
  return tf_make(domain_dim, g.sup_bound, g.label + ".F",
                 [ge, fwd](const Point& y) { return ge(fwd(y)); });
}

}  // namespace

const CoefficientEstimate& InformationGram::entry(int i, int j) const {
  if (i > j) std::swap(i, j);
  int k = static_cast<int>(labels.size());
  size_t idx = static_cast<size_t>(i) * k - static_cast<size_t>(i) * (i - 1) / 2 + (j - i);
  return entries[idx];
}

InformationGram gram_matrix(const ProbeFamily& p, const Point& x,
                            const std::vector<TestFunction>& funcs, const QuadratureRule& rule,
                            const GramOptions& opt) {
  auto sched = eps_schedule_of(opt);
  return gram_common(p, x, funcs, "limit", 0.0, opt, [&](int i, int j) {
    return small_scale_coefficient(p, x, funcs[i], i == j ? nullptr : &funcs[j], sched, rule,
                                   opt.rel_tol);
  });
}

InformationGram gram_at_scale(const ProbeFamily& p, const Point& x,
                              const std::vector<TestFunction>& funcs, double eps,
                              const QuadratureRule& rule, const GramOptions& opt) {
  return gram_common(p, x, funcs, "at-scale", eps, opt, [&](int i, int j) {
    return at_scale_entry(p, x, funcs[i], i == j ? nullptr : &funcs[j], eps, rule, opt.rel_tol);
  });
}

InformationGram gram_scale_normalized(const ProbeFamily& p, const Point& x,
                                      const std::vector<TestFunction>& funcs,
                                      const QuadratureRule& rule, const GramOptions& opt) {
  auto sched = eps_schedule_of(opt);
  return gram_common(p, x, funcs, "scale-normalized", 0.0, opt, [&](int i, int j) {
    CoefficientEstimate raw = small_scale_coefficient(p, x, funcs[i], i == j ? nullptr : &funcs[j],
                                                      sched, rule, opt.rel_tol);
    return normalize_by_scale(raw, opt.rel_tol);
  });
}

std::vector<Point> low_discrepancy_points(const std::vector<std::pair<double, double>>& box,
                                          int count) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23};
  size_t dim = box.size();
  if (dim == 0 || dim > 9) throw InputError("low_discrepancy_points: dimension must be in [1,9]");
  std::vector<Point> pts(static_cast<size_t>(count), Point(dim));
  for (int n = 0; n < count; ++n)
    for (size_t d = 0; d < dim; ++d) {
      double u = radical_inverse(primes[d], n + 1);
      pts[static_cast<size_t>(n)][d] = box[d].first + u * (box[d].second - box[d].first);
    }
  return pts;
}

ChartReport chart_check(const ProbeFamily& p, const Point& x,
                        const std::vector<TestFunction>& funcs,
                        const std::vector<std::pair<double, double>>& sample_region,
                        const QuadratureRule& rule, const ChartOptions& opt) {
  if (funcs.empty()) throw InputError("chart_check: need at least one candidate function");
  if (sample_region.size() != x.size())
    throw InputError("chart_check: sample region dimension mismatch");
  for (size_t d = 0; d < x.size(); ++d)
    if (x[d] < sample_region[d].first || x[d] > sample_region[d].second)
      throw InputError("chart_check: sample region must contain the base point");

  ChartReport rep;
  rep.labels = collect_labels(funcs);

  rep.max_center_deviation = 0.0;
  for (const auto& f : funcs) rep.max_center_deviation = std::max(rep.max_center_deviation, std::fabs(f(x)));
  rep.centered = rep.max_center_deviation <= opt.center_tol;

  // all-pairs image separation on a deterministic low-discrepancy sample;
  // evidence for injectivity, never a proof
  auto pts = low_discrepancy_points(sample_region, opt.injectivity_samples);
  size_t k = funcs.size();
  std::vector<std::vector<double>> images(pts.size(), std::vector<double>(k));
  for (size_t n = 0; n < pts.size(); ++n)
    for (size_t j = 0; j < k; ++j) images[n][j] = funcs[j](pts[n]);
  rep.min_image_separation = std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < pts.size(); ++a)
    for (size_t b = a + 1; b < pts.size(); ++b) {
      double d2 = 0.0;
      for (size_t j = 0; j < k; ++j) {
        double d = images[a][j] - images[b][j];
        d2 += d * d;
      }
      rep.min_image_separation = std::min(rep.min_image_separation, std::sqrt(d2));
    }
  rep.pairs_tested = static_cast<int>(pts.size() * (pts.size() - 1) / 2);
  rep.injective = rep.min_image_separation >= opt.separation_floor;

  // Gram tier: the zero matrix (the generic outcome for centered continuous
  // candidates) falls back to scale-normalized Grams re-centered at each
  // sample point; a genuinely PD raw limit stands on its own. Zero is tested
  // first: a roundoff-scale matrix can satisfy the relative PD margin, and
  // treating it as evidence would hide the degeneracy the rescaled tier sees.
  rep.center_limit_gram = gram_matrix(p, x, funcs, rule, opt.gram);
  bool raw_pd = rep.center_limit_gram.pd.has_value() && *rep.center_limit_gram.pd;
  bool raw_zero = rep.center_limit_gram.reliable && rep.center_limit_gram.matrix.max_abs() <= 1e-8;

  std::vector<Point> gram_points{x};
  for (int n = 0; n < opt.nearby_gram_points && n < static_cast<int>(pts.size()); ++n)
    gram_points.push_back(nudge(x, pts[static_cast<size_t>(n)], 0.5));

  if (raw_pd && !raw_zero) {
    rep.gram_basis = "limit";
    rep.gram_at_samples.push_back(rep.center_limit_gram);
    for (size_t n = 1; n < gram_points.size(); ++n)
      rep.gram_at_samples.push_back(gram_matrix(p, gram_points[n], funcs, rule, opt.gram));
  } else if (raw_zero) {
    rep.gram_basis = "scale-normalized";
    for (const Point& pt : gram_points) {
      std::vector<TestFunction> centered;
      centered.reserve(funcs.size());
      for (const auto& f : funcs) centered.push_back(tf_center(f, pt));
      rep.gram_at_samples.push_back(gram_scale_normalized(p, pt, centered, rule, opt.gram));
    }
  } else {
    rep.gram_basis = "limit";
    rep.gram_at_samples.push_back(rep.center_limit_gram);
  }

  rep.grams_pd = !rep.gram_at_samples.empty();
  for (const auto& g : rep.gram_at_samples)
    if (!(g.pd.has_value() && *g.pd)) rep.grams_pd = false;

  if (!rep.centered)
    rep.verdict = "not-centered";
  else if (!rep.injective)
    rep.verdict = "non-injective";
  else if (!rep.grams_pd)
    rep.verdict = "degenerate-gram";
  else
    rep.verdict = "entropy-chart";
  return rep;
}

ProductCheckReport product_check(const ProbePtr& left, const ProbePtr& right, const Point& x,
                                 const Point& y, const std::vector<TestFunction>& fs,
                                 const std::vector<TestFunction>& gs, double eps,
                                 const QuadratureRule& rule, double tol) {
  ProductCheckReport rep;
  rep.tol = tol;
  if (fs.empty() && gs.empty()) {
    rep.vacuous = true;
    rep.block_diagonal = true;
    rep.factor_match = true;
    rep.pass = true;
    return rep;
  }
  int kl = static_cast<int>(fs.size()), kr = static_cast<int>(gs.size());
  int dl = left->space().dim(), dim = dl + right->space().dim();
  ProbePtr pp = make_product_probe(left, right);
  Point z = x;
  z.insert(z.end(), y.begin(), y.end());

  std::vector<TestFunction> fc, gc, lifted;
  for (const auto& f : fs) fc.push_back(tf_center(f, x));
  for (const auto& g : gs) gc.push_back(tf_center(g, y));
  for (const auto& f : fc) lifted.push_back(tf_lift(f, dim, 0));
  for (const auto& g : gc) lifted.push_back(tf_lift(g, dim, dl));

  GramOptions gopt;
  rep.full = gram_at_scale(*pp, z, lifted, eps, rule, gopt);
  bool reliable = rep.full.reliable;
  if (kl > 0) {
    rep.left = gram_at_scale(*left, x, fc, eps, rule, gopt);
    reliable = reliable && rep.left.reliable;
  }
  if (kr > 0) {
    rep.right = gram_at_scale(*right, y, gc, eps, rule, gopt);
    reliable = reliable && rep.right.reliable;
  }

  rep.mixed_max_abs = 0.0;
  for (int i = 0; i < kl; ++i)
    for (int j = 0; j < kr; ++j)
      rep.mixed_max_abs = std::max(rep.mixed_max_abs, std::fabs(rep.full.matrix(i, kl + j)));

  rep.diagonal_gap = 0.0;
  for (int i = 0; i < kl; ++i)
    for (int j = 0; j < kl; ++j)
      rep.diagonal_gap =
          std::max(rep.diagonal_gap, std::fabs(rep.full.matrix(i, j) - rep.left.matrix(i, j)));
  for (int i = 0; i < kr; ++i)
    for (int j = 0; j < kr; ++j)
      rep.diagonal_gap = std::max(
          rep.diagonal_gap, std::fabs(rep.full.matrix(kl + i, kl + j) - rep.right.matrix(i, j)));

  // centering is claimed to be harmless once one factor already has it: with
  // either side centered, dropping the other side's centering must not move
  // the first mixed coefficient. Run it each way and record the worse gap.
  // The centered functions' sup bounds dominate the raw ones, so one shared
  // schedule is valid for all three evaluations.
  if (kl > 0 && kr > 0) {
    TestFunction raw_f = tf_lift(fs[0], dim, 0), raw_g = tf_lift(gs[0], dim, dl);
    const TestFunction& cf = lifted[0];
    const TestFunction& cg = lifted[static_cast<size_t>(kl)];
    auto sched = default_joint_schedule(cf.sup_bound, cg.sup_bound);
    double cc = joint_response(*pp, z, eps, cf, cg, sched, rule).value;
    double rc = joint_response(*pp, z, eps, raw_f, cg, sched, rule).value;
    double cr = joint_response(*pp, z, eps, cf, raw_g, sched, rule).value;
    rep.centering_gap = std::max(std::fabs(rc - cc), std::fabs(cr - cc));
  }

  rep.block_diagonal = rep.mixed_max_abs <= tol;
  rep.factor_match = rep.diagonal_gap <= tol;
  rep.pass = reliable && rep.block_diagonal && rep.factor_match;
  return rep;
}

PushforwardCheckReport pushforward_check(const ProbePtr& base, const Point& x, const MapSpec& map,
                                         const std::vector<TestFunction>& phis,
                                         const std::vector<double>& t_grid,
                                         const std::vector<double>& eps_list,
                                         const QuadratureRule& rule) {
  if (phis.empty()) throw InputError("pushforward_check: need at least one observable");
  if (t_grid.empty() || eps_list.empty())
    throw InputError("pushforward_check: empty t grid or eps list");
  ProbePtr pf = make_pushforward_probe(base, map, {x});
  Point image = map.forward(x);
  int dim = base->space().dim();

  // The mapped-node transport makes both sides the same sum bit for bit,
  // which verifies nothing. Route the image side independently where the
  // engine allows: its own density (adaptive, 1-d) or its own sample stream
  // (Monte Carlo). Multi-dim deterministic rules keep the shared transport
  // and the report says so.
  QuadratureRule image_rule = rule;
  bool independent = false;
  if (rule.kind == RuleKind::MonteCarlo) {
    image_rule.mc_seed = rule.mc_seed ^ 0x9e3779b97f4a7c15ull;
    independent = true;
  } else if (dim == 1 && base->space().kind() == ModelSpace::Kind::Euclidean) {
    image_rule = QuadratureRule::adaptive();
    independent = true;
  }

  PushforwardCheckReport rep;
  rep.independent_routes = independent;
  rep.pass = true;
  for (size_t pi = 0; pi < phis.size(); ++pi) {
    TestFunction pulled = compose_with_map(phis[pi], map, dim);
    for (double eps : eps_list)
      for (double t : t_grid) {
        Estimate img = entropy_response(*pf, image, eps, phis[pi], t, image_rule);
        Estimate bas = entropy_response(*base, x, eps, pulled, t, rule);
        PushforwardCheckReport::Sample s;
        s.phi_index = static_cast<int>(pi);
        s.t = t;
        s.eps = eps;
        s.image_ent = img.value;
        s.base_ent = bas.value;
        s.gap = std::fabs(img.value - bas.value);
        s.allowed = rule.kind == RuleKind::MonteCarlo
                        ? 3.0 * std::sqrt(img.error * img.error + bas.error * bas.error)
                        : 1e-8;
        s.pass = s.gap <= s.allowed;
        rep.max_gap = std::max(rep.max_gap, s.gap);
        rep.pass = rep.pass && s.pass;
        rep.samples.push_back(s);
      }
  }
  return rep;
}

SubmanifoldCheckReport submanifold_check(const ProbePtr& ambient, const std::vector<double>& deltas,
                                         const ProbePtr& intrinsic, const Point& x,
                                         const std::vector<TestFunction>& funcs,
                                         int constrained_axis, double eps,
                                         const QuadratureRule& rule, double tol) {
  int n = ambient->space().dim();
  if (constrained_axis < 0 || constrained_axis >= n)
    throw InputError("submanifold_check: constrained axis out of range");
  if (intrinsic->space().dim() != n - 1)
    throw InputError("submanifold_check: intrinsic probe must have ambient dimension minus one");
  if (deltas.size() < 2) throw InputError("submanifold_check: need at least two slab widths");
  for (size_t i = 1; i < deltas.size(); ++i)
    if (!(deltas[i] < deltas[i - 1]) || !(deltas[i] > 0.0))
      throw InputError("submanifold_check: slab widths must be positive and strictly decreasing");
  if (std::fabs(x[static_cast<size_t>(constrained_axis)]) > 1e-12)
    throw InputError("submanifold_check: base point must lie on the constrained set");
  if (funcs.empty()) throw InputError("submanifold_check: need at least one function");

  // spot-check the stated independence from the constrained coordinate
  for (const auto& f : funcs) {
    Point probe = x;
    double f0 = f(x);
    for (double off : {deltas[0] * 0.5, -deltas[0] * 0.5}) {
      probe[static_cast<size_t>(constrained_axis)] = off;
      if (std::fabs(f(probe) - f0) > 1e-10)
        throw InputError("submanifold_check: " + f.label + " varies along the constrained axis");
    }
  }

  SubmanifoldCheckReport rep;
  rep.tol = tol;
  rep.deltas = deltas;
  GramOptions gopt;
  for (double d : deltas) {
    ProbePtr rp = make_restricted_probe(ambient, ModelSpace::slab(ambient->space(), constrained_axis, d));
    rep.per_delta.push_back(gram_at_scale(*rp, x, funcs, eps, rule, gopt));
  }

  int k = static_cast<int>(funcs.size());
  rep.extrapolated = Matrix(k, k);
  bool reliable = true;
  for (const auto& g : rep.per_delta) reliable = reliable && g.reliable;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      std::vector<double> vals;
      for (const auto& g : rep.per_delta) vals.push_back(g.matrix(i, j));
      rep.extrapolated(i, j) = extrapolate_to_zero(deltas, vals);
    }

  // intrinsic view: drop the constrained coordinate, evaluate through the
  // embedding that re-inserts it at zero
  Point xi;
  for (int i = 0; i < n; ++i)
    if (i != constrained_axis) xi.push_back(x[static_cast<size_t>(i)]);
  std::vector<TestFunction> intr;
  for (const auto& f : funcs) {
    auto fe = f.eval;
    int axis = constrained_axis;
    intr.push_back(tf_make(n - 1, f.sup_bound, f.label + "|surface", [fe, axis, n](const Point& z) {
      Point y(static_cast<size_t>(n));
      for (int i = 0, zi = 0; i < n; ++i)
        y[static_cast<size_t>(i)] = (i == axis) ? 0.0 : z[static_cast<size_t>(zi++)];
      return fe(y);
    }));
  }
  rep.intrinsic = gram_at_scale(*intrinsic, xi, intr, eps, rule, gopt);
  reliable = reliable && rep.intrinsic.reliable;

  rep.max_gap = (rep.extrapolated - rep.intrinsic.matrix).max_abs();

  // PD restriction: append the normal coordinate (clipped far outside the
  // probe's reach so it stays bounded) and ask whether positivity survives
  // the cut back to the funcs block
  std::vector<TestFunction> with_normal = funcs;
  {
    int axis = constrained_axis;
    with_normal.push_back(tf_make(n, 6.0, "normal-offset", [axis](const Point& y) {
      return std::clamp(y[static_cast<size_t>(axis)], -6.0, 6.0);
    }));
  }
  rep.ambient_gram = gram_at_scale(*ambient, x, with_normal, eps, rule, gopt);
  if (rep.ambient_gram.reliable) {
    Matrix block(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) block(i, j) = rep.ambient_gram.matrix(i, j);
    double diag_scale = 0.0;
    for (int i = 0; i < k; ++i) diag_scale += std::fabs(block(i, i));
    rep.principal_block_pd = min_eigenvalue(block) > gopt.pd_margin_factor * diag_scale / k;
    bool ambient_pd = rep.ambient_gram.pd.has_value() && *rep.ambient_gram.pd;
    rep.principal_pd_consistent = !ambient_pd || rep.principal_block_pd;
  }

  rep.pass = reliable && rep.max_gap <= tol && rep.principal_pd_consistent;
  return rep;
}

MapRankReport rank_classify(const ProbePtr& domain_probe, const Point& x, const MapSpec& map,
                            int codomain_dim, const std::vector<TestFunction>& domain_chart,
                            const std::vector<TestFunction>& codomain_chart,
                            const QuadratureRule& rule, const GramOptions& opt, double rank_tol) {
  int dx = domain_probe->space().dim();
  if (static_cast<int>(domain_chart.size()) != dx)
    throw InputError("rank_classify: domain chart must have one function per dimension");
  if (static_cast<int>(codomain_chart.size()) != codomain_dim)
    throw InputError("rank_classify: codomain chart must have one function per dimension");
  Point image = map.forward(x);
  for (const auto& f : domain_chart)
    if (std::fabs(f(x)) > 1e-10)
      throw InputError("rank_classify: domain chart not centered at the base point (" + f.label + ")");
  for (const auto& g : codomain_chart)
    if (std::fabs(g(image)) > 1e-10)
      throw InputError("rank_classify: codomain chart not centered at the image point (" + g.label + ")");

  MapRankReport rep;
  rep.x = x;
  rep.image = image;
  rep.domain_dim = dx;
  rep.codomain_dim = codomain_dim;

  std::vector<TestFunction> pulled;
  for (const auto& g : codomain_chart) pulled.push_back(compose_with_map(g, map, dx));
  rep.pullback = gram_scale_normalized(*domain_probe, x, pulled, rule, opt);

  auto fwd = map.forward;
  std::vector<std::function<double(const Point&)>> evals;
  for (const auto& g : codomain_chart) evals.push_back(g.eval);
  rep.jacobian = fd_jacobian(
      [&evals, &fwd](const Point& y) {
        Point w = fwd(y);
        Point out(evals.size());
        for (size_t j = 0; j < evals.size(); ++j) out[j] = evals[j](w);
        return out;
      },
      x);
  rep.jacobian_rank = numerical_rank(rep.jacobian);

  if (!rep.pullback.reliable) {
    rep.rank = -1;
    rep.ranks_agree = false;
    rep.classification = "degenerate";
    return rep;
  }
  rep.rank = numerical_rank(rep.pullback.matrix, rank_tol);
  rep.ranks_agree = rep.rank == rep.jacobian_rank;

  bool imm = rep.rank == dx, sub = rep.rank == codomain_dim;
  if (imm && sub)
    rep.classification = "local-diffeo";
  else if (imm)
    rep.classification = "immersion";
  else if (sub)
    rep.classification = "submersion";
  else
    rep.classification = "degenerate";
  return rep;
}

StabilityTrace stability_sweep(const std::vector<ProbePtr>& sequence, const ProbePtr& limit,
                               const Point& x, const std::vector<TestFunction>& funcs, double eps,
                               const QuadratureRule& rule, const GramOptions& opt) {
  if (sequence.size() < 3) throw InputError("stability_sweep: need at least three sequence members");
  if (!limit) throw InputError("stability_sweep: missing limit probe");

  StabilityTrace tr;
  tr.eps = eps;
  tr.limit = gram_at_scale(*limit, x, funcs, eps, rule, opt);
  tr.limit_pd = tr.limit.pd.has_value() && *tr.limit.pd;
  tr.per_k.resize(sequence.size());
  parallel_for(sequence.size(), [&](size_t k) {
    tr.per_k[k] = gram_at_scale(*sequence[k], x, funcs, eps, rule, opt);
  });
  for (const auto& g : tr.per_k) {
    tr.min_eigs.push_back(g.min_eig);
    tr.gap_to_limit.push_back((g.matrix - tr.limit.matrix).max_abs());
  }

  tr.k0 = -1;
  if (tr.limit_pd) {
    int run_start = static_cast<int>(sequence.size());
    for (int k = static_cast<int>(sequence.size()) - 1; k >= 0; --k) {
      const auto& g = tr.per_k[static_cast<size_t>(k)];
      if (g.pd.has_value() && *g.pd)
        run_start = k;
      else
        break;
    }
    if (run_start < static_cast<int>(sequence.size())) tr.k0 = run_start;
  }
  return tr;
}

RigidityReport rigidity_compare(const ProbePtr& p1, const ProbePtr& p2,
                                const std::vector<TestFunction>& battery,
                                const std::vector<Point>& points, const QuadratureRule& rule,
                                const GramOptions& opt, double threshold) {
  if (battery.empty()) throw InputError("rigidity_compare: empty battery");
  if (p1->space().dim() != p2->space().dim())
    throw InputError("rigidity_compare: probes live on different-dimensional spaces");

  RigidityReport rep;
  rep.battery = collect_labels(battery);
  rep.points = points;
  rep.threshold = threshold;
  if (points.empty())
    rep.warnings.push_back("no evaluation points supplied; the verdict is vacuous");

  auto sched = eps_schedule_of(opt);
  rep.per_function_gap.assign(battery.size(), kNan);
  for (size_t j = 0; j < battery.size(); ++j) {
    for (size_t i = 0; i < points.size(); ++i) {
      CoefficientEstimate e1 =
          small_scale_coefficient(*p1, points[i], battery[j], nullptr, sched, rule, opt.rel_tol);
      CoefficientEstimate e2 =
          small_scale_coefficient(*p2, points[i], battery[j], nullptr, sched, rule, opt.rel_tol);
      if (!std::isfinite(e1.limit) || !std::isfinite(e2.limit)) {
        rep.warnings.push_back("limit for " + battery[j].label + " at point " + std::to_string(i) +
                               " did not converge; entry excluded");
        continue;
      }
      double gap = std::fabs(e1.limit - e2.limit);
      double& slot = rep.per_function_gap[j];
      slot = std::isfinite(slot) ? std::max(slot, gap) : gap;
      rep.max_discrepancy = std::max(rep.max_discrepancy, gap);
    }
  }
  rep.verdict = rep.max_discrepancy > threshold ? "distinct" : "indistinguishable";
  return rep;
}

}  // namespace entroscope
