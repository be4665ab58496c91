#include "entroscope/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "entroscope/entropy.hpp"
#include "entroscope/expression.hpp"
#include "entroscope/probes.hpp"
#include "entroscope/verifiers.hpp"
#include "entroscope/version.hpp"

namespace entroscope {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// ------------------------------------------------------------ json access

const ojson& need(const ojson& j, const char* key, const char* ctx) {
  if (!j.contains(key))
    throw InputError(std::string("scenario: missing key '") + key + "' in " + ctx);
  return j.at(key);
}

double need_num(const ojson& j, const char* key, const char* ctx) {
  const ojson& v = need(j, key, ctx);
  if (!v.is_number()) throw InputError(std::string("scenario: '") + key + "' must be a number");
  return v.get<double>();
}

double opt_num(const ojson& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const ojson& v = j.at(key);
  if (!v.is_number()) throw InputError(std::string("scenario: '") + key + "' must be a number");
  return v.get<double>();
}

int opt_int(const ojson& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<int>();
}

std::string need_str(const ojson& j, const char* key, const char* ctx) {
  const ojson& v = need(j, key, ctx);
  if (!v.is_string()) throw InputError(std::string("scenario: '") + key + "' must be a string");
  return v.get<std::string>();
}

// -------------------------------------------------------------- descriptors

ModelSpace parse_space(const ojson& s) {
  std::string kind = need_str(s, "kind", "space descriptor");
  if (kind == "euclidean") return ModelSpace::euclidean(opt_int(s, "dim", 1));
  if (kind == "circle") return ModelSpace::circle();
  if (kind == "product")
    return ModelSpace::product(parse_space(need(s, "left", "product space")),
                               parse_space(need(s, "right", "product space")));
  if (kind == "slab")
    return ModelSpace::slab(parse_space(need(s, "ambient", "slab space")),
                            opt_int(s, "index", 0), need_num(s, "half_width", "slab space"));
  throw InputError("scenario: unknown space kind '" + kind + "'");
}

Matrix parse_shape(const ojson& pj, int dim) {
  if (pj.contains("shape")) {
    const ojson& rows = pj.at("shape");
    if (!rows.is_array() || static_cast<int>(rows.size()) != dim)
      throw InputError("scenario: 'shape' must be a dim x dim matrix");
    Matrix m(dim, dim);
    for (int i = 0; i < dim; ++i) {
      const ojson& row = rows[static_cast<size_t>(i)];
      if (!row.is_array() || static_cast<int>(row.size()) != dim)
        throw InputError("scenario: 'shape' must be a dim x dim matrix");
      for (int j = 0; j < dim; ++j) m(i, j) = row[static_cast<size_t>(j)].get<double>();
    }
    return m;
  }
  Matrix m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = i == j ? 1.0 : 0.0;
  if (pj.contains("variances")) {
    const ojson& v = pj.at("variances");
    if (!v.is_array() || static_cast<int>(v.size()) != dim)
      throw InputError("scenario: 'variances' must list one value per coordinate");
    for (int i = 0; i < dim; ++i) m(i, i) = v[static_cast<size_t>(i)].get<double>();
  }
  return m;
}

ProbePtr parse_probe(const ojson& pj, const ModelSpace& space) {
  std::string kind = need_str(pj, "kind", "probe descriptor");
  if (kind == "gaussian") {
    if (space.kind() != ModelSpace::Kind::Euclidean)
      throw InputError("scenario: gaussian probes live on euclidean spaces");
    return make_gaussian_probe(space.dim(), parse_shape(pj, space.dim()));
  }
  if (kind == "circle") {
    if (space.kind() != ModelSpace::Kind::Circle)
      throw InputError("scenario: circle probes live on the circle");
    return make_circle_probe();
  }
  if (kind == "mollifier") {
    if (space.kind() != ModelSpace::Kind::Euclidean)
      throw InputError("scenario: mollifier probes live on euclidean spaces");
    std::string kernel = pj.contains("kernel") ? pj.at("kernel").get<std::string>() : "cosine";
    if (kernel == "cosine") return make_mollifier_probe(space.dim(), MollifierKernel::CosineBump);
    if (kernel == "poly") return make_mollifier_probe(space.dim(), MollifierKernel::PolyBump);
    throw InputError("scenario: unknown mollifier kernel '" + kernel + "'");
  }
  if (kind == "product") {
    if (space.kind() != ModelSpace::Kind::Product)
      throw InputError("scenario: product probes live on product spaces");
    return make_product_probe(parse_probe(need(pj, "left", "product probe"), space.left()),
                              parse_probe(need(pj, "right", "product probe"), space.right()));
  }
  if (kind == "restricted") {
    if (space.kind() != ModelSpace::Kind::Slab)
      throw InputError("scenario: restricted probes live on slab spaces");
    return make_restricted_probe(parse_probe(need(pj, "ambient", "restricted probe"), space.ambient()),
                                 space);
  }
  throw InputError("scenario: unknown probe kind '" + kind + "'");
}

Point parse_point(const ojson& pj, const ModelSpace& space, const char* ctx) {
  if (pj.is_object() && pj.contains("theta")) {
    if (space.kind() != ModelSpace::Kind::Circle)
      throw InputError(std::string("scenario: theta points only make sense on the circle (") +
                       ctx + ")");
    return Point{pj.at("theta").get<double>()};
  }
  if (!pj.is_array())
    throw InputError(std::string("scenario: '") + ctx + "' must be an array of coordinates");
  Point x;
  for (const auto& v : pj) x.push_back(v.get<double>());
  if (static_cast<int>(x.size()) != space.dim())
    throw InputError(std::string("scenario: '") + ctx + "' has " + std::to_string(x.size()) +
                     " coordinates, the space has dimension " + std::to_string(space.dim()));
  return x;
}

QuadratureRule parse_rule(const ojson& scenario, std::optional<std::uint64_t> seed) {
  if (!scenario.contains("quadrature")) return QuadratureRule::gauss_hermite(64);
  const ojson& q = scenario.at("quadrature");
  std::string kind = need_str(q, "kind", "quadrature descriptor");
  if (kind == "gauss_hermite") return QuadratureRule::gauss_hermite(opt_int(q, "order", 64));
  if (kind == "periodic_trapezoid")
    return QuadratureRule::periodic_trapezoid(opt_int(q, "nodes", 0));
  if (kind == "adaptive")
    return QuadratureRule::adaptive(opt_num(q, "rel_tol", 1e-10), opt_num(q, "abs_tol", 1e-13),
                                    opt_int(q, "max_depth", 28));
  if (kind == "monte_carlo") {
    if (!seed.has_value())
      throw InputError("scenario: monte-carlo quadrature requires a seed");
    return QuadratureRule::monte_carlo(
        static_cast<std::int64_t>(need_num(q, "samples", "monte-carlo quadrature")), *seed);
  }
  throw InputError("scenario: unknown quadrature kind '" + kind + "'");
}

std::vector<double> geometric(double start, double ratio, int steps) {
  if (!(start > 0.0) || !(ratio > 1.0) || steps < 1)
    throw InputError("scenario: schedules need a positive start, a ratio > 1, and >= 1 steps");
  std::vector<double> out;
  double v = start;
  for (int k = 0; k < steps; ++k, v /= ratio) out.push_back(v);
  return out;
}

struct Schedules {
  std::vector<double> eps;        // descending
  std::vector<double> t;          // empty = per-function library defaults
  double eps0 = 0.25;
};

Schedules parse_schedules(const ojson& scenario) {
  Schedules s;
  ojson sj = scenario.contains("schedules") ? scenario.at("schedules") : ojson::object();
  s.eps0 = opt_num(sj, "eps0", 0.25);
  int steps = opt_int(sj, "steps", 6);
  s.eps = geometric(s.eps0, opt_num(sj, "eps_ratio", 4.0), steps);
  if (sj.contains("t0"))
    s.t = geometric(sj.at("t0").get<double>(), opt_num(sj, "t_ratio", 2.0),
                    opt_int(sj, "t_steps", 6));
  return s;
}

// -------------------------------------------------------------- functions

struct ScenarioFunction {
  BoundExpression bound;
  std::optional<double> expected_value;
  double tolerance = 1e-6;
};

std::vector<ScenarioFunction> parse_functions(const ojson& arr, const ModelSpace& space,
                                              const std::vector<std::pair<double, double>>& box,
                                              const char* ctx) {
  if (!arr.is_array())
    throw InputError(std::string("scenario: '") + ctx + "' must be an array");
  std::vector<ScenarioFunction> out;
  for (const auto& fj : arr) {
    ScenarioFunction sf;
    std::string src;
    double user_bound = kNan;
    if (fj.is_string()) {
      src = fj.get<std::string>();
    } else {
      src = need_str(fj, "expr", ctx);
      user_bound = opt_num(fj, "bound", kNan);
      if (fj.contains("expected_value")) sf.expected_value = fj.at("expected_value").get<double>();
      sf.tolerance = opt_num(fj, "tolerance", 1e-6);
    }
    sf.bound = bind_expression(parse_expression(src, space), user_bound, box);
    out.push_back(std::move(sf));
  }
  return out;
}

std::vector<TestFunction> just_functions(const std::vector<ScenarioFunction>& fs) {
  std::vector<TestFunction> out;
  for (const auto& f : fs) out.push_back(f.bound.fn);
  return out;
}

// ------------------------------------------------------------------- maps

struct ParsedMap {
  MapSpec spec;
  int domain_dim = 0;
  int codomain_dim = 0;
  bool numeric_inverse = false;
};

// 1-d fallback inverse: verified monotone on the working interval, then
// inverted by bracketed bisection to full double precision
std::function<Point(const Point&)> monotone_inverse(const std::function<double(double)>& fwd,
                                                    double lo, double hi) {
  const int grid = 129;
  double prev = fwd(lo);
  int direction = 0;
  for (int i = 1; i < grid; ++i) {
    double a = lo + (hi - lo) * i / (grid - 1);
    double v = fwd(a);
    int step = v > prev ? 1 : (v < prev ? -1 : 0);
    if (step == 0 || (direction != 0 && step != direction))
      throw InputError("scenario: forward map is not strictly monotone on the working interval; "
                       "supply inverse expressions");
    direction = step;
    prev = v;
  }
  bool inc = direction > 0;
  return [fwd, lo, hi, inc](const Point& w) {
    double target = w[0];
    double a = lo, b = hi, fa = fwd(a), fb = fwd(b);
    for (int it = 0; it < 200; ++it) {
      bool below = inc ? target >= fa : target <= fa;
      bool above = inc ? target <= fb : target >= fb;
      if (below && above) break;
      double width = b - a;
      a -= width;
      b += width;
      fa = fwd(a);
      fb = fwd(b);
    }
    for (int it = 0; it < 140; ++it) {
      double m = 0.5 * (a + b);
      if ((fwd(m) < target) == inc)
        a = m;
      else
        b = m;
    }
    return Point{0.5 * (a + b)};
  };
}

ParsedMap parse_map(const ojson& mj, const ModelSpace& domain,
                    const std::vector<std::pair<double, double>>& domain_box, bool need_inverse) {
  ParsedMap out;
  out.domain_dim = domain.dim();
  const ojson& fwd = need(mj, "forward", "map descriptor");
  if (!fwd.is_array() || fwd.empty())
    throw InputError("scenario: map 'forward' must be a nonempty array of expressions");
  std::vector<ExpressionAst> fwd_ast;
  for (const auto& e : fwd) fwd_ast.push_back(parse_expression(e.get<std::string>(), domain));
  out.codomain_dim = static_cast<int>(fwd_ast.size());
  out.spec.forward = [fwd_ast](const Point& y) {
    Point w;
    w.reserve(fwd_ast.size());
    for (const auto& a : fwd_ast) w.push_back(a.eval(y, nullptr));
    return w;
  };

  if (mj.contains("inverse")) {
    const ojson& inv = mj.at("inverse");
    if (!inv.is_array() || static_cast<int>(inv.size()) != domain.dim())
      throw InputError("scenario: map 'inverse' must list one expression per domain coordinate");
    ModelSpace codomain = ModelSpace::euclidean(out.codomain_dim);
    std::vector<ExpressionAst> inv_ast;
    for (const auto& e : inv) inv_ast.push_back(parse_expression(e.get<std::string>(), codomain));
    out.spec.inverse = [inv_ast](const Point& w) {
      Point y;
      y.reserve(inv_ast.size());
      for (const auto& a : inv_ast) y.push_back(a.eval(w, nullptr));
      return y;
    };
  } else if (need_inverse) {
    if (out.domain_dim != 1 || out.codomain_dim != 1)
      throw InputError("scenario: inverse expressions are required for maps above dimension 1");
    ExpressionAst f1 = fwd_ast[0];
    auto fwd1 = [f1](double z) { return f1.eval(Point{z}, nullptr); };
    out.spec.inverse = monotone_inverse(fwd1, domain_box[0].first, domain_box[0].second);
    out.numeric_inverse = true;
  }
  return out;
}

std::vector<std::pair<double, double>> image_box(const std::function<Point(const Point&)>& fwd,
                                                 const std::vector<std::pair<double, double>>& box,
                                                 int codomain_dim) {
  std::vector<Point> pts = low_discrepancy_points(box, 128);
  Point mid(box.size());
  for (size_t j = 0; j < box.size(); ++j) mid[j] = 0.5 * (box[j].first + box[j].second);
  pts.push_back(mid);
  for (unsigned mask = 0; mask < (1u << box.size()); ++mask) {
    Point corner(box.size());
    for (size_t j = 0; j < box.size(); ++j)
      corner[j] = (mask >> j) & 1 ? box[j].second : box[j].first;
    pts.push_back(corner);
  }
  std::vector<std::pair<double, double>> out(
      static_cast<size_t>(codomain_dim),
      {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
  for (const Point& p : pts) {
    Point w = fwd(p);
    for (int j = 0; j < codomain_dim; ++j) {
      out[static_cast<size_t>(j)].first = std::min(out[static_cast<size_t>(j)].first, w[static_cast<size_t>(j)]);
      out[static_cast<size_t>(j)].second = std::max(out[static_cast<size_t>(j)].second, w[static_cast<size_t>(j)]);
    }
  }
  for (auto& [lo, hi] : out) {
    double pad = 0.1 * (hi - lo) + 1e-9;
    lo -= pad;
    hi += pad;
  }
  return out;
}

// ------------------------------------------------------------- serializers

ojson j_point(const Point& x) {
  ojson a = ojson::array();
  for (double v : x) a.push_back(v);
  return a;
}

ojson j_matrix(const Matrix& m) {
  ojson rows = ojson::array();
  for (int i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

ojson j_estimate(const Estimate& e) {
  return ojson{{"value", e.value},
               {"error", e.error},
               {"method", e.method},
               {"evaluations", e.evaluations},
               {"converged", e.converged}};
}

ojson j_extrap(const ExtrapolationReport& r) {
  ojson samples = ojson::array();
  for (const auto& [h, v] : r.samples) samples.push_back(ojson::array({h, v}));
  return ojson{{"samples", samples},   {"limit", r.limit},       {"observed_order", r.observed_order},
               {"converged", r.converged}, {"residual", r.residual}, {"diagnostic", r.diagnostic}};
}

ojson j_coefficient(const CoefficientEstimate& c) {
  ojson per = ojson::array();
  for (const auto& pe : c.per_eps)
    per.push_back(ojson{{"eps", pe.eps},
                        {"value", pe.value},
                        {"analytic", pe.analytic},
                        {"t_report", j_extrap(pe.t_report)}});
  ojson out{{"per_eps", per}, {"limit", c.limit}, {"eps_report", j_extrap(c.eps_report)}};
  out["analytic_limit"] = c.analytic_limit ? ojson(*c.analytic_limit) : ojson(nullptr);
  out["agreement"] = c.agreement ? ojson(*c.agreement) : ojson(nullptr);
  out["clamp_count"] = c.clamp_count;
  out["evaluations"] = c.evaluations;
  return out;
}

ojson j_gram(const InformationGram& g) {
  ojson labels = ojson::array();
  for (const auto& l : g.labels) labels.push_back(l);
  ojson entries = ojson::array();
  int k = static_cast<int>(g.labels.size());
  size_t idx = 0;
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j, ++idx)
      if (idx < g.entries.size())
        entries.push_back(
            ojson{{"i", i}, {"j", j}, {"estimate", j_coefficient(g.entries[idx])}});
  ojson out{{"x", j_point(g.x)}, {"labels", labels},   {"basis", g.basis},
            {"eps", g.eps},      {"matrix", j_matrix(g.matrix)}, {"min_eig", g.min_eig},
            {"pd_margin", g.pd_margin}};
  out["pd"] = g.pd.has_value() ? ojson(*g.pd) : ojson(nullptr);
  out["reliable"] = g.reliable;
  out["entries"] = entries;
  return out;
}

bool gram_unreliable(const InformationGram& g) { return !g.reliable; }

// ----------------------------------------------------------- command glue

struct CommandResult {
  ojson results = ojson::object();
  ojson verdicts = ojson::object();
  bool nonconverged = false;
  bool verdict_failed = false;
  ojson extra_diagnostics = ojson::object();
};

struct Context {
  const ojson& sc;
  ModelSpace space;
  ProbePtr probe;
  Point x;
  QuadratureRule rule;
  Schedules sched;
  std::optional<std::uint64_t> seed;
  double rel_tol = 1e-6;
  std::vector<ScenarioFunction> functions;
  std::vector<std::pair<double, double>> box;  // probe support at the largest eps
};

GramOptions gram_options(const Context& c) {
  GramOptions g;
  g.eps_schedule = c.sched.eps;
  g.rel_tol = c.rel_tol;
  g.pd_margin_factor = opt_num(c.sc, "pd_margin_factor", 1e-8);
  return g;
}

bool coefficient_nonconverged(const CoefficientEstimate& e) {
  if (!e.eps_report.converged) return true;
  for (const auto& pe : e.per_eps)
    if (!pe.t_report.converged) return true;
  return false;
}

// the library derives t schedules from sup bounds; an explicit schedules.t0
// replays the same per-eps assembly with the user's grid instead
CoefficientEstimate coefficient_for(const Context& c, const TestFunction& f,
                                    const TestFunction* g) {
  if (c.sched.t.empty())
    return small_scale_coefficient(*c.probe, c.x, f, g, c.sched.eps, c.rule, c.rel_tol);
  CoefficientEstimate out;
  std::vector<std::pair<double, double>> num_samples, ana_samples;
  for (double eps : c.sched.eps) {
    CoefficientEstimate::PerEps pe;
    pe.eps = eps;
    if (g) {
      JointReport jr = joint_response(*c.probe, c.x, eps, f, *g, c.sched.t, c.rule, c.rel_tol);
      pe.value = jr.value;
      pe.analytic = jr.analytic;
      pe.t_report = jr.t_report;
      out.clamp_count += jr.clamp_count;
      out.evaluations += jr.evaluations;
    } else {
      QuadraticReport qr = quadratic_response(*c.probe, c.x, eps, f, c.sched.t, c.rule, c.rel_tol);
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
  out.eps_report = richardson_limit(num_samples, 1.0, c.rel_tol);
  out.limit = out.eps_report.converged ? out.eps_report.limit : kNan;
  ExtrapolationReport ana = richardson_limit(ana_samples, 1.0, c.rel_tol);
  if (ana.converged) {
    out.analytic_limit = ana.limit;
    if (std::isfinite(out.limit)) out.agreement = std::fabs(out.limit - *out.analytic_limit);
  }
  return out;
}

CommandResult run_coeff(const Context& c) {
  if (c.functions.empty()) throw InputError("scenario: coeff needs at least one function");
  CommandResult r;
  ojson list = ojson::array();
  bool all_expected_ok = true;
  std::int64_t clamp_total = 0;
  for (const auto& sf : c.functions) {
    CoefficientEstimate est = coefficient_for(c, sf.bound.fn, nullptr);
    r.nonconverged = r.nonconverged || coefficient_nonconverged(est);
    clamp_total += est.clamp_count;
    ojson item{{"label", sf.bound.fn.label}, {"estimate", j_coefficient(est)}};
    if (sf.expected_value) {
      bool ok = std::isfinite(est.limit) && std::fabs(est.limit - *sf.expected_value) <= sf.tolerance;
      item["expected_value"] = *sf.expected_value;
      item["tolerance"] = sf.tolerance;
      item["within_tolerance"] = ok;
      all_expected_ok = all_expected_ok && ok;
    }
    list.push_back(std::move(item));
  }
  r.results["coefficients"] = list;
  r.verdicts["pass"] = all_expected_ok;
  r.verdict_failed = !all_expected_ok;
  r.extra_diagnostics["clamp_count"] = clamp_total;
  return r;
}

CommandResult run_joint(const Context& c) {
  if (c.functions.size() != 2) throw InputError("scenario: joint needs exactly two functions");
  CommandResult r;
  CoefficientEstimate est = coefficient_for(c, c.functions[0].bound.fn, &c.functions[1].bound.fn);
  r.nonconverged = coefficient_nonconverged(est);
  r.results["labels"] =
      ojson::array({c.functions[0].bound.fn.label, c.functions[1].bound.fn.label});
  r.results["estimate"] = j_coefficient(est);
  bool ok = true;
  if (c.sc.contains("expected_value")) {
    double want = c.sc.at("expected_value").get<double>();
    double tol = opt_num(c.sc, "tolerance", 1e-6);
    ok = std::isfinite(est.limit) && std::fabs(est.limit - want) <= tol;
    r.results["expected_value"] = want;
    r.results["tolerance"] = tol;
    r.results["within_tolerance"] = ok;
  }
  r.verdicts["pass"] = ok;
  r.verdict_failed = !ok;
  r.extra_diagnostics["clamp_count"] = est.clamp_count;
  return r;
}

CommandResult run_gram(const Context& c) {
  if (c.functions.empty()) throw InputError("scenario: gram needs at least one function");
  std::string basis = c.sc.contains("basis") ? c.sc.at("basis").get<std::string>() : "limit";
  InformationGram g;
  if (basis == "limit")
    g = gram_matrix(*c.probe, c.x, just_functions(c.functions), c.rule, gram_options(c));
  else if (basis == "at-scale")
    g = gram_at_scale(*c.probe, c.x, just_functions(c.functions), c.sched.eps0, c.rule,
                      gram_options(c));
  else if (basis == "scale-normalized")
    g = gram_scale_normalized(*c.probe, c.x, just_functions(c.functions), c.rule, gram_options(c));
  else
    throw InputError("scenario: unknown gram basis '" + basis + "'");

  CommandResult r;
  r.results["gram"] = j_gram(g);
  r.nonconverged = gram_unreliable(g);
  std::string actual = g.pd.has_value() ? (*g.pd ? "pd" : "not-pd") : "unreliable";
  r.verdicts["actual"] = actual;
  bool pass;
  if (c.sc.contains("expected_verdict")) {
    std::string want = c.sc.at("expected_verdict").get<std::string>();
    r.verdicts["expected"] = want;
    pass = actual == want;
  } else {
    pass = g.pd.has_value() && *g.pd;
  }
  r.verdicts["pass"] = pass;
  r.verdict_failed = !pass;
  return r;
}

CommandResult run_chart(const Context& c) {
  if (c.functions.empty()) throw InputError("scenario: chart needs at least one function");
  std::vector<std::pair<double, double>> region = c.box;
  if (c.sc.contains("region")) {
    region.clear();
    for (const auto& pair : c.sc.at("region"))
      region.emplace_back(pair[0].get<double>(), pair[1].get<double>());
  }
  ChartOptions opt;
  opt.gram = gram_options(c);
  ChartReport rep = chart_check(*c.probe, c.x, just_functions(c.functions), region, c.rule, opt);

  CommandResult r;
  ojson sample_grams = ojson::array();
  for (const auto& g : rep.gram_at_samples) {
    sample_grams.push_back(j_gram(g));
    r.nonconverged = r.nonconverged || gram_unreliable(g);
  }
  r.nonconverged = r.nonconverged || gram_unreliable(rep.center_limit_gram);
  ojson labels = ojson::array();
  for (const auto& l : rep.labels) labels.push_back(l);
  r.results = ojson{{"labels", labels},
                    {"centered", rep.centered},
                    {"max_center_deviation", rep.max_center_deviation},
                    {"pairs_tested", rep.pairs_tested},
                    {"min_image_separation", rep.min_image_separation},
                    {"injective", rep.injective},
                    {"center_limit_gram", j_gram(rep.center_limit_gram)},
                    {"gram_basis", rep.gram_basis},
                    {"gram_at_samples", sample_grams},
                    {"grams_pd", rep.grams_pd},
                    {"verdict", rep.verdict}};
  std::string want = c.sc.contains("expected_verdict")
                         ? c.sc.at("expected_verdict").get<std::string>()
                         : std::string("entropy-chart");
  r.verdicts["actual"] = rep.verdict;
  r.verdicts["expected"] = want;
  bool pass = rep.verdict == want;
  r.verdicts["pass"] = pass;
  r.verdict_failed = !pass;
  return r;
}

CommandResult run_product(const Context& c) {
  ModelSpace right_space = parse_space(need(c.sc, "space2", "product scenario"));
  ProbePtr right = parse_probe(need(c.sc, "probe2", "product scenario"), right_space);
  Point y = parse_point(need(c.sc, "point2", "product scenario"), right_space, "point2");
  auto right_box = right->support(y, c.sched.eps0).box;
  std::vector<ScenarioFunction> gs =
      c.sc.contains("functions2")
          ? parse_functions(c.sc.at("functions2"), right_space, right_box, "functions2")
          : std::vector<ScenarioFunction>{};
  double tol = opt_num(c.sc, "tolerance", 1e-8);
  ProductCheckReport rep = product_check(c.probe, right, c.x, y, just_functions(c.functions),
                                         just_functions(gs), c.sched.eps0, c.rule, tol);
  CommandResult r;
  r.results = ojson{{"full", j_gram(rep.full)},
                    {"left", j_gram(rep.left)},
                    {"right", j_gram(rep.right)},
                    {"mixed_max_abs", rep.mixed_max_abs},
                    {"diagonal_gap", rep.diagonal_gap},
                    {"centering_gap", rep.centering_gap},
                    {"block_diagonal", rep.block_diagonal},
                    {"factor_match", rep.factor_match},
                    {"vacuous", rep.vacuous},
                    {"pass", rep.pass},
                    {"tol", rep.tol}};
  if (!rep.vacuous) {
    r.nonconverged = gram_unreliable(rep.full) ||
                     (!c.functions.empty() && gram_unreliable(rep.left)) ||
                     (!gs.empty() && gram_unreliable(rep.right));
  }
  r.verdicts["pass"] = rep.pass;
  r.verdict_failed = !rep.pass;
  return r;
}

CommandResult run_pushforward(const Context& c) {
  ParsedMap map = parse_map(need(c.sc, "map", "pushforward scenario"), c.space, c.box, true);
  ModelSpace codomain = ModelSpace::euclidean(map.codomain_dim);
  auto phi_box = image_box(map.spec.forward, c.box, map.codomain_dim);
  std::vector<ScenarioFunction> phis =
      parse_functions(need(c.sc, "functions", "pushforward scenario"), codomain, phi_box,
                      "functions");
  if (phis.empty()) throw InputError("scenario: pushforward needs at least one observable");

  std::vector<double> t_grid = c.sched.t;
  if (t_grid.empty()) {
    double max_bound = 1.0;
    for (const auto& p : phis) max_bound = std::max(max_bound, p.bound.fn.sup_bound);
    t_grid = default_t_schedule(max_bound);
  }
  std::vector<double> eps_list{c.sched.eps0, c.sched.eps0 / 4.0};
  if (c.sc.contains("eps_list")) {
    eps_list.clear();
    for (const auto& e : c.sc.at("eps_list")) eps_list.push_back(e.get<double>());
  }

  PushforwardCheckReport rep =
      pushforward_check(c.probe, c.x, map.spec, just_functions(phis), t_grid, eps_list, c.rule);
  CommandResult r;
  ojson samples = ojson::array();
  for (const auto& s : rep.samples)
    samples.push_back(ojson{{"phi_index", s.phi_index},
                            {"t", s.t},
                            {"eps", s.eps},
                            {"image_ent", s.image_ent},
                            {"base_ent", s.base_ent},
                            {"gap", s.gap},
                            {"allowed", s.allowed},
                            {"pass", s.pass}});
  r.results = ojson{{"samples", samples},
                    {"max_gap", rep.max_gap},
                    {"independent_routes", rep.independent_routes},
                    {"numeric_inverse", map.numeric_inverse},
                    {"pass", rep.pass}};
  r.verdicts["pass"] = rep.pass;
  r.verdict_failed = !rep.pass;
  return r;
}

CommandResult run_submanifold(const Context& c) {
  if (!c.sc.contains("deltas")) throw InputError("scenario: submanifold needs 'deltas'");
  std::vector<double> deltas;
  for (const auto& d : c.sc.at("deltas")) deltas.push_back(d.get<double>());
  int axis = opt_int(c.sc, "constrained_axis", c.space.dim() - 1);
  ModelSpace intrinsic_space = parse_space(need(c.sc, "space2", "submanifold scenario"));
  ProbePtr intrinsic = parse_probe(need(c.sc, "probe2", "submanifold scenario"), intrinsic_space);
  double tol = opt_num(c.sc, "tolerance", 1e-3);
  SubmanifoldCheckReport rep =
      submanifold_check(c.probe, deltas, intrinsic, c.x, just_functions(c.functions), axis,
                        c.sched.eps0, c.rule, tol);
  CommandResult r;
  ojson per_delta = ojson::array();
  for (const auto& g : rep.per_delta) {
    per_delta.push_back(j_gram(g));
    r.nonconverged = r.nonconverged || gram_unreliable(g);
  }
  r.nonconverged =
      r.nonconverged || gram_unreliable(rep.intrinsic) || gram_unreliable(rep.ambient_gram);
  ojson ds = ojson::array();
  for (double d : rep.deltas) ds.push_back(d);
  r.results = ojson{{"deltas", ds},
                    {"per_delta", per_delta},
                    {"extrapolated", j_matrix(rep.extrapolated)},
                    {"intrinsic", j_gram(rep.intrinsic)},
                    {"max_gap", rep.max_gap},
                    {"ambient_gram", j_gram(rep.ambient_gram)},
                    {"principal_block_pd", rep.principal_block_pd},
                    {"principal_pd_consistent", rep.principal_pd_consistent},
                    {"pass", rep.pass},
                    {"tol", rep.tol}};
  r.verdicts["pass"] = rep.pass;
  r.verdict_failed = !rep.pass;
  return r;
}

CommandResult run_rank(const Context& c) {
  ParsedMap map = parse_map(need(c.sc, "map", "rank scenario"), c.space, c.box, false);
  int codomain_dim = map.codomain_dim;
  if (c.sc.contains("space2")) {
    ModelSpace sp2 = parse_space(c.sc.at("space2"));
    if (sp2.dim() != codomain_dim)
      throw InputError("scenario: space2 dimension disagrees with the map's component count");
  }
  ModelSpace codomain = ModelSpace::euclidean(codomain_dim);
  auto cod_box = image_box(map.spec.forward, c.box, codomain_dim);
  std::vector<ScenarioFunction> cod_chart =
      parse_functions(need(c.sc, "functions2", "rank scenario"), codomain, cod_box, "functions2");
  double rank_tol = opt_num(c.sc, "rank_tol", 1e-4);
  MapRankReport rep =
      rank_classify(c.probe, c.x, map.spec, codomain_dim, just_functions(c.functions),
                    just_functions(cod_chart), c.rule, gram_options(c), rank_tol);
  CommandResult r;
  r.results = ojson{{"x", j_point(rep.x)},
                    {"image", j_point(rep.image)},
                    {"pullback", j_gram(rep.pullback)},
                    {"rank", rep.rank},
                    {"jacobian", j_matrix(rep.jacobian)},
                    {"jacobian_rank", rep.jacobian_rank},
                    {"ranks_agree", rep.ranks_agree},
                    {"domain_dim", rep.domain_dim},
                    {"codomain_dim", rep.codomain_dim},
                    {"classification", rep.classification}};
  r.nonconverged = gram_unreliable(rep.pullback);
  r.verdicts["actual"] = rep.classification;
  bool pass;
  if (c.sc.contains("expected_verdict")) {
    std::string want = c.sc.at("expected_verdict").get<std::string>();
    r.verdicts["expected"] = want;
    pass = rep.classification == want && rep.ranks_agree;
  } else {
    pass = rep.classification != "degenerate" && rep.ranks_agree;
  }
  r.verdicts["pass"] = pass;
  r.verdict_failed = !pass;
  return r;
}

CommandResult run_stability(const Context& c) {
  const ojson& seq = need(c.sc, "probe_sequence", "stability scenario");
  if (!seq.is_array() || seq.size() < 3)
    throw InputError("scenario: probe_sequence needs at least three probes");
  std::vector<ProbePtr> sequence;
  for (const auto& pj : seq) sequence.push_back(parse_probe(pj, c.space));
  StabilityTrace rep = stability_sweep(sequence, c.probe, c.x, just_functions(c.functions),
                                       c.sched.eps0, c.rule, gram_options(c));
  CommandResult r;
  ojson per_k = ojson::array();
  for (const auto& g : rep.per_k) {
    per_k.push_back(j_gram(g));
    r.nonconverged = r.nonconverged || gram_unreliable(g);
  }
  r.nonconverged = r.nonconverged || gram_unreliable(rep.limit);
  ojson eigs = ojson::array(), gaps = ojson::array();
  for (double v : rep.min_eigs) eigs.push_back(v);
  for (double v : rep.gap_to_limit) gaps.push_back(v);
  r.results = ojson{{"per_k", per_k},       {"limit", j_gram(rep.limit)},
                    {"min_eigs", eigs},     {"gap_to_limit", gaps},
                    {"eps", rep.eps},       {"limit_pd", rep.limit_pd},
                    {"k0", rep.k0}};
  bool pass;
  if (c.sc.contains("expected_k0")) {
    int want = c.sc.at("expected_k0").get<int>();
    r.verdicts["expected_k0"] = want;
    pass = rep.limit_pd && rep.k0 == want;
  } else {
    pass = rep.limit_pd && rep.k0 >= 0;
  }
  r.verdicts["actual_k0"] = rep.k0;
  r.verdicts["pass"] = pass;
  r.verdict_failed = !pass;
  return r;
}

CommandResult run_rigidity(const Context& c) {
  ProbePtr p2 = parse_probe(need(c.sc, "probe2", "rigidity scenario"), c.space);
  const ojson& pts = need(c.sc, "points", "rigidity scenario");
  std::vector<Point> points;
  for (const auto& pj : pts) points.push_back(parse_point(pj, c.space, "points"));
  double threshold = opt_num(c.sc, "tolerance", 1e-4);
  RigidityReport rep = rigidity_compare(c.probe, p2, just_functions(c.functions), points, c.rule,
                                        gram_options(c), threshold);
  CommandResult r;
  ojson battery = ojson::array(), jw = ojson::array(), gaps = ojson::array(), jp = ojson::array();
  for (const auto& b : rep.battery) battery.push_back(b);
  for (const auto& w : rep.warnings) {
    jw.push_back(w);
    if (w.find("did not converge") != std::string::npos) r.nonconverged = true;
  }
  for (double g : rep.per_function_gap) gaps.push_back(g);
  for (const auto& p : rep.points) jp.push_back(j_point(p));
  r.results = ojson{{"battery", battery},
                    {"points", jp},
                    {"max_discrepancy", rep.max_discrepancy},
                    {"per_function_gap", gaps},
                    {"warnings", jw},
                    {"threshold", rep.threshold},
                    {"verdict", rep.verdict}};
  r.verdicts["actual"] = rep.verdict;
  bool pass = true;
  if (c.sc.contains("expected_verdict")) {
    std::string want = c.sc.at("expected_verdict").get<std::string>();
    r.verdicts["expected"] = want;
    pass = rep.verdict == want;
  }
  r.verdicts["pass"] = pass;
  r.verdict_failed = !pass;
  return r;
}

CommandResult run_diagnostics(const Context& c) {
  double tol = opt_num(c.sc, "tolerance", 1e-8);
  CommandResult r;
  ojson per = ojson::array();
  bool all_ok = true;
  for (double eps : c.sched.eps) {
    ProbeDiagnostics d = probe_diagnostics(*c.probe, c.x, eps, c.rule);
    double allowed = c.rule.kind == RuleKind::MonteCarlo ? std::max(tol, 3.0 * d.mass.error) : tol;
    bool ok = d.mass.converged && std::fabs(d.mass.value - 1.0) <= allowed;
    all_ok = all_ok && ok;
    r.nonconverged = r.nonconverged || !d.mass.converged;
    per.push_back(ojson{{"eps", eps},
                        {"mass", j_estimate(d.mass)},
                        {"mean", j_point(d.mean)},
                        {"covariance", j_matrix(d.covariance)},
                        {"evaluations", d.evaluations},
                        {"mass_within_tolerance", ok}});
  }
  r.results["per_eps"] = per;
  r.results["mass_tolerance"] = tol;
  r.verdicts["pass"] = all_ok;
  r.verdict_failed = !all_ok;
  return r;
}

// ------------------------------------------------------------ entry point

const char* const kCommands[] = {"coeff",       "joint",      "gram",   "chart",
                                 "product",     "pushforward", "submanifold", "rank",
                                 "stability",   "rigidity",   "diagnostics"};

bool needs_primary_functions(const std::string& cmd) {
  return cmd != "diagnostics" && cmd != "pushforward";
}

ojson function_diagnostics(const std::vector<ScenarioFunction>& fs, const Schedules& sched) {
  ojson out = ojson::array();
  for (const auto& sf : fs) {
    ojson t = ojson::array();
    const std::vector<double> eff =
        sched.t.empty() ? default_t_schedule(sf.bound.fn.sup_bound) : sched.t;
    for (double v : eff) t.push_back(v);
    out.push_back(ojson{{"label", sf.bound.fn.label},
                        {"sup_bound", sf.bound.fn.sup_bound},
                        {"bound_estimated", sf.bound.fn.bound_estimated},
                        {"t_schedule", t},
                        {"evaluations", sf.bound.counters->evaluations.load()},
                        {"zero_over_zero", sf.bound.counters->zero_over_zero.load()}});
  }
  return out;
}

}  // namespace

nlohmann::ordered_json load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::ordered_json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("scenario JSON parse failure: ") + e.what());
  }
}

ReportDocument run_scenario(const nlohmann::ordered_json& scenario,
                            std::optional<std::uint64_t> seed_override) {
  ReportDocument doc;
  ojson& out = doc.doc;
  out["scenario"] = scenario;
  out["results"] = ojson::object();
  out["diagnostics"] = ojson::object();
  out["verdicts"] = ojson::object();
  out["version"] = kVersion;
  out["schema_version"] = kSchemaVersion;

  try {
    std::string cmd = need_str(scenario, "command", "scenario");
    bool known = false;
    for (const char* k : kCommands) known = known || cmd == k;
    if (!known) throw InputError("scenario: unknown command '" + cmd + "'");

    std::optional<std::uint64_t> seed = seed_override;
    if (!seed && scenario.contains("seed")) seed = scenario.at("seed").get<std::uint64_t>();

    Context c{scenario,
              parse_space(need(scenario, "space", "scenario")),
              nullptr,
              {},
              {},
              parse_schedules(scenario),
              seed,
              opt_num(scenario, "rel_tol", 1e-6),
              {},
              {}};
    c.probe = parse_probe(need(scenario, "probe", "scenario"), c.space);
    c.x = parse_point(need(scenario, "point", "scenario"), c.space, "point");
    c.probe->validate_center(c.x);
    c.rule = parse_rule(scenario, seed);
    c.box = c.probe->support(c.x, c.sched.eps0).box;
    if (!c.sched.t.empty() && cmd != "coeff" && cmd != "joint" && cmd != "pushforward")
      throw InputError("scenario: schedules.t0 applies only to coeff, joint, and pushforward");
    if (scenario.contains("functions") && needs_primary_functions(cmd))
      c.functions = parse_functions(scenario.at("functions"), c.space, c.box, "functions");

    CommandResult r;
    if (cmd == "coeff") r = run_coeff(c);
    else if (cmd == "joint") r = run_joint(c);
    else if (cmd == "gram") r = run_gram(c);
    else if (cmd == "chart") r = run_chart(c);
    else if (cmd == "product") r = run_product(c);
    else if (cmd == "pushforward") r = run_pushforward(c);
    else if (cmd == "submanifold") r = run_submanifold(c);
    else if (cmd == "rank") r = run_rank(c);
    else if (cmd == "stability") r = run_stability(c);
    else if (cmd == "rigidity") r = run_rigidity(c);
    else r = run_diagnostics(c);

    out["results"] = std::move(r.results);

    ojson diag;
    diag["quadrature"] = c.rule.method_name();
    diag["seed"] = seed ? ojson(*seed) : ojson(nullptr);
    ojson eps = ojson::array();
    for (double v : c.sched.eps) eps.push_back(v);
    diag["eps_schedule"] = eps;
    diag["rel_tol"] = c.rel_tol;
    diag["functions"] = function_diagnostics(c.functions, c.sched);
    for (auto it = r.extra_diagnostics.begin(); it != r.extra_diagnostics.end(); ++it)
      diag[it.key()] = it.value();
    out["diagnostics"] = std::move(diag);

    r.verdicts["non_convergence"] = r.nonconverged;
    doc.exit_code = r.nonconverged ? kExitNonConvergence
                                   : (r.verdict_failed ? kExitVerdictFailure : kExitPass);
    r.verdicts["exit_code"] = doc.exit_code;
    out["verdicts"] = std::move(r.verdicts);
  } catch (const std::exception& e) {
    out["results"] = ojson::object();
    out["verdicts"] =
        ojson{{"pass", false}, {"error", e.what()}, {"exit_code", kExitInputError}};
    doc.exit_code = kExitInputError;
  }
  return doc;
}

}  // namespace entroscope
