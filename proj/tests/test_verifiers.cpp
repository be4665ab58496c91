#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "entroscope/entropy.hpp"
#include "entroscope/probes.hpp"
#include "entroscope/test_function.hpp"
#include "entroscope/verifiers.hpp"

using namespace entroscope;

namespace {

// coordinate offset, clipped far outside every probe's node range so the
// sup bound is honest while the clip never fires in any integral here
TestFunction coord(int dim, int axis, double shift, double bound = 8.0) {
  return tf_make(dim, bound, "y" + std::to_string(axis + 1) + "-" + std::to_string(shift),
                 [axis, shift, bound](const Point& y) {
                   return std::clamp(y[static_cast<size_t>(axis)] - shift, -bound, bound);
                 });
}

// unit direction coordinate (y-c)/|y-c|, zero at the center itself
TestFunction directional(int dim, int axis, const Point& c) {
  return tf_make(dim, 1.0, "u" + std::to_string(axis + 1), [axis, c](const Point& y) {
    double n2 = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
      double d = y[i] - c[i];
      n2 += d * d;
    }
    if (n2 == 0.0) return 0.0;
    return (y[static_cast<size_t>(axis)] - c[static_cast<size_t>(axis)]) / std::sqrt(n2);
  });
}

TestFunction tf_mul(const TestFunction& f, const TestFunction& g) {
  auto fe = f.eval, ge = g.eval;
  return tf_make(f.dim, f.sup_bound * g.sup_bound, f.label + "*" + g.label,
                 [fe, ge](const Point& y) { return fe(y) * ge(y); });
}

Matrix congruence(const Matrix& a, const Matrix& g) { return a * g * a.transpose(); }

}  // namespace

TEST_CASE("limit gram: shifted coordinate, proportional pair, symmetry") {
  auto p = make_gaussian_probe(1);
  auto rule = QuadratureRule::gauss_hermite(32);
  Point x{0.0};
  TestFunction f = tf_add(coord(1, 0, 0.0), tf_constant(1, 1.0));  // y + 1

  InformationGram g1 = gram_matrix(*p, x, {f}, rule);
  CHECK(g1.basis == "limit");
  CHECK(g1.reliable);
  CHECK(g1.matrix.rows() == 1);
  CHECK(g1.matrix(0, 0) == doctest::Approx(1.0).epsilon(2e-6));
  REQUIRE(g1.pd.has_value());
  CHECK(*g1.pd);
  CHECK(g1.entry(0, 0).analytic_limit.has_value());
  CHECK(*g1.entry(0, 0).analytic_limit == doctest::Approx(1.0).epsilon(1e-8));

  InformationGram g2 = gram_matrix(*p, x, {f, tf_scale(f, 2.0)}, rule);
  CHECK(g2.matrix(0, 1) == g2.matrix(1, 0));  // mirrored, exactly
  CHECK(g2.matrix.is_symmetric(1e-9));
  CHECK(g2.matrix(0, 1) == doctest::Approx(2.0 * g2.matrix(0, 0)).epsilon(5e-6));
  CHECK(g2.matrix(1, 1) == doctest::Approx(4.0 * g2.matrix(0, 0)).epsilon(5e-6));
  REQUIRE(g2.pd.has_value());
  CHECK_FALSE(*g2.pd);
  CHECK(std::fabs(g2.min_eig) < 1e-5);
  // rank-1 eigenvalue sits far below the whole margin band, so the verdict
  // would not move for any margin in [1e-10, 1e-6]
  double diag_scale = 0.5 * (std::fabs(g2.matrix(0, 0)) + std::fabs(g2.matrix(1, 1)));
  CHECK(g2.min_eig < 1e-10 * diag_scale);
  CHECK(&g2.entry(1, 0) == &g2.entry(0, 1));

  CHECK_THROWS_AS(gram_matrix(*p, x, {}, rule), InputError);
}

TEST_CASE("direction-coordinate gram is the sphere average times the identity") {
  Point x2{0.0, 0.0};
  auto p2 = make_gaussian_probe(2);
  std::vector<TestFunction> dirs2{directional(2, 0, x2), directional(2, 1, x2)};
  InformationGram g = gram_matrix(*p2, x2, dirs2, QuadratureRule::gauss_hermite(64));
  CHECK(g.reliable);
  CHECK(std::fabs(g.matrix(0, 1)) <= 1e-8);
  CHECK(g.matrix(0, 0) == doctest::Approx(g.matrix(1, 1)).epsilon(1e-12));
  // tensor-grid swap symmetry makes the two diagonal sums add to the total
  // mass exactly, so quadrature hits the sphere average 1/2 at machine level
  CHECK(g.matrix(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
  REQUIRE(g.pd.has_value());
  CHECK(*g.pd);
  CHECK(g.min_eig > 1e-6 * 0.5);  // PD across the whole margin band

  Point x3{0.0, 0.0, 0.0};
  auto p3 = make_gaussian_probe(3);
  std::vector<TestFunction> dirs3{directional(3, 0, x3), directional(3, 1, x3),
                                  directional(3, 2, x3)};
  InformationGram h = gram_matrix(*p3, x3, dirs3, QuadratureRule::gauss_hermite(32));
  for (int i = 0; i < 3; ++i) {
    CHECK(h.matrix(i, i) == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
    for (int j = i + 1; j < 3; ++j) CHECK(std::fabs(h.matrix(i, j)) <= 1e-8);
  }

  // Monte Carlo route reproduces the sphere average within sampling noise.
  // Oracle: 4e6-draw numpy Monte Carlo plus the closed form E[u_i^2] = 1/n;
  // 65536 samples put the standard error near 1.4e-3.
  InformationGram m = gram_matrix(*p2, x2, dirs2, QuadratureRule::monte_carlo(65536, 20260817));
  CHECK(m.reliable);
  CHECK(m.matrix(0, 0) == doctest::Approx(0.5).epsilon(1.2e-2));
  CHECK(m.matrix(1, 1) == doctest::Approx(0.5).epsilon(1.2e-2));
  CHECK(std::fabs(m.matrix(0, 1)) <= 6e-3);
}

TEST_CASE("fixed-scale gram transforms by congruence under recombination") {
  auto p = make_gaussian_probe(2);
  Point x{0.1, -0.3};
  TestFunction f1 = coord(2, 0, 0.1), f2 = coord(2, 1, -0.3);
  Matrix a(2, 2);
  a(0, 0) = 2.0;
  a(0, 1) = 1.0;
  a(1, 0) = -1.0;
  a(1, 1) = 1.0;
  std::vector<TestFunction> recombined{tf_add(tf_scale(f1, 2.0), f2),
                                       tf_add(tf_scale(f1, -1.0), f2)};
  auto rule = QuadratureRule::gauss_hermite(48);
  InformationGram g = gram_at_scale(*p, x, {f1, f2}, 0.25, rule);
  InformationGram h = gram_at_scale(*p, x, recombined, 0.25, rule);
  CHECK(g.basis == "at-scale");
  CHECK(g.eps == 0.25);
  CHECK(g.entries[0].per_eps.size() == 1);
  Matrix expected = congruence(a, g.matrix);
  CHECK((h.matrix - expected).max_abs() <= 1e-8);
}

TEST_CASE("chart verdict: centered coordinates pass via scale-normalized grams") {
  auto p = make_gaussian_probe(2);
  Point x{0.2, -0.1};
  std::vector<TestFunction> funcs{coord(2, 0, 0.2), coord(2, 1, -0.1)};
  std::vector<std::pair<double, double>> region{{x[0] - 0.75, x[0] + 0.75},
                                                {x[1] - 0.75, x[1] + 0.75}};
  ChartOptions opt;
  ChartReport rep = chart_check(*p, x, funcs, region, QuadratureRule::gauss_hermite(32), opt);

  CHECK(rep.centered);
  CHECK(rep.max_center_deviation <= 1e-12);
  CHECK(rep.pairs_tested == 256 * 255 / 2);
  CHECK(rep.injective);
  CHECK(rep.min_image_separation > 1e-6);

  // raw pointwise limits of centered continuous coordinates vanish: the
  // evidence must come from the scale-normalized tier
  CHECK(rep.center_limit_gram.matrix.max_abs() <= 1e-8);
  REQUIRE(rep.center_limit_gram.pd.has_value());
  CHECK_FALSE(*rep.center_limit_gram.pd);
  CHECK(rep.gram_basis == "scale-normalized");
  REQUIRE(rep.gram_at_samples.size() == 9);
  for (const auto& g : rep.gram_at_samples) {
    CHECK(g.reliable);
    CHECK(g.matrix(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(g.matrix(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::fabs(g.matrix(0, 1)) <= 1e-8);
    REQUIRE(g.pd.has_value());
    CHECK(*g.pd);
  }
  CHECK(rep.grams_pd);
  CHECK(rep.verdict == "entropy-chart");
}

TEST_CASE("chart verdict: folding and degenerate candidates are rejected") {
  auto p = make_gaussian_probe(1);
  Point x{0.0};
  auto rule = QuadratureRule::gauss_hermite(32);
  TestFunction f = coord(1, 0, 0.0, 4.0);
  TestFunction f2 = tf_mul(f, f), f4 = tf_mul(tf_mul(f, f), tf_mul(f, f));
  std::vector<std::pair<double, double>> region{{-0.5, 0.5}};

  // (f, f^2): injective through the first coordinate, but the differential
  // tuple is rank one at the origin
  ChartReport deg = chart_check(*p, x, {f, f2}, region, rule);
  CHECK(deg.centered);
  CHECK(deg.injective);
  CHECK(deg.gram_basis == "scale-normalized");
  CHECK_FALSE(deg.grams_pd);
  CHECK(deg.verdict == "degenerate-gram");

  // (f^2, f^4) folds on a symmetric region: the sample contains exact
  // mirror pairs, so two distinct inputs share an image
  ChartReport fold = chart_check(*p, x, {f2, f4}, region, rule);
  CHECK(fold.min_image_separation <= 1e-14);
  CHECK_FALSE(fold.injective);
  CHECK(fold.verdict == "non-injective");

  ChartReport off = chart_check(*p, x, {tf_add(f, tf_constant(1, 1.0))}, region, rule);
  CHECK_FALSE(off.centered);
  CHECK(off.max_center_deviation == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(off.verdict == "not-centered");

  CHECK_THROWS_AS(chart_check(*p, Point{2.0}, {f}, region, rule), InputError);
  CHECK_THROWS_AS(chart_check(*p, x, {f}, {}, rule), InputError);
  CHECK_THROWS_AS(chart_check(*p, x, {}, region, rule), InputError);
}

TEST_CASE("product check: euclidean factors split block-diagonally") {
  auto left = make_gaussian_probe(1), right = make_gaussian_probe(1);
  Point x{0.4}, y{-0.2};
  auto rule = QuadratureRule::gauss_hermite(48);
  // supplied uncentered on purpose: the check centers them itself
  std::vector<TestFunction> fs{coord(1, 0, 0.0)};
  std::vector<TestFunction> gs{coord(1, 0, 0.0)};
  ProductCheckReport rep = product_check(left, right, x, y, fs, gs, 0.25, rule);

  CHECK_FALSE(rep.vacuous);
  CHECK(rep.full.matrix.rows() == 2);
  CHECK(rep.full.basis == "at-scale");
  CHECK(rep.mixed_max_abs <= 1e-8);
  CHECK(rep.left.matrix(0, 0) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(rep.right.matrix(0, 0) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(rep.diagonal_gap <= 1e-8);
  // the proof's centering clause, run both ways instead of assumed: a
  // constant shift of a coordinate leaves the mixed coefficient untouched
  CHECK(rep.centering_gap <= 1e-9);
  CHECK(rep.block_diagonal);
  CHECK(rep.factor_match);
  CHECK(rep.pass);

  std::vector<TestFunction> fs2{coord(1, 0, 0.0), tf_make(1, 1.0, "sin(y1)", [](const Point& q) {
                                  return std::sin(q[0]);
                                })};
  ProductCheckReport wide = product_check(left, right, x, y, fs2, gs, 0.25, rule);
  CHECK(wide.full.matrix.rows() == 3);
  CHECK(wide.mixed_max_abs <= 1e-8);
  CHECK(wide.diagonal_gap <= 1e-8);
  CHECK(wide.pass);

  ProductCheckReport empty = product_check(left, right, x, y, {}, {}, 0.25, rule);
  CHECK(empty.vacuous);
  CHECK(empty.pass);
}

TEST_CASE("product check: cylinder mixed entries vanish") {
  auto left = make_gaussian_probe(1);
  auto right = make_circle_probe();
  Point x{0.3}, y{0.7};
  std::vector<TestFunction> fs{coord(1, 0, 0.3)};
  std::vector<TestFunction> gs{tf_make(1, 1.0, "sin(theta-0.7)", [](const Point& q) {
    return std::sin(q[0] - 0.7);
  })};
  ProductCheckReport rep =
      product_check(left, right, x, y, fs, gs, 0.1, QuadratureRule::gauss_hermite(48));
  CHECK(rep.mixed_max_abs <= 1e-8);
  CHECK(rep.left.matrix(0, 0) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(rep.right.matrix(0, 0) > 0.0);
  CHECK(rep.diagonal_gap <= 1e-8);
  CHECK(rep.pass);
}

TEST_CASE("pushforward transport: identity, affine, cubic") {
  auto base = make_gaussian_probe(1);
  Point x{0.1};
  auto rule = QuadratureRule::gauss_hermite(64);
  std::vector<double> ts{-0.3, -0.1, 0.1, 0.3};
  std::vector<double> eps{0.25, 0.0625};
  TestFunction phi = tf_make(1, 1.0, "sin(w)", [](const Point& w) { return std::sin(w[0]); });

  MapSpec ident;
  ident.forward = [](const Point& z) { return z; };
  ident.inverse = [](const Point& w) { return w; };
  ident.inverse_jacobian = [](const Point&) {
    Matrix j(1, 1);
    j(0, 0) = 1.0;
    return j;
  };
  PushforwardCheckReport r0 = pushforward_check(base, x, ident, {phi}, ts, eps, rule);
  CHECK(r0.independent_routes);
  CHECK(r0.max_gap <= 1e-12);
  CHECK(r0.pass);
  CHECK(r0.samples.size() == ts.size() * eps.size());

  MapSpec affine;
  affine.forward = [](const Point& z) { return Point{2.0 * z[0] + 1.0}; };
  affine.inverse = [](const Point& w) { return Point{(w[0] - 1.0) / 2.0}; };
  affine.inverse_jacobian = [](const Point&) {
    Matrix j(1, 1);
    j(0, 0) = 0.5;
    return j;
  };
  PushforwardCheckReport r1 = pushforward_check(base, x, affine, {phi}, ts, eps, rule);
  CHECK(r1.max_gap <= 1e-8);
  CHECK(r1.pass);

  auto cubic_inv = [](const Point& w) {
    double z = w[0];
    for (int it = 0; it < 60; ++it) z -= (z + z * z * z / 10.0 - w[0]) / (1.0 + 0.3 * z * z);
    return Point{z};
  };
  MapSpec cubic;
  cubic.forward = [](const Point& z) { return Point{z[0] + z[0] * z[0] * z[0] / 10.0}; };
  cubic.inverse = cubic_inv;
  cubic.inverse_jacobian = [cubic_inv](const Point& w) {
    double z = cubic_inv(w)[0];
    Matrix j(1, 1);
    j(0, 0) = 1.0 / (1.0 + 0.3 * z * z);
    return j;
  };
  TestFunction bump = tf_make(1, 1.0, "bump(w)", [](const Point& w) { return bump_profile(w[0]); });
  // the bump's support edge is smooth but non-analytic, which stalls fixed-order
  // Gauss-Hermite around 1e-7; adaptive panels resolve it on both sides (the two
  // sides still integrate against different densities, so the routes stay separate)
  PushforwardCheckReport r2 =
      pushforward_check(base, x, cubic, {bump}, ts, {0.0625, 0.015625}, QuadratureRule::adaptive());
  CHECK(r2.max_gap <= 1e-8);
  CHECK(r2.pass);

  // Monte Carlo: deliberately decorrelated streams on the two sides, so the
  // identity is checked statistically rather than replayed
  PushforwardCheckReport rmc =
      pushforward_check(base, x, affine, {phi}, ts, {0.25}, QuadratureRule::monte_carlo(65536, 77));
  CHECK(rmc.independent_routes);
  CHECK(rmc.max_gap > 0.0);
  CHECK(rmc.pass);
  for (const auto& s : rmc.samples) CHECK(s.allowed > 0.0);

  CHECK_THROWS_AS(pushforward_check(base, x, affine, {}, ts, eps, rule), InputError);
  CHECK_THROWS_AS(pushforward_check(base, x, affine, {phi}, {}, eps, rule), InputError);
}

TEST_CASE("submanifold restriction: conditioning onto a line") {
  auto ambient = make_gaussian_probe(2);
  auto intrinsic = make_gaussian_probe(1);
  Point x{0.3, 0.0};
  std::vector<TestFunction> funcs{coord(2, 0, 0.3)};
  auto rule = QuadratureRule::gauss_hermite(48);
  std::vector<double> deltas{0.5, 0.25, 0.125};

  SubmanifoldCheckReport rep =
      submanifold_check(ambient, deltas, intrinsic, x, funcs, 1, 0.25, rule);
  REQUIRE(rep.per_delta.size() == 3);
  // the slab marginal factorizes for an axis-aligned Gaussian, so every
  // conditioned coefficient already equals the intrinsic one
  for (const auto& g : rep.per_delta)
    CHECK(g.matrix(0, 0) == doctest::Approx(0.25).epsilon(1e-8));
  CHECK(rep.extrapolated(0, 0) == doctest::Approx(0.25).epsilon(1e-7));
  CHECK(rep.intrinsic.matrix(0, 0) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(rep.max_gap <= 1e-3);
  REQUIRE(rep.ambient_gram.pd.has_value());
  CHECK(*rep.ambient_gram.pd);
  CHECK(rep.principal_block_pd);
  CHECK(rep.principal_pd_consistent);
  CHECK(rep.pass);

  // a slab far wider than the probe's reach is no restriction at all
  SubmanifoldCheckReport wide =
      submanifold_check(ambient, {50.0, 25.0}, intrinsic, x, funcs, 1, 0.25, rule);
  InformationGram free_gram = gram_at_scale(*ambient, x, funcs, 0.25, rule);
  CHECK(std::fabs(wide.per_delta[0].matrix(0, 0) - free_gram.matrix(0, 0)) <= 1e-10);

  CHECK_THROWS_AS(submanifold_check(ambient, deltas, intrinsic, Point{0.3, 0.05}, funcs, 1, 0.25, rule),
                  InputError);
  CHECK_THROWS_AS(submanifold_check(ambient, deltas, intrinsic, x, {coord(2, 1, 0.0)}, 1, 0.25, rule),
                  InputError);
  CHECK_THROWS_AS(submanifold_check(ambient, {0.25, 0.5}, intrinsic, x, funcs, 1, 0.25, rule),
                  InputError);
  CHECK_THROWS_AS(submanifold_check(ambient, deltas, make_gaussian_probe(2), x, funcs, 1, 0.25, rule),
                  InputError);
}

TEST_CASE("rank classification against the finite-difference oracle") {
  auto rule = QuadratureRule::gauss_hermite(48);
  GramOptions opt;

  // circle winding into the plane: rank one everywhere, an immersion
  {
    auto dom = make_circle_probe();
    Point th{0.4};
    MapSpec emb;
    emb.forward = [](const Point& t) { return Point{std::cos(t[0]), std::sin(t[0])}; };
    std::vector<TestFunction> dchart{tf_make(1, M_PI, "theta-0.4", [](const Point& t) {
      return wrap_to_pi(t[0] - 0.4);
    })};
    std::vector<TestFunction> cchart{coord(2, 0, std::cos(0.4)), coord(2, 1, std::sin(0.4))};
    MapRankReport rep = rank_classify(dom, th, emb, 2, dchart, cchart, rule, opt);
    CHECK(rep.pullback.basis == "scale-normalized");
    CHECK(rep.pullback.reliable);
    CHECK(rep.rank == 1);
    CHECK(rep.jacobian_rank == 1);
    CHECK(rep.ranks_agree);
    CHECK(rep.classification == "immersion");
    // the pulled-back quadratic form is the embedding's first fundamental
    // form: trace = |d/dtheta (cos, sin)|^2 = 1
    CHECK(rep.pullback.matrix.trace() == doctest::Approx(1.0).epsilon(1e-5));
  }

  // plane onto a line: a submersion
  {
    auto dom = make_gaussian_probe(2);
    Point x{0.2, 0.5};
    MapSpec proj;
    proj.forward = [](const Point& y) { return Point{y[0]}; };
    std::vector<TestFunction> dchart{coord(2, 0, 0.2), coord(2, 1, 0.5)};
    std::vector<TestFunction> cchart{coord(1, 0, 0.2)};
    MapRankReport rep = rank_classify(dom, x, proj, 1, dchart, cchart, rule, opt);
    CHECK(rep.rank == 1);
    CHECK(rep.jacobian_rank == 1);
    CHECK(rep.classification == "submersion");
  }

  // invertible affine plane map: both at once
  {
    auto dom = make_gaussian_probe(2);
    Point x{0.0, 0.0};
    MapSpec aff;
    aff.forward = [](const Point& y) {
      return Point{y[0] + 0.5 * y[1] + 0.1, y[1] - y[0] + 0.2};
    };
    std::vector<TestFunction> dchart{coord(2, 0, 0.0), coord(2, 1, 0.0)};
    std::vector<TestFunction> cchart{coord(2, 0, 0.1), coord(2, 1, 0.2)};
    MapRankReport rep = rank_classify(dom, x, aff, 2, dchart, cchart, rule, opt);
    CHECK(rep.rank == 2);
    CHECK(rep.jacobian_rank == 2);
    CHECK(rep.classification == "local-diffeo");

    MapSpec collapse;
    collapse.forward = [](const Point& y) { return Point{y[0], y[0]}; };
    std::vector<TestFunction> cchart2{coord(2, 0, 0.0), coord(2, 1, 0.0)};
    MapRankReport bad = rank_classify(dom, x, collapse, 2, dchart, cchart2, rule, opt);
    CHECK(bad.rank == 1);
    CHECK(bad.jacobian_rank == 1);
    CHECK(bad.ranks_agree);
    CHECK(bad.classification == "degenerate");

    std::vector<TestFunction> offcenter{coord(2, 0, 0.4), coord(2, 1, 0.2)};
    CHECK_THROWS_AS(rank_classify(dom, x, aff, 2, dchart, offcenter, rule, opt), InputError);
    CHECK_THROWS_AS(rank_classify(dom, x, aff, 2, {dchart[0]}, cchart, rule, opt), InputError);
  }
}

TEST_CASE("stability sweep over shrinking variance scales") {
  Point x{0.0};
  std::vector<TestFunction> funcs{coord(1, 0, 0.0)};
  auto rule = QuadratureRule::gauss_hermite(48);
  std::vector<ProbePtr> seq;
  for (int k = 0; k < 5; ++k)
    seq.push_back(make_gaussian_probe(1, Matrix::diag({1.0 + std::pow(2.0, -k)})));
  auto limit = make_gaussian_probe(1);

  StabilityTrace tr = stability_sweep(seq, limit, x, funcs, 0.25, rule);
  CHECK(tr.eps == 0.25);
  CHECK(tr.limit_pd);
  REQUIRE(tr.min_eigs.size() == 5);
  for (int k = 0; k < 5; ++k) {
    double expect = 0.25 * (1.0 + std::pow(2.0, -k));
    CHECK(tr.min_eigs[static_cast<size_t>(k)] == doctest::Approx(expect).epsilon(1e-9));
    // gap to the limit shrinks geometrically: bounded by C 2^{-k} with C
    // barely above the exact constant 0.25
    CHECK(tr.gap_to_limit[static_cast<size_t>(k)] <= 0.26 * std::pow(2.0, -k));
    CHECK(tr.gap_to_limit[static_cast<size_t>(k)] ==
          doctest::Approx(0.25 * std::pow(2.0, -k)).epsilon(1e-7));
  }
  CHECK(tr.k0 == 0);

  std::vector<ProbePtr> constant{limit, limit, limit};
  StabilityTrace flat = stability_sweep(constant, limit, x, funcs, 0.25, rule);
  CHECK(flat.k0 == 0);
  for (double gap : flat.gap_to_limit) CHECK(gap <= 1e-15);

  // k = 0 member flattened onto a line: the two coordinates become
  // proportional there and positivity only starts at k = 1
  Point x2{0.0, 0.0};
  std::vector<TestFunction> pair{coord(2, 0, 0.0), coord(2, 1, 0.0)};
  auto flat2 = make_gaussian_probe(2, Matrix::diag({1.0, 1e-12}));
  auto iso2 = make_gaussian_probe(2);
  StabilityTrace deg = stability_sweep({flat2, iso2, iso2, iso2}, iso2, x2, pair, 0.25, rule);
  REQUIRE(deg.per_k[0].pd.has_value());
  CHECK_FALSE(*deg.per_k[0].pd);
  CHECK(deg.k0 == 1);

  CHECK_THROWS_AS(stability_sweep({limit, limit}, limit, x, funcs, 0.25, rule), InputError);
}

TEST_CASE("rigidity: continuous battery cannot separate probe shapes") {
  auto iso = make_gaussian_probe(2);
  auto aniso = make_gaussian_probe(2, Matrix::diag({1.0, 4.0}));
  Point pt{0.3, -0.2};
  auto rule = QuadratureRule::gauss_hermite(48);

  // limits of continuous observables are f(x)^2 under any concentrating
  // probe, so these two batteries agree no matter the shape
  std::vector<TestFunction> smooth{tf_add(coord(2, 0, 0.0), tf_constant(2, 0.5)),
                                   tf_mul(coord(2, 0, 0.0), coord(2, 1, 0.0))};
  RigidityReport same = rigidity_compare(iso, aniso, smooth, {pt}, rule);
  CHECK(same.verdict == "indistinguishable");
  CHECK(same.max_discrepancy <= 1e-5);
  CHECK(same.warnings.empty());

  // direction coordinates see the shape: sphere average 1/2 vs elliptical
  // average; the discrepancy is two orders above the threshold
  std::vector<TestFunction> dir{directional(2, 0, pt)};
  RigidityReport split = rigidity_compare(iso, aniso, dir, {pt}, rule);
  CHECK(split.verdict == "distinct");
  CHECK(split.max_discrepancy > 0.15);
  CHECK(split.max_discrepancy < 0.2);
  CHECK(split.per_function_gap[0] == split.max_discrepancy);

  // Monte Carlo pins the elliptical average to its oracle: diag(1,4) gives
  // E[u1^2] = 1/3 (8e6-draw numpy oracle and the closed form 1/(1+c) with
  // c = 2 the standard-deviation ratio), so the gap is 1/2 - 1/3 = 1/6
  RigidityReport mc =
      rigidity_compare(iso, aniso, dir, {pt}, QuadratureRule::monte_carlo(65536, 7));
  CHECK(mc.verdict == "distinct");
  CHECK(mc.max_discrepancy == doctest::Approx(1.0 / 6.0).epsilon(0.05));

  RigidityReport refl = rigidity_compare(iso, iso, dir, {pt}, rule);
  CHECK(refl.verdict == "indistinguishable");
  CHECK(refl.max_discrepancy <= 1e-12);

  RigidityReport ab = rigidity_compare(iso, aniso, dir, {pt}, rule);
  RigidityReport ba = rigidity_compare(aniso, iso, dir, {pt}, rule);
  CHECK(ab.max_discrepancy == ba.max_discrepancy);
  CHECK(ab.verdict == ba.verdict);

  RigidityReport vac = rigidity_compare(iso, aniso, dir, {}, rule);
  CHECK(vac.verdict == "indistinguishable");
  REQUIRE_FALSE(vac.warnings.empty());

  CHECK_THROWS_AS(rigidity_compare(iso, aniso, {}, {pt}, rule), InputError);
  CHECK_THROWS_AS(rigidity_compare(iso, make_gaussian_probe(3), dir, {pt}, rule), InputError);
}

TEST_CASE("non-convergent limits withhold the PD verdict") {
  // sin(log y^2) keeps oscillating along every eps ladder: the small-scale
  // limit genuinely does not exist and the machinery must say so
  TestFunction osc = tf_make(1, 1.0, "sin(log(y^2))", [](const Point& y) {
    return std::sin(std::log(y[0] * y[0] + 1e-300));
  });
  auto p = make_gaussian_probe(1);
  InformationGram g = gram_matrix(*p, Point{0.0}, {osc}, QuadratureRule::gauss_hermite(64));
  CHECK_FALSE(g.reliable);
  CHECK_FALSE(g.pd.has_value());
  CHECK_FALSE(std::isfinite(g.matrix(0, 0)));

  auto p2 = make_gaussian_probe(1, Matrix::diag({4.0}));
  RigidityReport rep =
      rigidity_compare(p, p2, {osc}, {Point{0.0}}, QuadratureRule::gauss_hermite(64));
  REQUIRE_FALSE(rep.warnings.empty());
  CHECK(rep.warnings[0].find("did not converge") != std::string::npos);
  CHECK_FALSE(std::isfinite(rep.per_function_gap[0]));
  CHECK(rep.max_discrepancy == 0.0);
}

TEST_CASE("low-discrepancy sampler is deterministic and in-box") {
  std::vector<std::pair<double, double>> box{{-1.0, 2.0}, {0.0, 0.5}};
  auto a = low_discrepancy_points(box, 64);
  auto b = low_discrepancy_points(box, 64);
  REQUIRE(a.size() == 64);
  CHECK(a == b);
  for (const auto& pt : a) {
    CHECK(pt[0] >= -1.0);
    CHECK(pt[0] <= 2.0);
    CHECK(pt[1] >= 0.0);
    CHECK(pt[1] <= 0.5);
  }
  // base-2 first axis spreads dyadically: the first point is the midpoint
  CHECK(a[0][0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(low_discrepancy_points({}, 8), InputError);
}
