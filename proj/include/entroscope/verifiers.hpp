#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "entroscope/entropy.hpp"
#include "entroscope/linalg.hpp"
#include "entroscope/probes.hpp"
#include "entroscope/test_function.hpp"

namespace entroscope {

// Gram matrix of entropy coefficients for a tuple of observables. Three
// bases are produced by the builders below and recorded in `basis`:
//   "limit"            entries are eps -> 0 small-scale coefficients
//   "at-scale"         entries are t-limits at one fixed eps
//   "scale-normalized" entries are eps -> 0 limits of (per-eps value) / eps;
//                      centered continuous tuples have identically-zero
//                      "limit" Grams, and dividing by the scale first
//                      recovers the derivative-level quadratic form
struct InformationGram {
  Point x;
  std::vector<std::string> labels;
  std::string basis;
  double eps = 0.0;  // the scale for "at-scale"; 0 for extrapolated bases
  Matrix matrix;     // k x k, symmetric by construction (mirrored upper triangle)
  double min_eig = 0.0;
  double pd_margin = 0.0;  // absolute margin the PD verdict used
  // withheld (nullopt) when any entry failed to converge
  std::optional<bool> pd;
  bool reliable = false;
  // upper triangle, row-major (i <= j); see entry()
  std::vector<CoefficientEstimate> entries;

  const CoefficientEstimate& entry(int i, int j) const;
};

struct GramOptions {
  std::vector<double> eps_schedule;  // empty = default_eps_schedule()
  double rel_tol = 1e-6;
  // PD := min eigenvalue > margin_factor * mean |diagonal|; the relative
  // margin separates genuine degeneracy from roundoff across scales
  double pd_margin_factor = 1e-8;
};

InformationGram gram_matrix(const ProbeFamily& p, const Point& x,
                            const std::vector<TestFunction>& funcs, const QuadratureRule& rule,
                            const GramOptions& opt = {});

InformationGram gram_at_scale(const ProbeFamily& p, const Point& x,
                              const std::vector<TestFunction>& funcs, double eps,
                              const QuadratureRule& rule, const GramOptions& opt = {});

InformationGram gram_scale_normalized(const ProbeFamily& p, const Point& x,
                                      const std::vector<TestFunction>& funcs,
                                      const QuadratureRule& rule, const GramOptions& opt = {});

// ---------------------------------------------------------------------------

struct ChartOptions {
  int injectivity_samples = 256;  // deterministic low-discrepancy sample size
  int nearby_gram_points = 8;
  double center_tol = 1e-10;
  double separation_floor = 1e-10;  // image distance below this fails injectivity
  GramOptions gram;
};

struct ChartReport {
  std::vector<std::string> labels;
  bool centered = false;
  double max_center_deviation = 0.0;

  int pairs_tested = 0;
  double min_image_separation = 0.0;  // over distinct low-discrepancy inputs
  bool injective = false;

  // Gram evidence. The raw small-scale Gram at the base point decides the
  // tier: PD -> "limit" Grams everywhere; zero-to-tolerance (the generic
  // case for centered continuous tuples) -> "scale-normalized" Grams with
  // the tuple re-centered at each sample point; anything else is already
  // degenerate. gram_at_samples[0] is at x, the rest at nearby points.
  InformationGram center_limit_gram;
  std::string gram_basis;
  std::vector<InformationGram> gram_at_samples;
  bool grams_pd = false;

  // entropy-chart | degenerate-gram | non-injective | not-centered
  std::string verdict;
};

// sample_region: per-coordinate [lo, hi] box, must contain x
ChartReport chart_check(const ProbeFamily& p, const Point& x,
                        const std::vector<TestFunction>& funcs,
                        const std::vector<std::pair<double, double>>& sample_region,
                        const QuadratureRule& rule, const ChartOptions& opt = {});

// ---------------------------------------------------------------------------

struct ProductCheckReport {
  InformationGram full;   // (k+l) x (k+l) on the product probe, at-scale basis
  InformationGram left;   // k x k on the left factor
  InformationGram right;  // l x l on the right factor
  double mixed_max_abs = 0.0;
  double diagonal_gap = 0.0;   // max |full diagonal block - factor Gram| entrywise
  // the first mixed coefficient with each factor's centering dropped in turn,
  // against the fully centered value: once one side is centered, the other
  // side's constant shift must not move the coefficient
  double centering_gap = 0.0;
  bool block_diagonal = false;
  bool factor_match = false;
  bool vacuous = false;  // k = l = 0
  bool pass = false;
  double tol = 0.0;
};

ProductCheckReport product_check(const ProbePtr& left, const ProbePtr& right, const Point& x,
                                 const Point& y, const std::vector<TestFunction>& fs,
                                 const std::vector<TestFunction>& gs, double eps,
                                 const QuadratureRule& rule, double tol = 1e-8);

// ---------------------------------------------------------------------------

struct PushforwardCheckReport {
  struct Sample {
    int phi_index = 0;
    double t = 0.0;
    double eps = 0.0;
    double image_ent = 0.0;  // response under the mapped probe at F(x)
    double base_ent = 0.0;   // response of the pulled-back observable at x
    double gap = 0.0;
    double allowed = 0.0;
    bool pass = false;
  };
  std::vector<Sample> samples;
  double max_gap = 0.0;
  // the two sides must be computed by genuinely different routes for the
  // identity to be informative; false when the engine had to reuse the
  // mapped-node transport on both sides (multi-dim deterministic rules)
  bool independent_routes = false;
  bool pass = false;
};

PushforwardCheckReport pushforward_check(const ProbePtr& base, const Point& x, const MapSpec& map,
                                         const std::vector<TestFunction>& phis,
                                         const std::vector<double>& t_grid,
                                         const std::vector<double>& eps_list,
                                         const QuadratureRule& rule);

// ---------------------------------------------------------------------------

struct SubmanifoldCheckReport {
  std::vector<double> deltas;
  std::vector<InformationGram> per_delta;  // conditioned Grams, at-scale basis
  Matrix extrapolated;                     // polynomial extrapolation to delta = 0
  InformationGram intrinsic;
  double max_gap = 0.0;  // |extrapolated - intrinsic| entrywise max

  // ambient Gram of funcs plus the normal coordinate; PD must survive
  // restriction to the leading funcs-block
  InformationGram ambient_gram;
  bool principal_block_pd = false;
  bool principal_pd_consistent = false;

  bool pass = false;
  double tol = 0.0;
};

// funcs must depend only on the unconstrained coordinates (spot-checked);
// x must sit on the constrained set (x[axis] = 0)
SubmanifoldCheckReport submanifold_check(const ProbePtr& ambient, const std::vector<double>& deltas,
                                         const ProbePtr& intrinsic, const Point& x,
                                         const std::vector<TestFunction>& funcs,
                                         int constrained_axis, double eps,
                                         const QuadratureRule& rule, double tol = 1e-3);

// ---------------------------------------------------------------------------

struct MapRankReport {
  Point x;
  Point image;  // F(x)
  // scale-normalized Gram of the pulled-back codomain chart {g_j . F}
  // under the domain probe
  InformationGram pullback;
  int rank = 0;
  Matrix jacobian;        // finite-difference Jacobian of y -> (g_j(F(y)))
  int jacobian_rank = 0;  // the independent oracle
  bool ranks_agree = false;
  int domain_dim = 0;
  int codomain_dim = 0;
  // immersion | submersion | local-diffeo | degenerate
  std::string classification;
};

// rank_tol applies to the Gram's singular values; the Gram is a squared
// object, so 1e-4 here corresponds to a 1e-2 singular-value ratio on the
// underlying differential
MapRankReport rank_classify(const ProbePtr& domain_probe, const Point& x, const MapSpec& map,
                            int codomain_dim, const std::vector<TestFunction>& domain_chart,
                            const std::vector<TestFunction>& codomain_chart,
                            const QuadratureRule& rule, const GramOptions& opt = {},
                            double rank_tol = 1e-4);

// ---------------------------------------------------------------------------

struct StabilityTrace {
  std::vector<InformationGram> per_k;  // at the reference scale, index = k
  InformationGram limit;
  std::vector<double> min_eigs;
  std::vector<double> gap_to_limit;  // max-abs entrywise distance
  double eps = 0.0;
  bool limit_pd = false;
  // smallest k with PD for all tested k' >= k and at the limit; -1 when no
  // trailing all-PD run exists. The tested range is finite: k0 is evidence
  // over [0, len), not a proof about the tail.
  int k0 = -1;
};

StabilityTrace stability_sweep(const std::vector<ProbePtr>& sequence, const ProbePtr& limit,
                               const Point& x, const std::vector<TestFunction>& funcs, double eps,
                               const QuadratureRule& rule, const GramOptions& opt = {});

// ---------------------------------------------------------------------------

struct RigidityReport {
  std::vector<std::string> battery;
  std::vector<Point> points;
  // limits, not eps-level values: |I1_x(f) - I2_x(f)| maximized over
  // battery x points; non-converged entries are excluded with a warning
  double max_discrepancy = 0.0;
  std::vector<double> per_function_gap;  // max over points; NaN = fully excluded
  std::vector<std::string> warnings;
  double threshold = 0.0;
  std::string verdict;  // indistinguishable | distinct
};

RigidityReport rigidity_compare(const ProbePtr& p1, const ProbePtr& p2,
                                const std::vector<TestFunction>& battery,
                                const std::vector<Point>& points, const QuadratureRule& rule,
                                const GramOptions& opt = {}, double threshold = 1e-4);

// deterministic low-discrepancy points in a box (van der Corput radical
// inverse per axis, prime bases); index i = 1..n
std::vector<Point> low_discrepancy_points(const std::vector<std::pair<double, double>>& box,
                                          int count);

}  // namespace entroscope
