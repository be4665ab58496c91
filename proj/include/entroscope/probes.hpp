#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "entroscope/linalg.hpp"
#include "entroscope/quadrature.hpp"
#include "entroscope/rng.hpp"
#include "entroscope/spaces.hpp"

namespace entroscope {

// scenario/construction problems: malformed input, non-PD shape, bad map
struct InputError : std::runtime_error {
  explicit InputError(const std::string& m) : std::runtime_error(m) {}
};

// integrand left the measure's domain (negative ratio, empty slab, ...)
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& m) : std::runtime_error(m) {}
};

struct WeightedNode {
  Point y;
  double w;
};

struct SupportBox {
  bool exact = false;  // true: density is identically zero outside the box
  std::vector<std::pair<double, double>> box;
  // per-coordinate exactness (restricted probes are exact only in the
  // constrained coordinate); empty means "exact" answers for all coordinates
  std::vector<bool> exact_coord;

  bool coord_exact(int i) const {
    if (exact_coord.empty()) return exact;
    return exact_coord[static_cast<size_t>(i)];
  }
};

struct MapSpec {
  std::function<Point(const Point&)> forward;
  std::function<Point(const Point&)> inverse;
  // optional exact Jacobian of `inverse`; finite differences (step 1e-5) otherwise
  std::function<Matrix(const Point&)> inverse_jacobian;
};

enum class MollifierKernel { CosineBump, PolyBump };

// A family of local information probes mu_{x,eps}: probability measures
// concentrating at x as eps -> 0. Instances are immutable and safe to share
// across threads; any internal caching is initialize-once.
class ProbeFamily {
 public:
  virtual ~ProbeFamily() = default;

  const ModelSpace& space() const { return space_; }
  virtual std::string kind_name() const = 0;

  // density of mu_{x,eps} at y w.r.t. the space's reference measure
  virtual double density(const Point& x, double eps, const Point& y) const = 0;

  virtual Point sample(const Point& x, double eps, RngStream& rng) const = 0;

  // deterministic node set integrating against mu_{x,eps}; coarse = true
  // yields the halved-resolution companion used for error estimates
  virtual std::vector<WeightedNode> nodes(const Point& x, double eps, const QuadratureRule& rule,
                                          bool coarse = false) const = 0;

  virtual QuadratureRule native_rule() const = 0;

  virtual SupportBox support(const Point& x, double eps) const = 0;

  virtual void validate_center(const Point& x) const;

 protected:
  explicit ProbeFamily(ModelSpace s) : space_(std::move(s)) {}
  ModelSpace space_;
};

using ProbePtr = std::shared_ptr<const ProbeFamily>;

ProbePtr make_gaussian_probe(int dim, const Matrix& shape);
ProbePtr make_gaussian_probe(int dim);  // identity shape
ProbePtr make_circle_probe();
ProbePtr make_product_probe(const ProbePtr& left, const ProbePtr& right);

// validation_points: base-space points where F_inv(F(y)) = y is checked to 1e-8
ProbePtr make_pushforward_probe(const ProbePtr& base, const MapSpec& map,
                                const std::vector<Point>& validation_points);

ProbePtr make_mollifier_probe(int dim, MollifierKernel kernel);
ProbePtr make_mollifier_probe(int dim, MollifierKernel kernel, const MapSpec& chart);

ProbePtr make_restricted_probe(const ProbePtr& ambient, const ModelSpace& slab);

// truncated-Gaussian circle normalizer on an absolute-angle trapezoid grid;
// mathematically independent of theta, which the verifier checks rather than
// assumes (nodes = 0 picks the eps-scaled count)
double circle_partition(double theta, double eps, int nodes = 0);

// sum_i w_i g(y_i) with pairwise-tree reduction; the workhorse behind
// deterministic-rule integration
double weighted_sum(const std::vector<WeightedNode>& nodes,
                    const std::function<double(const Point&)>& g);

Estimate integrate(const ProbeFamily& p, const Point& x, double eps,
                   const std::function<double(const Point&)>& g, const QuadratureRule& rule);

struct ProbeDiagnostics {
  Estimate mass;
  Point mean;          // first moment (angular coordinates re-wrapped)
  Matrix covariance;   // second central moment in offset coordinates
  std::int64_t evaluations = 0;
};

ProbeDiagnostics probe_diagnostics(const ProbeFamily& p, const Point& x, double eps,
                                   const QuadratureRule& rule);

// finite-difference Jacobian (central, step 1e-5) of an R^n -> R^m map
Matrix fd_jacobian(const std::function<Point(const Point&)>& f, const Point& at, double step = 1e-5);

// determinant of a small square matrix by partial-pivot elimination
double determinant(Matrix m);

}  // namespace entroscope
