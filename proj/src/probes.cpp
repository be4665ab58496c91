#include "entroscope/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include "entroscope/parallel.hpp"

namespace entroscope {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr std::int64_t kNodeBudget = 3000000;

void check_point_dim(const Point& x, int dim, const char* who) {
  if (static_cast<int>(x.size()) != dim)
    throw InputError(std::string(who) + ": point has dimension " + std::to_string(x.size()) +
                     ", space has dimension " + std::to_string(dim));
}

std::vector<WeightedNode> tensor_nodes(const std::vector<std::vector<WeightedNode>>& factors) {
  std::int64_t total = 1;
  for (const auto& f : factors) {
    total *= static_cast<std::int64_t>(f.size());
    if (total > kNodeBudget) throw InputError("quadrature node budget exceeded (tensor rule too large)");
  }
  std::vector<WeightedNode> out;
  out.reserve(static_cast<size_t>(total));
  std::vector<size_t> idx(factors.size(), 0);
  for (std::int64_t c = 0; c < total; ++c) {
    WeightedNode n;
    n.w = 1.0;
    for (size_t d = 0; d < factors.size(); ++d) {
      const WeightedNode& f = factors[d][idx[d]];
      n.y.insert(n.y.end(), f.y.begin(), f.y.end());
      n.w *= f.w;
    }
    out.push_back(std::move(n));
    for (size_t d = factors.size(); d-- > 0;) {
      if (++idx[d] < factors[d].size()) break;
      idx[d] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------- gaussian

class GaussianProbe : public ProbeFamily {
 public:
  GaussianProbe(int dim, const Matrix& shape) : ProbeFamily(ModelSpace::euclidean(dim)), shape_(shape) {
    if (shape.rows() != dim || shape.cols() != dim)
      throw InputError("gaussian probe: shape matrix is " + std::to_string(shape.rows()) + "x" +
                       std::to_string(shape.cols()) + ", expected " + std::to_string(dim) + "x" +
                       std::to_string(dim));
    if (!shape.is_symmetric(1e-12)) throw InputError("gaussian probe: shape matrix not symmetric");
    if (!cholesky(shape, lower_)) throw InputError("gaussian probe: shape matrix not positive definite");
    det_shape_ = determinant_from_cholesky(lower_);
  }

  std::string kind_name() const override { return "gaussian"; }
  const Matrix& shape() const { return shape_; }
  const Matrix& shape_cholesky() const { return lower_; }

  double density(const Point& x, double eps, const Point& y) const override {
    int n = space_.dim();
    check_point_dim(x, n, "gaussian density");
    check_point_dim(y, n, "gaussian density");
    Point q(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) q[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] - x[static_cast<size_t>(i)];
    Point z = cholesky_solve(lower_, q);
    double quad = 0.0;
    for (int i = 0; i < n; ++i) quad += q[static_cast<size_t>(i)] * z[static_cast<size_t>(i)];
    double norm = std::pow(kTwoPi * eps, -0.5 * n) / std::sqrt(det_shape_);
    return norm * std::exp(-quad / (2.0 * eps));
  }

  Point sample(const Point& x, double eps, RngStream& rng) const override {
    int n = space_.dim();
    Point z(static_cast<size_t>(n));
    for (int i = 0; i < n; i += 2) {
      double a, b;
      rng.normal_pair(a, b);
      z[static_cast<size_t>(i)] = a;
      if (i + 1 < n) z[static_cast<size_t>(i + 1)] = b;
    }
    double s = std::sqrt(eps);
    Point y = x;
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int k = 0; k <= i; ++k) acc += lower_(i, k) * z[static_cast<size_t>(k)];
      y[static_cast<size_t>(i)] += s * acc;
    }
    return y;
  }

  std::vector<WeightedNode> nodes(const Point& x, double eps, const QuadratureRule& rule,
                                  bool coarse) const override {
    int n = space_.dim();
    check_point_dim(x, n, "gaussian nodes");
    int order = rule.order > 0 ? rule.order : 64;
    if (coarse) order = std::max(8, order / 2);
    const Rule1d& gh = gauss_hermite_rule(order);
    double s = std::sqrt(2.0 * eps);
    double wnorm = std::pow(M_PI, -0.5 * n);

    std::int64_t total = 1;
    for (int d = 0; d < n; ++d) {
      total *= order;
      if (total > kNodeBudget) throw InputError("gaussian probe: tensor node budget exceeded");
    }
    std::vector<WeightedNode> out;
    out.reserve(static_cast<size_t>(total));
    std::vector<int> idx(static_cast<size_t>(n), 0);
    for (std::int64_t c = 0; c < total; ++c) {
      WeightedNode node;
      node.y = x;
      node.w = wnorm;
      for (int d = 0; d < n; ++d) {
        double u = gh.x[static_cast<size_t>(idx[static_cast<size_t>(d)])];
        node.w *= gh.w[static_cast<size_t>(idx[static_cast<size_t>(d)])];
        // y += sqrt(2 eps) * L * u e_d accumulated column-wise
        for (int i = d; i < n; ++i) node.y[static_cast<size_t>(i)] += s * lower_(i, d) * u;
      }
      out.push_back(std::move(node));
      for (int d = n; d-- > 0;) {
        if (++idx[static_cast<size_t>(d)] < order) break;
        idx[static_cast<size_t>(d)] = 0;
      }
    }
    return out;
  }

  QuadratureRule native_rule() const override { return QuadratureRule::gauss_hermite(64); }

  SupportBox support(const Point& x, double eps) const override {
    SupportBox sb;
    sb.exact = false;
    int n = space_.dim();
    for (int i = 0; i < n; ++i) {
      double sigma = std::sqrt(eps * shape_(i, i));
      sb.box.emplace_back(x[static_cast<size_t>(i)] - 15.0 * sigma, x[static_cast<size_t>(i)] + 15.0 * sigma);
    }
    return sb;
  }

 private:
  Matrix shape_, lower_;
  double det_shape_ = 1.0;
};

// ------------------------------------------------------------------ circle

int circle_auto_nodes(double eps) {
  double want = std::max(256.0, std::ceil(14.0 / std::sqrt(std::max(eps, 1e-12))));
  int n = 256;
  while (n < want && n < (1 << 22)) n <<= 1;
  return n;
}

class CircleProbe : public ProbeFamily {
 public:
  CircleProbe() : ProbeFamily(ModelSpace::circle()) {}

  std::string kind_name() const override { return "wrapped-gaussian"; }

  double normalizer(double eps) const {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = z_cache_.find(eps);
      if (it != z_cache_.end()) return it->second;
    }
    double z = circle_partition(0.0, eps, 0);
    std::lock_guard<std::mutex> lock(mutex_);
    return z_cache_.emplace(eps, z).first->second;
  }

  double density(const Point& x, double eps, const Point& y) const override {
    check_point_dim(x, 1, "circle density");
    check_point_dim(y, 1, "circle density");
    double d = circle_distance(x[0], y[0]);
    return std::exp(-d * d / (2.0 * eps)) / normalizer(eps);
  }

  Point sample(const Point& x, double eps, RngStream& rng) const override {
    double s = std::sqrt(eps);
    for (int tries = 0; tries < 1000000; ++tries) {
      double a, b;
      rng.normal_pair(a, b);
      if (std::fabs(s * a) <= M_PI) return {wrap_to_2pi(x[0] + s * a)};
      if (std::fabs(s * b) <= M_PI) return {wrap_to_2pi(x[0] + s * b)};
    }
    throw DomainError("circle probe sampler failed to accept (eps too large?)");
  }

  std::vector<WeightedNode> nodes(const Point& x, double eps, const QuadratureRule& rule,
                                  bool coarse) const override {
    check_point_dim(x, 1, "circle nodes");
    std::vector<WeightedNode> out;
    if (rule.kind == RuleKind::PeriodicTrapezoid && rule.nodes > 0) {
      // the user asked for a literal trapezoid grid; respected exactly so that
      // convergence studies see the pre-asymptotic regime
      int n = coarse ? std::max(4, rule.nodes / 2) : rule.nodes;
      double h = kTwoPi / n;
      out.reserve(static_cast<size_t>(n));
      for (int j = 0; j < n; ++j) {
        double s = -M_PI + (j + 0.5) * h;
        Point y{wrap_to_2pi(x[0] + s)};
        out.push_back({y, h * density(x, eps, y)});
      }
      return out;
    }
    // auto mode: composite Gauss-Legendre in the angle offset on [-pi, pi];
    // the integrand is analytic there at every eps (the |offset| = pi kink
    // sits at the interval ends, never inside a panel)
    int panels = std::max(8, static_cast<int>(std::ceil(6.0 / std::sqrt(std::max(eps, 1e-12)))));
    panels = std::min(panels, 4096);
    int order = 16;
    if (coarse) {
      panels = std::max(4, panels / 2);
      order = 8;
    }
    const Rule1d& gl = gauss_legendre_rule(order);
    double hw = M_PI / panels;
    out.reserve(static_cast<size_t>(panels) * gl.x.size());
    for (int p = 0; p < panels; ++p) {
      double center = -M_PI + (2 * p + 1) * hw;
      for (size_t k = 0; k < gl.x.size(); ++k) {
        double s = center + hw * gl.x[k];
        Point y{wrap_to_2pi(x[0] + s)};
        out.push_back({y, hw * gl.w[k] * density(x, eps, y)});
      }
    }
    return out;
  }

  QuadratureRule native_rule() const override { return QuadratureRule::periodic_trapezoid(0); }

  SupportBox support(const Point& x, double /*eps*/) const override {
    SupportBox sb;
    sb.exact = false;
    sb.box.emplace_back(x[0] - M_PI, x[0] + M_PI);
    return sb;
  }

 private:
  mutable std::mutex mutex_;
  mutable std::map<double, double> z_cache_;
};

// ----------------------------------------------------------------- product

class ProductProbe : public ProbeFamily {
 public:
  ProductProbe(ProbePtr left, ProbePtr right)
      : ProbeFamily(ModelSpace::product(left->space(), right->space())),
        left_(std::move(left)),
        right_(std::move(right)) {}

  std::string kind_name() const override { return "product"; }

  double density(const Point& x, double eps, const Point& y) const override {
    check_point_dim(x, space_.dim(), "product density");
    check_point_dim(y, space_.dim(), "product density");
    auto [xl, xr] = split(x);
    auto [yl, yr] = split(y);
    return left_->density(xl, eps, yl) * right_->density(xr, eps, yr);
  }

  Point sample(const Point& x, double eps, RngStream& rng) const override {
    auto [xl, xr] = split(x);
    Point l = left_->sample(xl, eps, rng);
    Point r = right_->sample(xr, eps, rng);
    l.insert(l.end(), r.begin(), r.end());
    return l;
  }

  std::vector<WeightedNode> nodes(const Point& x, double eps, const QuadratureRule& rule,
                                  bool coarse) const override {
    auto [xl, xr] = split(x);
    std::vector<std::vector<WeightedNode>> factors;
    factors.push_back(left_->nodes(xl, eps, rule, coarse));
    factors.push_back(right_->nodes(xr, eps, rule, coarse));
    return tensor_nodes(factors);
  }

  QuadratureRule native_rule() const override { return left_->native_rule(); }

  SupportBox support(const Point& x, double eps) const override {
    auto [xl, xr] = split(x);
    SupportBox l = left_->support(xl, eps);
    SupportBox r = right_->support(xr, eps);
    SupportBox sb;
    sb.exact = l.exact && r.exact;
    sb.box = l.box;
    sb.box.insert(sb.box.end(), r.box.begin(), r.box.end());
    for (int i = 0; i < left_->space().dim(); ++i) sb.exact_coord.push_back(l.coord_exact(i));
    for (int i = 0; i < right_->space().dim(); ++i) sb.exact_coord.push_back(r.coord_exact(i));
    return sb;
  }

  void validate_center(const Point& x) const override {
    auto [xl, xr] = split(x);
    left_->validate_center(xl);
    right_->validate_center(xr);
  }

  const ProbePtr& left_probe() const { return left_; }
  const ProbePtr& right_probe() const { return right_; }

 private:
  std::pair<Point, Point> split(const Point& p) const {
    int nl = left_->space().dim();
    return {Point(p.begin(), p.begin() + nl), Point(p.begin() + nl, p.end())};
  }
  ProbePtr left_, right_;
};

// ------------------------------------------------------------- pushforward

class PushforwardProbe : public ProbeFamily {
 public:
  PushforwardProbe(ProbePtr base, MapSpec map) : ProbeFamily(base->space()), base_(std::move(base)), map_(std::move(map)) {
    for (int i = 0; i < space_.dim(); ++i)
      if (space_.coordinate_is_angle(i))
        throw InputError("pushforward probe: base space must be Euclidean");
  }

  std::string kind_name() const override { return "pushforward"; }

  double density(const Point& z, double eps, const Point& w) const override {
    Point xb = map_.inverse(z);
    Point yb = map_.inverse(w);
    Matrix jac = map_.inverse_jacobian ? map_.inverse_jacobian(w) : fd_jacobian(map_.inverse, w);
    return base_->density(xb, eps, yb) * std::fabs(determinant(jac));
  }

  Point sample(const Point& z, double eps, RngStream& rng) const override {
    return map_.forward(base_->sample(map_.inverse(z), eps, rng));
  }

  std::vector<WeightedNode> nodes(const Point& z, double eps, const QuadratureRule& rule,
                                  bool coarse) const override {
    // integration against F#mu is base integration of the composed integrand:
    // nodes map through F, weights are untouched
    std::vector<WeightedNode> out = base_->nodes(map_.inverse(z), eps, rule, coarse);
    for (auto& n : out) n.y = map_.forward(n.y);
    return out;
  }

  QuadratureRule native_rule() const override { return base_->native_rule(); }

  SupportBox support(const Point& z, double eps) const override {
    SupportBox base_box = base_->support(map_.inverse(z), eps);
    int n = space_.dim();
    SupportBox sb;
    sb.exact = base_box.exact && n == 1;  // a continuous injective 1D map keeps intervals intervals
    sb.box.assign(static_cast<size_t>(n),
                  {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    std::int64_t corners = std::int64_t{1} << n;
    for (std::int64_t c = 0; c < corners; ++c) {
      Point corner(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        corner[static_cast<size_t>(i)] =
            (c >> i) & 1 ? base_box.box[static_cast<size_t>(i)].second : base_box.box[static_cast<size_t>(i)].first;
      Point img = map_.forward(corner);
      for (int i = 0; i < n; ++i) {
        sb.box[static_cast<size_t>(i)].first = std::min(sb.box[static_cast<size_t>(i)].first, img[static_cast<size_t>(i)]);
        sb.box[static_cast<size_t>(i)].second = std::max(sb.box[static_cast<size_t>(i)].second, img[static_cast<size_t>(i)]);
      }
    }
    if (!sb.exact) {
      for (auto& [lo, hi] : sb.box) {
        double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
      }
    }
    return sb;
  }

  const ProbePtr& base_probe() const { return base_; }
  const MapSpec& map() const { return map_; }

 private:
  ProbePtr base_;
  MapSpec map_;
};

// --------------------------------------------------------------- mollifier

double kernel_value(MollifierKernel k, double u) {
  double a = std::fabs(u);
  if (a >= 1.0) return 0.0;
  if (k == MollifierKernel::CosineBump) return 0.5 * (1.0 + std::cos(M_PI * u));
  double q = 1.0 - u * u;
  return q * q;
}

double kernel_normalizer(MollifierKernel k) {
  static std::map<int, double> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(static_cast<int>(k));
  if (it != cache.end()) return it->second;
  const Rule1d& gl = gauss_legendre_rule(64);
  double c = 0.0;
  for (size_t i = 0; i < gl.x.size(); ++i) c += gl.w[i] * kernel_value(k, gl.x[i]);
  return cache.emplace(static_cast<int>(k), c).first->second;
}

class MollifierProbe : public ProbeFamily {
 public:
  MollifierProbe(int dim, MollifierKernel kernel, std::optional<MapSpec> chart)
      : ProbeFamily(ModelSpace::euclidean(dim)), kernel_(kernel), chart_(std::move(chart)) {
    c1_ = kernel_normalizer(kernel_);
  }

  std::string kind_name() const override { return "mollifier"; }

  bool has_chart() const { return chart_.has_value(); }

  Point to_chart(const Point& y) const { return chart_ ? chart_->forward(y) : y; }
  Point from_chart(const Point& u) const { return chart_ ? chart_->inverse(u) : u; }

  double density(const Point& x, double eps, const Point& y) const override {
    int n = space_.dim();
    check_point_dim(x, n, "mollifier density");
    check_point_dim(y, n, "mollifier density");
    Point cx = to_chart(x), cy = to_chart(y);
    double val = 1.0;
    for (int i = 0; i < n; ++i) {
      double u = (cy[static_cast<size_t>(i)] - cx[static_cast<size_t>(i)]) / eps;
      if (std::fabs(u) >= 1.0) return 0.0;  // exact zero outside the declared support
      val *= kernel_value(kernel_, u) / (c1_ * eps);
    }
    if (chart_) val *= std::fabs(determinant(fd_jacobian(chart_->forward, y)));
    return val;
  }

  Point sample(const Point& x, double eps, RngStream& rng) const override {
    int n = space_.dim();
    Point cx = to_chart(x);
    for (int i = 0; i < n; ++i) cx[static_cast<size_t>(i)] += eps * sample_axis(rng.u01());
    return from_chart(cx);
  }

  std::vector<WeightedNode> nodes(const Point& x, double eps, const QuadratureRule& /*rule*/,
                                  bool coarse) const override {
    int n = space_.dim();
    check_point_dim(x, n, "mollifier nodes");
    int panels = coarse ? 2 : 4;
    int order = coarse ? 8 : 16;
    const Rule1d& gl = gauss_legendre_rule(order);
    double hw = 1.0 / panels;
    std::vector<WeightedNode> axis;
    axis.reserve(static_cast<size_t>(2 * panels) * gl.x.size());
    for (int p = 0; p < 2 * panels; ++p) {
      double center = -1.0 + (2 * p + 1) * hw;
      for (size_t k = 0; k < gl.x.size(); ++k) {
        double v = center + hw * gl.x[k];
        axis.push_back({{v}, hw * gl.w[k] * kernel_value(kernel_, v) / c1_});
      }
    }
    std::vector<std::vector<WeightedNode>> factors(static_cast<size_t>(n), axis);
    std::vector<WeightedNode> out = tensor_nodes(factors);
    Point cx = to_chart(x);
    for (auto& node : out) {
      Point u = cx;
      for (int i = 0; i < n; ++i) u[static_cast<size_t>(i)] += eps * node.y[static_cast<size_t>(i)];
      node.y = from_chart(u);
    }
    return out;
  }

  QuadratureRule native_rule() const override { return QuadratureRule::adaptive(); }

  SupportBox support(const Point& x, double eps) const override {
    int n = space_.dim();
    SupportBox sb;
    if (!chart_) {
      sb.exact = true;
      for (int i = 0; i < n; ++i)
        sb.box.emplace_back(x[static_cast<size_t>(i)] - eps, x[static_cast<size_t>(i)] + eps);
      return sb;
    }
    Point cx = to_chart(x);
    sb.exact = false;
    sb.box.assign(static_cast<size_t>(n),
                  {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    std::int64_t corners = std::int64_t{1} << n;
    for (std::int64_t c = 0; c < corners; ++c) {
      Point u = cx;
      for (int i = 0; i < n; ++i) u[static_cast<size_t>(i)] += ((c >> i) & 1 ? eps : -eps);
      Point y = from_chart(u);
      for (int i = 0; i < n; ++i) {
        sb.box[static_cast<size_t>(i)].first = std::min(sb.box[static_cast<size_t>(i)].first, y[static_cast<size_t>(i)]);
        sb.box[static_cast<size_t>(i)].second = std::max(sb.box[static_cast<size_t>(i)].second, y[static_cast<size_t>(i)]);
      }
    }
    for (auto& [lo, hi] : sb.box) {
      double pad = 0.02 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
    return sb;
  }

 private:
  // inverse CDF by bisection; the CDF is strictly increasing on [-1, 1]
  double sample_axis(double p) const {
    double lo = -1.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      if (axis_cdf(mid) < p) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  double axis_cdf(double u) const {
    if (kernel_ == MollifierKernel::CosineBump)
      return (0.5 * (u + 1.0) + std::sin(M_PI * u) / (2.0 * M_PI)) / c1_;
    // integral of (1-v^2)^2 from -1 to u
    double F = u - 2.0 * u * u * u / 3.0 + std::pow(u, 5) / 5.0 + 8.0 / 15.0;
    return F / c1_;
  }

  MollifierKernel kernel_;
  std::optional<MapSpec> chart_;
  double c1_ = 1.0;
};

// -------------------------------------------------------------- restricted

class RestrictedProbe : public ProbeFamily {
 public:
  RestrictedProbe(ProbePtr ambient, const ModelSpace& slab)
      : ProbeFamily(slab), ambient_(std::move(ambient)) {
    const auto* g = dynamic_cast<const GaussianProbe*>(ambient_.get());
    if (!g)
      throw InputError("restricted probe: ambient must be a gaussian probe "
                       "(conditional factorization is what makes the slab surrogate computable)");
    gauss_ = g;
    index_ = slab.constraint_index();
    delta_ = slab.half_width();
    int n = space_.dim();
    const Matrix& shape = gauss_->shape();
    sigma_j2_ = shape(index_, index_);
    if (n > 1) {
      cross_.resize(static_cast<size_t>(n - 1));
      Matrix cond(n - 1, n - 1);
      int r = 0;
      for (int i = 0; i < n; ++i) {
        if (i == index_) continue;
        cross_[static_cast<size_t>(r)] = shape(i, index_) / sigma_j2_;
        int c = 0;
        for (int j = 0; j < n; ++j) {
          if (j == index_) continue;
          cond(r, c) = shape(i, j) - shape(i, index_) * shape(index_, j) / sigma_j2_;
          ++c;
        }
        ++r;
      }
      cond_shape_ = cond;
      if (!cholesky(cond_shape_, cond_lower_))
        throw InputError("restricted probe: conditional shape not positive definite");
      cond_det_ = determinant_from_cholesky(cond_lower_);
    }
  }

  std::string kind_name() const override { return "restricted"; }

  double conditioning_mass(const Point& x, double eps) const {
    double s = std::sqrt(eps * sigma_j2_);
    double xj = x[static_cast<size_t>(index_)];
    double z = 0.5 * (std::erf((delta_ - xj) / (s * M_SQRT2)) - std::erf((-delta_ - xj) / (s * M_SQRT2)));
    if (z < 1e-12) throw DomainError("empty slab: conditioning mass below 1e-12");
    return z;
  }

  double density(const Point& x, double eps, const Point& y) const override {
    check_point_dim(x, space_.dim(), "restricted density");
    check_point_dim(y, space_.dim(), "restricted density");
    if (std::fabs(y[static_cast<size_t>(index_)]) > delta_) return 0.0;  // exact zero off the slab
    return ambient_->density(x, eps, y) / conditioning_mass(x, eps);
  }

  Point sample(const Point& x, double eps, RngStream& rng) const override {
    conditioning_mass(x, eps);  // reject empty slabs up front
    for (int tries = 0; tries < 1000000; ++tries) {
      Point y = ambient_->sample(x, eps, rng);
      if (std::fabs(y[static_cast<size_t>(index_)]) <= delta_) return y;
    }
    throw DomainError("restricted probe sampler: acceptance region too small");
  }

  std::vector<WeightedNode> nodes(const Point& x, double eps, const QuadratureRule& rule,
                                  bool coarse) const override {
    int n = space_.dim();
    check_point_dim(x, n, "restricted nodes");
    double z = conditioning_mass(x, eps);
    double s2 = eps * sigma_j2_;
    double xj = x[static_cast<size_t>(index_)];

    // constrained coordinate: Gauss-Legendre panels against the truncated marginal.
    // Tile only the density's numerical support (|y_j - x_j| <= 9 sigma clipped to the
    // slab) and keep panels at most ~one sigma wide, so a slab much wider than the
    // marginal does not starve the spike of nodes.
    double s = std::sqrt(s2);
    double lo = std::max(-delta_, xj - 9.0 * s);
    double hi = std::min(delta_, xj + 9.0 * s);
    if (!(lo < hi)) {  // center outside the slab: fall back to the whole slab
      lo = -delta_;
      hi = delta_;
    }
    int order = coarse ? 12 : 24;
    double target = coarse ? 2.0 * s : s;
    int panels = std::max(coarse ? 2 : 4, static_cast<int>(std::ceil((hi - lo) / target)));
    panels = std::min(panels, 4096);
    const Rule1d& gl = gauss_legendre_rule(order);
    double hw = (hi - lo) / (2.0 * panels);  // panels tiles of width 2*hw cover [lo, hi]
    std::vector<std::pair<double, double>> marginal;  // (y_j, weight)
    for (int p = 0; p < panels; ++p) {
      double center = lo + (2 * p + 1) * hw;
      for (size_t k = 0; k < gl.x.size(); ++k) {
        double yj = center + hw * gl.x[k];
        double dens = std::exp(-(yj - xj) * (yj - xj) / (2.0 * s2)) / std::sqrt(kTwoPi * s2);
        marginal.emplace_back(yj, hw * gl.w[k] * dens / z);
      }
    }

    std::vector<WeightedNode> out;
    if (n == 1) {
      out.reserve(marginal.size());
      for (auto& [yj, w] : marginal) out.push_back({{yj}, w});
      return out;
    }

    // remaining coordinates: Gauss-Hermite against the conditional gaussian
    int gh_order = rule.order > 0 ? rule.order : 32;
    if (coarse) gh_order = std::max(8, gh_order / 2);
    const Rule1d& gh = gauss_hermite_rule(gh_order);
    int m = n - 1;
    double sc = std::sqrt(2.0 * eps);
    double wnorm = std::pow(M_PI, -0.5 * m);
    std::int64_t inner = 1;
    for (int d = 0; d < m; ++d) {
      inner *= gh_order;
      if (inner * static_cast<std::int64_t>(marginal.size()) > kNodeBudget)
        throw InputError("restricted probe: node budget exceeded");
    }
    out.reserve(marginal.size() * static_cast<size_t>(inner));
    std::vector<int> idx(static_cast<size_t>(m), 0);
    for (auto& [yj, wj] : marginal) {
      std::fill(idx.begin(), idx.end(), 0);
      for (std::int64_t c = 0; c < inner; ++c) {
        Point rest(static_cast<size_t>(m), 0.0);
        double w = wnorm;
        for (int d = 0; d < m; ++d) {
          double u = gh.x[static_cast<size_t>(idx[static_cast<size_t>(d)])];
          w *= gh.w[static_cast<size_t>(idx[static_cast<size_t>(d)])];
          for (int i = d; i < m; ++i) rest[static_cast<size_t>(i)] += sc * cond_lower_(i, d) * u;
        }
        WeightedNode node;
        node.y.resize(static_cast<size_t>(n));
        int r = 0;
        for (int i = 0; i < n; ++i) {
          if (i == index_) {
            node.y[static_cast<size_t>(i)] = yj;
          } else {
            double mean = x[static_cast<size_t>(i)] + cross_[static_cast<size_t>(r)] * (yj - xj);
            node.y[static_cast<size_t>(i)] = mean + rest[static_cast<size_t>(r)];
            ++r;
          }
        }
        node.w = wj * w;
        out.push_back(std::move(node));
        for (int d = m; d-- > 0;) {
          if (++idx[static_cast<size_t>(d)] < gh_order) break;
          idx[static_cast<size_t>(d)] = 0;
        }
      }
    }
    return out;
  }

  QuadratureRule native_rule() const override { return QuadratureRule::gauss_hermite(32); }

  SupportBox support(const Point& x, double eps) const override {
    SupportBox sb = ambient_->support(x, eps);
    sb.exact = false;
    sb.exact_coord.assign(static_cast<size_t>(space_.dim()), false);
    sb.box[static_cast<size_t>(index_)] = {-delta_, delta_};
    sb.exact_coord[static_cast<size_t>(index_)] = true;
    return sb;
  }

  void validate_center(const Point& x) const override {
    check_point_dim(x, space_.dim(), "restricted probe center");
    if (std::fabs(x[static_cast<size_t>(index_)]) > delta_)
      throw InputError("restricted probe: base point lies outside the constrained set");
  }

 private:
  ProbePtr ambient_;
  const GaussianProbe* gauss_ = nullptr;
  int index_ = 0;
  double delta_ = 0.0;
  double sigma_j2_ = 1.0;
  std::vector<double> cross_;
  Matrix cond_shape_, cond_lower_;
  double cond_det_ = 1.0;
};

}  // namespace

// ------------------------------------------------------------ free helpers

void ProbeFamily::validate_center(const Point& x) const { check_point_dim(x, space_.dim(), "probe center"); }

ProbePtr make_gaussian_probe(int dim, const Matrix& shape) {
  return std::make_shared<GaussianProbe>(dim, shape);
}

ProbePtr make_gaussian_probe(int dim) { return std::make_shared<GaussianProbe>(dim, Matrix::identity(dim)); }

ProbePtr make_circle_probe() { return std::make_shared<CircleProbe>(); }

ProbePtr make_product_probe(const ProbePtr& left, const ProbePtr& right) {
  return std::make_shared<ProductProbe>(left, right);
}

ProbePtr make_pushforward_probe(const ProbePtr& base, const MapSpec& map,
                                const std::vector<Point>& validation_points) {
  if (!map.forward || !map.inverse) throw InputError("pushforward probe: map needs forward and inverse");
  if (validation_points.empty())
    throw InputError("pushforward probe: invertibility validation needs sample points");
  double worst = 0.0;
  for (const Point& p : validation_points) {
    Point q = map.inverse(map.forward(p));
    if (q.size() != p.size()) throw InputError("pushforward probe: inverse changes dimension");
    for (size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::fabs(q[i] - p[i]));
  }
  if (worst > 1e-8)
    throw InputError("pushforward probe: map not invertible on the sampled region "
                     "(max round-trip deviation " + std::to_string(worst) + ")");
  return std::make_shared<PushforwardProbe>(base, map);
}

ProbePtr make_mollifier_probe(int dim, MollifierKernel kernel) {
  return std::make_shared<MollifierProbe>(dim, kernel, std::nullopt);
}

ProbePtr make_mollifier_probe(int dim, MollifierKernel kernel, const MapSpec& chart) {
  if (!chart.forward || !chart.inverse) throw InputError("mollifier probe: chart needs forward and inverse");
  return std::make_shared<MollifierProbe>(dim, kernel, chart);
}

ProbePtr make_restricted_probe(const ProbePtr& ambient, const ModelSpace& slab) {
  if (slab.kind() != ModelSpace::Kind::Slab) throw InputError("restricted probe: space is not a slab");
  if (ambient->space().dim() != slab.dim())
    throw InputError("restricted probe: ambient probe dimension does not match the slab");
  return std::make_shared<RestrictedProbe>(ambient, slab);
}

double circle_partition(double theta, double eps, int nodes) {
  if (nodes > 0) {
    // literal trapezoid grid, kept for convergence studies; the arc-distance
    // kink at the antipode caps it at O(h^2 e^{-pi^2/2eps})
    std::vector<double> terms(static_cast<size_t>(nodes));
    for (int j = 0; j < nodes; ++j) {
      double phi = kTwoPi * j / nodes;
      double d = circle_distance(theta, phi);
      terms[static_cast<size_t>(j)] = std::exp(-d * d / (2.0 * eps));
    }
    return pairwise_sum(terms) * kTwoPi / nodes;
  }
  // auto: Gauss-Legendre panels over [theta - pi, theta + pi], where the
  // kernel is analytic in the absolute angle; node placement depends on
  // theta, the value does not, and the verifier checks that rather than
  // assuming it
  int panels = std::min(4096, std::max(8, static_cast<int>(std::ceil(6.0 / std::sqrt(eps)))));
  const Rule1d& gl = gauss_legendre_rule(16);
  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(panels) * gl.x.size());
  double h = kTwoPi / panels;
  for (int p = 0; p < panels; ++p) {
    double a = theta - M_PI + p * h;
    for (size_t i = 0; i < gl.x.size(); ++i) {
      double phi = a + 0.5 * h * (gl.x[i] + 1.0);
      double d = circle_distance(theta, phi);
      terms.push_back(0.5 * h * gl.w[i] * std::exp(-d * d / (2.0 * eps)));
    }
  }
  return pairwise_sum(terms);
}

double weighted_sum(const std::vector<WeightedNode>& nodes, const std::function<double(const Point&)>& g) {
  std::vector<double> terms(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) terms[i] = nodes[i].w * g(nodes[i].y);
  return pairwise_sum(terms);
}

namespace {

Estimate mc_integrate(const ProbeFamily& p, const Point& x, double eps,
                      const std::function<double(const Point&)>& g, const QuadratureRule& rule) {
  std::int64_t n = rule.samples;
  if (n < 2) throw InputError("monte-carlo rule: need at least 2 samples");
  std::int64_t chunks = (n + kMcChunk - 1) / kMcChunk;
  std::vector<double> sums(static_cast<size_t>(chunks), 0.0);
  std::vector<double> sumsqs(static_cast<size_t>(chunks), 0.0);
  std::exception_ptr err = nullptr;
  std::mutex err_mutex;
  parallel_for(static_cast<size_t>(chunks), [&](size_t c) {
    try {
      RngStream rng(rule.mc_seed, static_cast<std::uint64_t>(c));
      std::int64_t lo = static_cast<std::int64_t>(c) * kMcChunk;
      std::int64_t hi = std::min(n, lo + kMcChunk);
      double s = 0.0, s2 = 0.0;
      for (std::int64_t i = lo; i < hi; ++i) {
        double v = g(p.sample(x, eps, rng));
        s += v;
        s2 += v * v;
      }
      sums[c] = s;
      sumsqs[c] = s2;
    } catch (...) {
      std::lock_guard<std::mutex> lk(err_mutex);
      if (!err) err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
  double sum = pairwise_sum(sums);
  double sumsq = pairwise_sum(sumsqs);
  double mean = sum / static_cast<double>(n);
  double var = std::max(0.0, (sumsq - sum * mean) / static_cast<double>(n - 1));
  Estimate e;
  e.value = mean;
  e.error = std::sqrt(var / static_cast<double>(n));
  e.method = rule.method_name();
  e.evaluations = n;
  return e;
}

Estimate adaptive_integrate(const ProbeFamily& p, const Point& x, double eps,
                            const std::function<double(const Point&)>& g, const QuadratureRule& rule) {
  int dim = p.space().dim();
  SupportBox sb = p.support(x, eps);
  if (dim == 1) {
    auto f = [&](double s) {
      Point y{s};
      return g(y) * p.density(x, eps, y);
    };
    Estimate e = adaptive_simpson(f, sb.box[0].first, sb.box[0].second, rule.rel_tol, rule.abs_tol,
                                  rule.max_depth);
    e.method = "adaptive";
    return e;
  }
  if (dim == 2) {
    std::int64_t evals = 0;
    bool inner_ok = true;
    auto outer = [&](double s0) {
      auto f = [&](double s1) {
        Point y{s0, s1};
        return g(y) * p.density(x, eps, y);
      };
      Estimate inner = adaptive_simpson(f, sb.box[1].first, sb.box[1].second, rule.rel_tol * 0.1,
                                        rule.abs_tol * 0.1, rule.max_depth);
      evals += inner.evaluations;
      inner_ok = inner_ok && inner.converged;
      return inner.value;
    };
    Estimate e = adaptive_simpson(outer, sb.box[0].first, sb.box[0].second, rule.rel_tol, rule.abs_tol,
                                  rule.max_depth);
    e.method = "adaptive";
    e.evaluations = evals;
    e.converged = e.converged && inner_ok;
    return e;
  }
  throw InputError("adaptive rule supports dimension <= 2");
}

}  // namespace

Estimate integrate(const ProbeFamily& p, const Point& x, double eps,
                   const std::function<double(const Point&)>& g, const QuadratureRule& rule) {
  if (!(eps > 0.0)) throw InputError("integrate: eps must be positive");
  p.validate_center(x);
  switch (rule.kind) {
    case RuleKind::MonteCarlo:
      return mc_integrate(p, x, eps, g, rule);
    case RuleKind::Adaptive:
      return adaptive_integrate(p, x, eps, g, rule);
    case RuleKind::GaussHermite:
    case RuleKind::PeriodicTrapezoid: {
      std::vector<WeightedNode> full = p.nodes(x, eps, rule, false);
      std::vector<WeightedNode> half = p.nodes(x, eps, rule, true);
      Estimate e;
      e.value = weighted_sum(full, g);
      e.error = std::fabs(e.value - weighted_sum(half, g));
      e.method = p.kind_name() + ":" + rule.method_name();
      e.evaluations = static_cast<std::int64_t>(full.size() + half.size());
      return e;
    }
  }
  throw InputError("integrate: unknown rule kind");
}

ProbeDiagnostics probe_diagnostics(const ProbeFamily& p, const Point& x, double eps,
                                   const QuadratureRule& rule) {
  int n = p.space().dim();
  ProbeDiagnostics d;
  d.mass = integrate(p, x, eps, [](const Point&) { return 1.0; }, rule);
  d.evaluations = d.mass.evaluations;
  const ModelSpace& sp = p.space();
  std::vector<double> m(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Estimate e = integrate(p, x, eps, [&](const Point& y) { return sp.offset(y, x)[static_cast<size_t>(i)]; }, rule);
    m[static_cast<size_t>(i)] = e.value;
    d.evaluations += e.evaluations;
  }
  d.covariance = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      Estimate e = integrate(p, x, eps, [&](const Point& y) {
        Point off = sp.offset(y, x);
        return off[static_cast<size_t>(i)] * off[static_cast<size_t>(j)];
      }, rule);
      double c = e.value - m[static_cast<size_t>(i)] * m[static_cast<size_t>(j)];
      d.covariance(i, j) = c;
      d.covariance(j, i) = c;
      d.evaluations += e.evaluations;
    }
  }
  d.mean = x;
  for (int i = 0; i < n; ++i) {
    d.mean[static_cast<size_t>(i)] += m[static_cast<size_t>(i)];
    if (sp.coordinate_is_angle(i)) d.mean[static_cast<size_t>(i)] = wrap_to_2pi(d.mean[static_cast<size_t>(i)]);
  }
  return d;
}

Matrix fd_jacobian(const std::function<Point(const Point&)>& f, const Point& at, double step) {
  Point probe = at;
  Point f0 = f(at);
  int m = static_cast<int>(f0.size());
  int n = static_cast<int>(at.size());
  Matrix jac(m, n);
  for (int j = 0; j < n; ++j) {
    probe[static_cast<size_t>(j)] = at[static_cast<size_t>(j)] + step;
    Point fp = f(probe);
    probe[static_cast<size_t>(j)] = at[static_cast<size_t>(j)] - step;
    Point fm = f(probe);
    probe[static_cast<size_t>(j)] = at[static_cast<size_t>(j)];
    for (int i = 0; i < m; ++i)
      jac(i, j) = (fp[static_cast<size_t>(i)] - fm[static_cast<size_t>(i)]) / (2.0 * step);
  }
  return jac;
}

double determinant(Matrix m) {
  int n = m.rows();
  if (n != m.cols()) throw std::invalid_argument("determinant: matrix not square");
  double det = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(m(r, col)) > std::fabs(m(piv, col))) piv = r;
    if (m(piv, col) == 0.0) return 0.0;
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(m(piv, c), m(col, c));
      det = -det;
    }
    det *= m(col, col);
    for (int r = col + 1; r < n; ++r) {
      double factor = m(r, col) / m(col, col);
      for (int c = col; c < n; ++c) m(r, c) -= factor * m(col, c);
    }
  }
  return det;
}

}  // namespace entroscope
