#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace entroscope {

using Point = std::vector<double>;

inline double wrap_to_pi(double s) {
  s = std::fmod(s + M_PI, 2.0 * M_PI);
  if (s < 0.0) s += 2.0 * M_PI;
  return s - M_PI;
}

inline double wrap_to_2pi(double s) {
  s = std::fmod(s, 2.0 * M_PI);
  if (s < 0.0) s += 2.0 * M_PI;
  return s;
}

// shortest-arc distance on the unit circle
inline double circle_distance(double a, double b) { return std::fabs(wrap_to_pi(a - b)); }

class ModelSpace {
 public:
  enum class Kind { Euclidean, Circle, Product, Slab };

  static ModelSpace euclidean(int n) {
    if (n < 1 || n > 9) throw std::invalid_argument("euclidean: dimension must be in [1,9]");
    ModelSpace s;
    s.kind_ = Kind::Euclidean;
    s.dim_ = n;
    return s;
  }

  static ModelSpace circle() {
    ModelSpace s;
    s.kind_ = Kind::Circle;
    s.dim_ = 1;
    return s;
  }

  static ModelSpace product(const ModelSpace& a, const ModelSpace& b) {
    ModelSpace s;
    s.kind_ = Kind::Product;
    s.dim_ = a.dim_ + b.dim_;
    s.left_ = std::make_shared<ModelSpace>(a);
    s.right_ = std::make_shared<ModelSpace>(b);
    return s;
  }

  // full-dimensional slab |y_index| <= half_width inside the ambient space
  static ModelSpace slab(const ModelSpace& ambient, int index, double half_width) {
    if (index < 0 || index >= ambient.dim_) throw std::invalid_argument("slab: constraint index out of range");
    if (!(half_width > 0.0)) throw std::invalid_argument("slab: half-width must be positive");
    ModelSpace s;
    s.kind_ = Kind::Slab;
    s.dim_ = ambient.dim_;
    s.ambient_ = std::make_shared<ModelSpace>(ambient);
    s.constraint_index_ = index;
    s.half_width_ = half_width;
    return s;
  }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const ModelSpace& left() const { return *left_; }
  const ModelSpace& right() const { return *right_; }
  const ModelSpace& ambient() const { return *ambient_; }
  int constraint_index() const { return constraint_index_; }
  double half_width() const { return half_width_; }

  bool coordinate_is_angle(int i) const {
    switch (kind_) {
      case Kind::Euclidean: return false;
      case Kind::Circle: return true;
      case Kind::Product: return i < left_->dim_ ? left_->coordinate_is_angle(i)
                                                 : right_->coordinate_is_angle(i - left_->dim_);
      case Kind::Slab: return ambient_->coordinate_is_angle(i);
    }
    return false;
  }

  // coordinate-wise difference honoring angular wrap; the basic offset used by
  // moment diagnostics and support predicates
  Point offset(const Point& y, const Point& x) const {
    Point d(static_cast<size_t>(dim_));
    for (int i = 0; i < dim_; ++i) {
      double raw = y[static_cast<size_t>(i)] - x[static_cast<size_t>(i)];
      d[static_cast<size_t>(i)] = coordinate_is_angle(i) ? wrap_to_pi(raw) : raw;
    }
    return d;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::Euclidean: return "euclidean(" + std::to_string(dim_) + ")";
      case Kind::Circle: return "circle";
      case Kind::Product: return "product(" + left_->describe() + "," + right_->describe() + ")";
      case Kind::Slab:
        return "slab(" + ambient_->describe() + ",index=" + std::to_string(constraint_index_) + ")";
    }
    return "unknown";
  }

 private:
  Kind kind_ = Kind::Euclidean;
  int dim_ = 1;
  std::shared_ptr<ModelSpace> left_, right_, ambient_;
  int constraint_index_ = -1;
  double half_width_ = 0.0;
};

}  // namespace entroscope
