#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ikd {

/// A k-dimensional sample stored by the tree. Identity is the coordinate
/// vector; `payload` (e.g. intensity) rides along and is never compared.
template <typename Scalar, int Dim = 3>
struct Point {
  using Vector = Eigen::Matrix<Scalar, Dim, 1>;

  Vector coords = Vector::Zero();
  Scalar payload{0};

  Point() = default;
  explicit Point(const Vector& c, Scalar pay = Scalar(0)) : coords(c), payload(pay) {}

  Scalar operator[](int axis) const { return coords[axis]; }

  EIGEN_MAKE_ALIGNED_OPERATOR_NEW
};

template <typename Scalar, int Dim>
Point<Scalar, Dim> make_point(const Eigen::Matrix<Scalar, Dim, 1>& c, Scalar payload = Scalar(0)) {
  return Point<Scalar, Dim>(c, payload);
}

inline Point<double, 3> make_point(double x, double y, double z) {
  return Point<double, 3>(Eigen::Vector3d(x, y, z));
}

template <typename Scalar, int Dim>
bool same_coords(const Point<Scalar, Dim>& a, const Point<Scalar, Dim>& b) {
  for (int i = 0; i < Dim; ++i) {
    if (a.coords[i] != b.coords[i]) return false;
  }
  return true;
}

template <typename Scalar, int Dim>
bool lex_less(const Point<Scalar, Dim>& a, const Point<Scalar, Dim>& b) {
  for (int i = 0; i < Dim; ++i) {
    if (a.coords[i] < b.coords[i]) return true;
    if (b.coords[i] < a.coords[i]) return false;
  }
  return false;
}

template <typename Scalar, int Dim>
bool is_finite(const Point<Scalar, Dim>& p) {
  for (int i = 0; i < Dim; ++i) {
    if (!std::isfinite(p.coords[i])) return false;
  }
  return true;
}

/// Squared Euclidean distance summed in axis order. Every search path in the
/// library goes through this so results compare bit-for-bit.
template <typename Scalar, int Dim>
Scalar squared_distance(const Eigen::Matrix<Scalar, Dim, 1>& a, const Eigen::Matrix<Scalar, Dim, 1>& b) {
  Scalar sum(0);
  for (int i = 0; i < Dim; ++i) {
    const Scalar d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

template <typename Scalar, int Dim>
Scalar squared_distance(const Point<Scalar, Dim>& a, const Point<Scalar, Dim>& b) {
  return squared_distance<Scalar, Dim>(a.coords, b.coords);
}

/// Axis-aligned box with closed intervals on every axis. Bounds are never
/// inverted; "no box" is expressed with std::optional by callers.
template <typename Scalar, int Dim = 3>
class AlignedBox {
 public:
  using Vector = Eigen::Matrix<Scalar, Dim, 1>;

  AlignedBox() : min_(Vector::Zero()), max_(Vector::Zero()) {}

  AlignedBox(const Vector& lo, const Vector& hi) : min_(lo), max_(hi) {
    for (int i = 0; i < Dim; ++i) {
      if (std::isnan(lo[i]) || std::isnan(hi[i]) || lo[i] > hi[i]) {
        throw std::invalid_argument("AlignedBox: min must not exceed max on any axis");
      }
    }
  }

  /// Degenerate box around a single point.
  explicit AlignedBox(const Vector& p) : min_(p), max_(p) {}

  static AlignedBox unbounded() {
    return AlignedBox(Vector::Constant(-std::numeric_limits<Scalar>::infinity()),
                      Vector::Constant(std::numeric_limits<Scalar>::infinity()));
  }

  static AlignedBox cube(const Vector& lo, Scalar edge) { return AlignedBox(lo, (lo.array() + edge).matrix()); }

  const Vector& min() const { return min_; }
  const Vector& max() const { return max_; }
  Scalar min(int axis) const { return min_[axis]; }
  Scalar max(int axis) const { return max_[axis]; }

  Vector center() const { return ((min_ + max_) / Scalar(2)).eval(); }

  bool contains(const Vector& p) const {
    for (int i = 0; i < Dim; ++i) {
      if (p[i] < min_[i] || p[i] > max_[i]) return false;
    }
    return true;
  }
  bool contains(const Point<Scalar, Dim>& p) const { return contains(p.coords); }

  bool contains(const AlignedBox& other) const {
    for (int i = 0; i < Dim; ++i) {
      if (other.min_[i] < min_[i] || other.max_[i] > max_[i]) return false;
    }
    return true;
  }

  bool intersects(const AlignedBox& other) const {
    for (int i = 0; i < Dim; ++i) {
      if (other.max_[i] < min_[i] || other.min_[i] > max_[i]) return false;
    }
    return true;
  }

  /// True when `other` lies in the open interior of this box.
  bool strictly_contains(const AlignedBox& other) const {
    for (int i = 0; i < Dim; ++i) {
      if (!(other.min_[i] > min_[i] && other.max_[i] < max_[i])) return false;
    }
    return true;
  }

  void extend(const Vector& p) {
    min_ = min_.cwiseMin(p);
    max_ = max_.cwiseMax(p);
  }
  void extend(const AlignedBox& other) {
    min_ = min_.cwiseMin(other.min_);
    max_ = max_.cwiseMax(other.max_);
  }

  void clamp_max(int axis, Scalar value) { max_[axis] = std::min(max_[axis], value); }
  void clamp_min(int axis, Scalar value) { min_[axis] = std::max(min_[axis], value); }

  /// Squared distance from p to the nearest point of the box (0 inside).
  Scalar squared_distance(const Vector& p) const {
    Scalar sum(0);
    for (int i = 0; i < Dim; ++i) {
      Scalar d(0);
      if (p[i] < min_[i]) {
        d = min_[i] - p[i];
      } else if (p[i] > max_[i]) {
        d = p[i] - max_[i];
      }
      sum += d * d;
    }
    return sum;
  }

  bool operator==(const AlignedBox& other) const { return min_ == other.min_ && max_ == other.max_; }

  EIGEN_MAKE_ALIGNED_OPERATOR_NEW

 private:
  Vector min_;
  Vector max_;
};

using Point3f = Point<float, 3>;
using Point3d = Point<double, 3>;
using Box3f = AlignedBox<float, 3>;
using Box3d = AlignedBox<double, 3>;

}  // namespace ikd
