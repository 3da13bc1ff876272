#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace airtree {

/// A two-dimensional data object: location plus a unique object id.
struct point {
  double x = 0.0;
  double y = 0.0;
  std::uint32_t oid = 0;

  friend bool operator==(const point&, const point&) = default;
};

/// Axis-aligned rectangle with closed boundaries. Used for MBRs, range
/// queries, and grid cells alike.
struct rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  friend bool operator==(const rect&, const rect&) = default;

  /// Inverted rectangle that acts as the identity for unions.
  static rect empty() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return rect{inf, inf, -inf, -inf};
  }

  static rect of_point(const point& p) { return rect{p.x, p.y, p.x, p.y}; }

  bool is_empty() const { return x_min > x_max || y_min > y_max; }

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return is_empty() ? 0.0 : width() * height(); }

  /// Boundary points count as inside.
  bool contains(const point& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }

  bool contains(const rect& r) const {
    return r.x_min >= x_min && r.x_max <= x_max && r.y_min >= y_min && r.y_max <= y_max;
  }

  /// Closed-interval intersection test: touching edges intersect.
  bool intersects(const rect& r) const {
    if (is_empty() || r.is_empty()) return false;
    return x_min <= r.x_max && r.x_min <= x_max && y_min <= r.y_max && r.y_min <= y_max;
  }

  rect united(const rect& r) const {
    if (is_empty()) return r;
    if (r.is_empty()) return *this;
    return rect{std::min(x_min, r.x_min), std::min(y_min, r.y_min),
                std::max(x_max, r.x_max), std::max(y_max, r.y_max)};
  }

  rect united(const point& p) const { return united(of_point(p)); }

  /// Area growth required to absorb `r`.
  double enlargement(const rect& r) const { return united(r).area() - area(); }
};

}  // namespace airtree
