#pragma once

#include <algorithm>
#include <set>
#include <vector>

#include "airtree/rtree.hpp"
#include "airtree/util.hpp"
#include "airtree/workload.hpp"

namespace airtree::testing {

/// Brute-force range scan; the oracle every search result is checked against.
inline std::vector<point> brute_force_search(const std::vector<point>& points, const rect& q) {
  std::vector<point> out;
  for (const point& p : points) {
    if (q.contains(p)) out.push_back(p);
  }
  return out;
}

inline std::set<std::uint32_t> oid_set(const std::vector<point>& points) {
  std::set<std::uint32_t> out;
  for (const point& p : points) out.insert(p.oid);
  return out;
}

inline std::vector<point> random_points(std::size_t n, std::uint64_t seed, double lo = 0.0,
                                        double hi = 1.0) {
  rng r(seed);
  std::vector<point> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(point{r.uniform(lo, hi), r.uniform(lo, hi), static_cast<std::uint32_t>(i)});
  }
  return out;
}

inline rect random_rect(rng& r, double lo = 0.0, double hi = 1.0, double max_size = 0.2) {
  const double x = r.uniform(lo, hi);
  const double y = r.uniform(lo, hi);
  const double w = r.uniform(0.0, max_size);
  const double h = r.uniform(0.0, max_size);
  return rect{x, y, x + w, y + h};
}

inline rtree build_tree(const std::vector<point>& points, std::uint32_t capacity) {
  rtree t(capacity);
  for (const point& p : points) t.insert(p);
  t.assign_leaf_ids();
  return t;
}

/// Four separated clusters in a row (fixture-built for exact layout):
/// clusters B and D hold points on the mid line y = 5, clusters A and C
/// hold corner points. Range queries over the y in [3, 7] band then visit
/// A/C without hits. Mirrors the node-overlap example the overlap ratio is
/// defined on. DFS ids: A=0, B=1, C=2, D=3.
inline rtree four_cluster_tree() {
  std::uint32_t oid = 0;
  const auto corners = [&](double bx) -> std::vector<point> {
    return {{bx, 0.0, oid++}, {bx + 10.0, 0.0, oid++}, {bx, 10.0, oid++},
            {bx + 10.0, 10.0, oid++}};
  };
  const auto midline = [&](double bx) -> std::vector<point> {
    return {{bx, 5.0, oid++}, {bx + 3.0, 5.0, oid++}, {bx + 6.0, 5.0, oid++},
            {bx + 10.0, 5.0, oid++}};
  };
  rtree t = rtree::from_leaves(
      4, {corners(0.0), midline(20.0), corners(40.0), midline(60.0)});
  t.assign_leaf_ids();
  return t;
}

}  // namespace airtree::testing
