#include "airtree/rtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "airtree/binary_io.hpp"

namespace airtree {

namespace {

constexpr std::string_view k_snapshot_magic = "airtree-snapshot";
constexpr std::uint32_t k_snapshot_version = 1;

}  // namespace

rtree::rtree(std::uint32_t leaf_capacity, double min_fill_ratio)
    : capacity_(leaf_capacity), min_fill_ratio_(min_fill_ratio), root_(0) {
  if (leaf_capacity < 2) throw error("rtree: leaf capacity must be at least 2");
  if (min_fill_ratio <= 0.0 || min_fill_ratio > 0.5)
    throw error("rtree: min fill ratio must be in (0, 0.5]");
  nodes_.push_back(node{});
  nodes_[0].leaf = true;
}

rtree rtree::from_leaves(std::uint32_t leaf_capacity,
                         const std::vector<std::vector<point>>& leaves,
                         double min_fill_ratio) {
  rtree t(leaf_capacity, min_fill_ratio);
  if (leaves.empty()) return t;
  t.nodes_.clear();

  std::vector<node_id> level;
  for (const auto& pts : leaves) {
    if (pts.size() > leaf_capacity) throw error("from_leaves: leaf over capacity");
    const node_id n = t.new_node(true);
    for (const point& p : pts) {
      if (t.live_index_.count(p.oid))
        throw duplicate_key_error("from_leaves: duplicate oid " + std::to_string(p.oid));
      t.at(n).entries.push_back({p, false});
      t.register_oid(p.oid, n, t.at(n).entries.size() - 1);
      t.at(n).mbr = t.at(n).mbr.united(p);
    }
    level.push_back(n);
  }
  while (level.size() > 1) {
    std::vector<node_id> next;
    for (std::size_t start = 0; start < level.size(); start += leaf_capacity) {
      const node_id parent = t.new_node(false);
      const std::size_t end = std::min(level.size(), start + leaf_capacity);
      for (std::size_t i = start; i < end; ++i) {
        t.at(parent).children.push_back(level[i]);
        t.at(parent).mbr = t.at(parent).mbr.united(t.at(level[i]).mbr);
      }
      next.push_back(parent);
    }
    level = std::move(next);
  }
  t.root_ = level.front();
  return t;
}

node_id rtree::new_node(bool is_leaf) {
  nodes_.push_back(node{});
  nodes_.back().leaf = is_leaf;
  return static_cast<node_id>(nodes_.size() - 1);
}

std::size_t rtree::min_fill() const {
  const auto m = static_cast<std::size_t>(std::floor(min_fill_ratio_ * capacity_));
  return std::max<std::size_t>(1, m);
}

node_id rtree::choose_leaf(const point& p, std::vector<node_id>& path) const {
  node_id n = root_;
  path.push_back(n);
  while (!at(n).leaf) {
    const auto& kids = at(n).children;
    node_id best = kids.front();
    double best_enl = at(best).mbr.enlargement(rect::of_point(p));
    double best_area = at(best).mbr.area();
    for (std::size_t i = 1; i < kids.size(); ++i) {
      const node_id c = kids[i];
      const double enl = at(c).mbr.enlargement(rect::of_point(p));
      const double area = at(c).mbr.area();
      if (enl < best_enl || (enl == best_enl && area < best_area)) {
        best = c;
        best_enl = enl;
        best_area = area;
      }
    }
    n = best;
    path.push_back(n);
  }
  return n;
}

void rtree::register_oid(std::uint32_t oid, node_id n, std::size_t slot) {
  live_index_[oid] = {n, static_cast<std::uint32_t>(slot)};
}

void rtree::reindex_leaf(node_id n) {
  const auto& entries = at(n).entries;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].deleted) register_oid(entries[i].pt.oid, n, i);
  }
}

void rtree::adjust_path_mbrs(const std::vector<node_id>& path, const point& p) {
  for (const node_id n : path) at(n).mbr = at(n).mbr.united(p);
}

leaf_id rtree::fresh_leaf_id(node_id n) {
  const auto id = static_cast<leaf_id>(leaf_by_id_.size());
  leaf_by_id_.push_back(n);
  at(n).id = id;
  return id;
}

namespace {

/// Guttman's linear PickSeeds over item rectangles; returns the two seed
/// indices, lower index first.
std::pair<std::size_t, std::size_t> pick_seeds(const std::vector<rect>& rects) {
  const std::size_t n = rects.size();
  double best_sep = -std::numeric_limits<double>::infinity();
  std::size_t seed_a = 0, seed_b = 1;
  for (int dim = 0; dim < 2; ++dim) {
    const auto lo = [&](std::size_t i) { return dim == 0 ? rects[i].x_min : rects[i].y_min; };
    const auto hi = [&](std::size_t i) { return dim == 0 ? rects[i].x_max : rects[i].y_max; };
    std::size_t highest_low = 0, lowest_high = 0;
    double span_lo = lo(0), span_hi = hi(0);
    for (std::size_t i = 1; i < n; ++i) {
      if (lo(i) > lo(highest_low)) highest_low = i;
      if (hi(i) < hi(lowest_high)) lowest_high = i;
      span_lo = std::min(span_lo, lo(i));
      span_hi = std::max(span_hi, hi(i));
    }
    const double span = span_hi - span_lo;
    const double sep =
        span > 0.0 ? (lo(highest_low) - hi(lowest_high)) / span
                   : -std::numeric_limits<double>::infinity();
    if (sep > best_sep) {
      best_sep = sep;
      seed_a = highest_low;
      seed_b = lowest_high;
    }
  }
  if (seed_a == seed_b) seed_b = seed_a == 0 ? 1 : 0;
  if (seed_a > seed_b) std::swap(seed_a, seed_b);
  return {seed_a, seed_b};
}

/// Distributes item indices into two groups: seeds first, then every
/// remaining item in stored order by least enlargement (ties: smaller area,
/// then group 0), forcing assignment when a group must absorb the rest to
/// reach the minimum fill.
void linear_distribute(const std::vector<rect>& rects, std::size_t min_fill,
                       std::vector<std::size_t>& g0, std::vector<std::size_t>& g1) {
  const auto [seed_a, seed_b] = pick_seeds(rects);
  g0 = {seed_a};
  g1 = {seed_b};
  rect mbr0 = rects[seed_a];
  rect mbr1 = rects[seed_b];
  std::size_t remaining = rects.size() - 2;
  for (std::size_t i = 0; i < rects.size(); ++i) {
    if (i == seed_a || i == seed_b) continue;
    bool to_g0;
    if (g0.size() + remaining == min_fill) {
      to_g0 = true;
    } else if (g1.size() + remaining == min_fill) {
      to_g0 = false;
    } else {
      const double e0 = mbr0.enlargement(rects[i]);
      const double e1 = mbr1.enlargement(rects[i]);
      if (e0 != e1) {
        to_g0 = e0 < e1;
      } else {
        const double a0 = mbr0.area(), a1 = mbr1.area();
        to_g0 = a0 <= a1;
      }
    }
    if (to_g0) {
      g0.push_back(i);
      mbr0 = mbr0.united(rects[i]);
    } else {
      g1.push_back(i);
      mbr1 = mbr1.united(rects[i]);
    }
    --remaining;
  }
}

}  // namespace

node_id rtree::split_node(node_id n) {
  const bool is_leaf = at(n).leaf;
  std::vector<rect> rects;
  if (is_leaf) {
    rects.reserve(at(n).entries.size());
    for (const auto& e : at(n).entries) rects.push_back(rect::of_point(e.pt));
  } else {
    rects.reserve(at(n).children.size());
    for (const node_id c : at(n).children) rects.push_back(at(c).mbr);
  }

  std::vector<std::size_t> g0, g1;
  linear_distribute(rects, min_fill(), g0, g1);
  std::sort(g0.begin(), g0.end());
  std::sort(g1.begin(), g1.end());

  const node_id m = new_node(is_leaf);
  if (is_leaf) {
    std::vector<leaf_entry> keep, moved;
    keep.reserve(g0.size());
    moved.reserve(g1.size());
    for (const std::size_t i : g0) keep.push_back(at(n).entries[i]);
    for (const std::size_t i : g1) moved.push_back(at(n).entries[i]);
    at(n).entries = std::move(keep);
    at(m).entries = std::move(moved);
    at(n).mbr = recompute_mbr(n);
    at(m).mbr = recompute_mbr(m);
    reindex_leaf(n);
    reindex_leaf(m);
    if (at(n).id != k_no_leaf) {
      // Models trained against the old id can still reach the moved
      // entries through the link.
      fresh_leaf_id(m);
      at(n).links.push_back(m);
    }
  } else {
    std::vector<node_id> keep, moved;
    for (const std::size_t i : g0) keep.push_back(at(n).children[i]);
    for (const std::size_t i : g1) moved.push_back(at(n).children[i]);
    at(n).children = std::move(keep);
    at(m).children = std::move(moved);
    at(n).mbr = recompute_mbr(n);
    at(m).mbr = recompute_mbr(m);
  }
  return m;
}

void rtree::insert_at(const point& p, std::vector<node_id>& path, insert_report& rep) {
  const node_id leaf = path.back();
  at(leaf).entries.push_back({p, false});
  register_oid(p.oid, leaf, at(leaf).entries.size() - 1);
  adjust_path_mbrs(path, p);
  if (at(leaf).entries.size() <= capacity_) return;

  rep.split = true;
  node_id overfull = leaf;
  node_id pending = split_node(overfull);
  if (at(pending).leaf && at(pending).id != k_no_leaf) rep.new_leaf = at(pending).id;

  for (std::size_t depth = path.size(); depth-- > 1 && pending != k_no_node;) {
    const node_id parent = path[depth - 1];
    auto& kids = at(parent).children;
    const auto it = std::find(kids.begin(), kids.end(), overfull);
    kids.insert(it + 1, pending);
    at(parent).mbr = at(parent).mbr.united(at(pending).mbr);
    if (kids.size() <= capacity_) {
      pending = k_no_node;
    } else {
      overfull = parent;
      pending = split_node(parent);
    }
  }

  if (pending != k_no_node) {
    const node_id new_root = new_node(false);
    at(new_root).children = {root_, pending};
    at(new_root).mbr = at(root_).mbr.united(at(pending).mbr);
    root_ = new_root;
  }
}

insert_report rtree::insert(const point& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y))
    throw error("insert: coordinates must be finite");
  if (live_index_.count(p.oid))
    throw duplicate_key_error("insert: duplicate oid " + std::to_string(p.oid));

  std::vector<node_id> path;
  const node_id leaf = choose_leaf(p, path);
  insert_report rep;
  rep.target_leaf = at(leaf).id;
  insert_at(p, path, rep);
  return rep;
}

insert_report rtree::insert_overflow(const point& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y))
    throw error("insert: coordinates must be finite");
  if (live_index_.count(p.oid))
    throw duplicate_key_error("insert: duplicate oid " + std::to_string(p.oid));

  std::vector<node_id> path;
  const node_id head = choose_leaf(p, path);
  insert_report rep;
  rep.target_leaf = at(head).id;

  if (at(head).entries.size() < capacity_) {
    at(head).entries.push_back({p, false});
    register_oid(p.oid, head, at(head).entries.size() - 1);
    adjust_path_mbrs(path, p);
    return rep;
  }

  // Head is full: defer the split by writing into the overflow chain.
  rep.split = true;
  rep.overflow_used = true;
  node_id target = k_no_node;
  for (const node_id link : at(head).links) {
    if (!at(link).structural && at(link).entries.size() < capacity_) target = link;
  }
  if (target == k_no_node) {
    target = new_node(true);
    at(target).structural = false;
    if (at(head).id != k_no_leaf) rep.new_leaf = fresh_leaf_id(target);
    at(head).links.push_back(target);
    rep.overflow_created = true;
  }
  at(target).entries.push_back({p, false});
  register_oid(p.oid, target, at(target).entries.size() - 1);
  at(target).mbr = at(target).mbr.united(p);
  // The head's MBR covers its chain so the search descends to it.
  adjust_path_mbrs(path, p);

  std::size_t chain = 0;
  for (const node_id link : at(head).links)
    if (!at(link).structural) ++chain;
  rep.chain_length = chain;
  return rep;
}

rtree::insert_preview rtree::preview_insert(const point& p) const {
  std::vector<node_id> path;
  const node_id leaf = choose_leaf(p, path);
  insert_preview preview;
  preview.target = at(leaf).id;
  preview.target_full = at(leaf).entries.size() >= capacity_;
  preview.post_insert_mbr = at(leaf).mbr.united(p);
  return preview;
}

bool rtree::rect_overlaps_other_leaf(const rect& r, leaf_id exclude) const {
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const auto& nd = nodes_[n];
    if (!nd.leaf || !nd.structural) continue;
    if (nd.id == exclude) continue;
    if (nd.mbr.intersects(r)) return true;
  }
  return false;
}

leaf_id rtree::erase_logical(std::uint32_t oid) {
  const auto it = live_index_.find(oid);
  if (it == live_index_.end())
    throw not_found_error("delete: oid " + std::to_string(oid) + " unknown or already deleted");
  const auto [n, slot] = it->second;
  at(n).entries[slot].deleted = true;
  live_index_.erase(it);
  return at(n).id;
}

void rtree::dfs_collect_leaves(node_id n, std::vector<node_id>& out) const {
  if (at(n).leaf) {
    out.push_back(n);
    return;
  }
  for (const node_id c : at(n).children) dfs_collect_leaves(c, out);
}

std::uint32_t rtree::assign_leaf_ids() {
  for (auto& nd : nodes_) nd.id = k_no_leaf;
  leaf_by_id_.clear();

  std::vector<node_id> leaves;
  dfs_collect_leaves(root_, leaves);
  for (const node_id n : leaves) fresh_leaf_id(n);
  // Overflow leaves (possible when re-assigning mid-life) are numbered
  // after all structural leaves, in head order.
  for (const node_id n : leaves) {
    for (const node_id link : at(n).links) {
      if (!at(link).structural && at(link).id == k_no_leaf) fresh_leaf_id(link);
    }
  }

  fnv1a64 h;
  h.update_value(static_cast<std::uint32_t>(leaf_by_id_.size()));
  for (const node_id n : leaf_by_id_) {
    h.update_value(at(n).id);
    h.update_value(at(n).mbr.x_min);
    h.update_value(at(n).mbr.y_min);
    h.update_value(at(n).mbr.x_max);
    h.update_value(at(n).mbr.y_max);
  }
  assignment_digest_ = h.digest();
  return static_cast<std::uint32_t>(leaf_by_id_.size());
}

void rtree::visit_leaf(node_id n, const rect& q, search_trace& trace,
                       std::vector<bool>& seen, bool via_link) const {
  if (seen[n]) return;
  seen[n] = true;
  ++trace.leaf_accesses;
  if (via_link) ++trace.chain_hops;
  const leaf_id id = at(n).id;
  trace.visited_leaf_ids.push_back(id);
  for (const auto& e : at(n).entries) {
    if (e.deleted) continue;
    if (q.contains(e.pt)) {
      trace.results.push_back(e.pt);
      ++trace.per_leaf_hits[id];
    }
  }
  for (const node_id link : at(n).links) {
    if (!at(link).structural) visit_leaf(link, q, trace, seen, true);
  }
}

search_trace rtree::range_search(const rect& q) const {
  if (!ids_assigned()) throw error("range_search: leaf ids not assigned");
  search_trace trace;
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<node_id> stack;
  if (at(root_).mbr.intersects(q)) stack.push_back(root_);
  while (!stack.empty()) {
    const node_id n = stack.back();
    stack.pop_back();
    if (at(n).leaf) {
      visit_leaf(n, q, trace, seen, false);
      continue;
    }
    ++trace.internal_visits;
    const auto& kids = at(n).children;
    for (std::size_t i = kids.size(); i-- > 0;) {
      if (at(kids[i]).mbr.intersects(q)) stack.push_back(kids[i]);
    }
  }
  trace.true_leaf_ids.reserve(trace.per_leaf_hits.size());
  for (const auto& [id, hits] : trace.per_leaf_hits) {
    (void)hits;
    trace.true_leaf_ids.push_back(id);
  }
  return trace;
}

void rtree::require_leaf(leaf_id id) const {
  if (id >= leaf_by_id_.size())
    throw not_found_error("read_leaf: unknown leaf id " + std::to_string(id));
}

leaf_read rtree::read_leaf(leaf_id id) const {
  require_leaf(id);
  leaf_read out;
  const node_id head = leaf_by_id_[id];
  out.head_mbr = at(head).mbr;
  std::vector<node_id> stack{head};
  std::vector<bool> seen(nodes_.size(), false);
  while (!stack.empty()) {
    const node_id n = stack.back();
    stack.pop_back();
    if (seen[n]) continue;
    seen[n] = true;
    leaf_part part;
    part.id = at(n).id;
    for (const auto& e : at(n).entries) {
      if (!e.deleted) part.entries.push_back(e.pt);
    }
    out.parts.push_back(std::move(part));
    const auto& links = at(n).links;
    for (std::size_t i = links.size(); i-- > 0;) stack.push_back(links[i]);
  }
  out.leaf_accesses = out.parts.size();
  return out;
}

rect rtree::leaf_mbr(leaf_id id) const {
  require_leaf(id);
  return at(leaf_by_id_[id]).mbr;
}

std::size_t rtree::leaf_entry_count(leaf_id id) const {
  require_leaf(id);
  std::size_t n = 0;
  for (const auto& e : at(leaf_by_id_[id]).entries)
    if (!e.deleted) ++n;
  return n;
}

std::vector<point> rtree::leaf_own_entries(leaf_id id) const {
  require_leaf(id);
  std::vector<point> out;
  for (const auto& e : at(leaf_by_id_[id]).entries) {
    if (!e.deleted) out.push_back(e.pt);
  }
  return out;
}

bool rtree::leaf_is_structural(leaf_id id) const {
  require_leaf(id);
  return at(leaf_by_id_[id]).structural;
}

std::vector<leaf_id> rtree::leaf_links(leaf_id id) const {
  require_leaf(id);
  std::vector<leaf_id> out;
  for (const node_id link : at(leaf_by_id_[id]).links) out.push_back(at(link).id);
  return out;
}

bool rtree::leaf_overlaps_any(leaf_id id) const {
  require_leaf(id);
  const node_id self = leaf_by_id_[id];
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const auto& nd = nodes_[n];
    if (!nd.leaf || !nd.structural || n == self) continue;
    if (nd.mbr.intersects(at(self).mbr)) return true;
  }
  return false;
}

rect rtree::bounds() const { return at(root_).mbr; }

std::vector<point> rtree::live_points() const {
  std::vector<point> out;
  out.reserve(live_index_.size());
  for (const auto& nd : nodes_) {
    if (!nd.leaf) continue;
    for (const auto& e : nd.entries) {
      if (!e.deleted) out.push_back(e.pt);
    }
  }
  return out;
}

std::size_t rtree::total_entries() const {
  std::size_t n = 0;
  for (const auto& nd : nodes_)
    if (nd.leaf) n += nd.entries.size();
  return n;
}

std::uint32_t rtree::height() const {
  std::uint32_t h = 1;
  node_id n = root_;
  while (!at(n).leaf) {
    n = at(n).children.front();
    ++h;
  }
  return h;
}

std::vector<std::uint32_t> rtree::leaf_fill_histogram() const {
  std::vector<node_id> leaves;
  dfs_collect_leaves(root_, leaves);
  std::vector<std::uint32_t> fills;
  fills.reserve(leaves.size());
  for (const node_id n : leaves) {
    std::uint32_t live = 0;
    for (const auto& e : at(n).entries)
      if (!e.deleted) ++live;
    fills.push_back(live);
  }
  return fills;
}

rect rtree::recompute_mbr(node_id n) const {
  rect r = rect::empty();
  if (at(n).leaf) {
    for (const auto& e : at(n).entries) r = r.united(e.pt);
    for (const node_id link : at(n).links) {
      if (!at(link).structural) r = r.united(at(link).mbr);
    }
  } else {
    for (const node_id c : at(n).children) r = r.united(at(c).mbr);
  }
  return r;
}

void rtree::check_node(node_id n, const rect* parent_mbr, std::size_t depth) const {
  const auto& nd = at(n);
  if (parent_mbr != nullptr && !nd.mbr.is_empty() && !parent_mbr->contains(nd.mbr))
    throw error("invariant: child MBR escapes parent MBR");
  if (nd.leaf) {
    if (nd.entries.size() > capacity_) throw error("invariant: leaf over capacity");
    for (const auto& e : nd.entries) {
      if (!nd.mbr.contains(e.pt)) throw error("invariant: entry outside leaf MBR");
    }
    if (nd.mbr != recompute_mbr(n) && !nd.entries.empty())
      throw error("invariant: leaf MBR not tight");
    // Acyclic links, forward only.
    std::vector<node_id> stack{n};
    std::vector<node_id> walked;
    while (!stack.empty()) {
      const node_id cur = stack.back();
      stack.pop_back();
      for (const node_id link : at(cur).links) {
        if (std::find(walked.begin(), walked.end(), link) != walked.end() || link == n)
          throw error("invariant: link cycle");
        walked.push_back(link);
        stack.push_back(link);
      }
    }
  } else {
    if (nd.children.empty()) throw error("invariant: childless internal node");
    if (nd.children.size() > capacity_) throw error("invariant: internal over capacity");
    if (nd.mbr != recompute_mbr(n)) throw error("invariant: internal MBR not tight");
    for (const node_id c : nd.children) check_node(c, &nd.mbr, depth + 1);
  }
}

void rtree::check_invariants() const {
  check_node(root_, nullptr, 0);
  // All structural leaves at the same depth.
  std::vector<std::pair<node_id, std::uint32_t>> stack{{root_, 1}};
  std::uint32_t leaf_depth = 0;
  while (!stack.empty()) {
    const auto [n, d] = stack.back();
    stack.pop_back();
    if (at(n).leaf) {
      if (leaf_depth == 0) leaf_depth = d;
      if (d != leaf_depth) throw error("invariant: unbalanced tree");
      continue;
    }
    for (const node_id c : at(n).children) stack.push_back({c, d + 1});
  }
}

void rtree::compact() {
  // Ids are reassigned after compaction; drop them first so the splits
  // below do not leave links behind.
  for (auto& nd : nodes_) nd.id = k_no_leaf;
  leaf_by_id_.clear();
  assignment_digest_ = 0;

  // Fold overflow chains into their heads and drop deleted entries.
  std::vector<node_id> leaves;
  dfs_collect_leaves(root_, leaves);
  for (const node_id n : leaves) {
    std::vector<node_id> stack(at(n).links.rbegin(), at(n).links.rend());
    at(n).links.clear();
    while (!stack.empty()) {
      const node_id link = stack.back();
      stack.pop_back();
      if (at(link).structural) continue;  // split sibling, owns its entries
      for (const auto& e : at(link).entries) {
        if (!e.deleted) at(n).entries.push_back(e);
      }
      for (const node_id deeper : at(link).links) stack.push_back(deeper);
      at(link).entries.clear();
      at(link).links.clear();
    }
    auto& entries = at(n).entries;
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [](const leaf_entry& e) { return e.deleted; }),
                  entries.end());
  }
  for (auto& nd : nodes_) nd.links.clear();

  // Prune empty subtrees and retighten MBRs bottom-up.
  const auto prune = [this](auto&& self, node_id n) -> bool {
    if (at(n).leaf) {
      at(n).mbr = recompute_mbr(n);
      return !at(n).entries.empty();
    }
    auto& kids = at(n).children;
    std::vector<node_id> alive;
    for (const node_id c : kids) {
      if (self(self, c)) alive.push_back(c);
    }
    kids = std::move(alive);
    at(n).mbr = recompute_mbr(n);
    return !kids.empty();
  };
  if (!prune(prune, root_)) {
    nodes_.clear();
    nodes_.push_back(node{});
    nodes_[0].leaf = true;
    root_ = 0;
    live_index_.clear();
    return;
  }
  while (!at(root_).leaf && at(root_).children.size() == 1) root_ = at(root_).children.front();

  // Resolve deferred splits: any leaf past capacity is split for real now.
  for (bool again = true; again;) {
    again = false;
    std::vector<std::pair<node_id, std::vector<node_id>>> work;
    const auto scan = [this, &work](auto&& self, node_id n, std::vector<node_id>& path) -> void {
      path.push_back(n);
      if (at(n).leaf) {
        if (at(n).entries.size() > capacity_) work.emplace_back(n, path);
      } else {
        for (const node_id c : at(n).children) self(self, c, path);
      }
      path.pop_back();
    };
    std::vector<node_id> path;
    scan(scan, root_, path);
    for (auto& [leaf, leaf_path] : work) {
      (void)leaf;
      insert_report rep;
      // Re-use the insert split propagation: pop the synthetic entry trick
      // is unnecessary, split directly.
      node_id overfull = leaf_path.back();
      node_id pending = split_node(overfull);
      for (std::size_t depth = leaf_path.size(); depth-- > 1 && pending != k_no_node;) {
        const node_id parent = leaf_path[depth - 1];
        auto& kids = at(parent).children;
        const auto it = std::find(kids.begin(), kids.end(), overfull);
        kids.insert(it + 1, pending);
        at(parent).mbr = at(parent).mbr.united(at(pending).mbr);
        if (kids.size() <= capacity_) {
          pending = k_no_node;
        } else {
          overfull = parent;
          pending = split_node(parent);
        }
      }
      if (pending != k_no_node) {
        const node_id new_root = new_node(false);
        at(new_root).children = {root_, pending};
        at(new_root).mbr = at(root_).mbr.united(at(pending).mbr);
        root_ = new_root;
      }
      again = true;
      break;  // paths are stale after a split; rescan
    }
  }

  // Rebuild the arena densely in DFS order.
  std::vector<node> fresh;
  const auto copy = [this, &fresh](auto&& self, node_id n) -> node_id {
    const node_id id = static_cast<node_id>(fresh.size());
    fresh.push_back(at(n));
    fresh[id].links.clear();
    if (!at(n).leaf) {
      std::vector<node_id> remapped;
      remapped.reserve(at(n).children.size());
      for (const node_id c : at(n).children) remapped.push_back(self(self, c));
      fresh[id].children = std::move(remapped);
    }
    return id;
  };
  // Note: recursion appends children after the parent, so fix up ids in a
  // second pass via the return values gathered above.
  node_id new_root = copy(copy, root_);
  nodes_ = std::move(fresh);
  root_ = new_root;

  live_index_.clear();
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    if (nodes_[n].leaf) reindex_leaf(static_cast<node_id>(n));
  }
}

std::vector<unsigned char> rtree::save_bytes() const {
  binary_writer w;
  w.str(std::string(k_snapshot_magic));
  w.u32(k_snapshot_version);
  w.u32(capacity_);
  w.f64(min_fill_ratio_);
  w.u32(static_cast<std::uint32_t>(nodes_.size()));
  w.u32(root_);
  w.u64(assignment_digest_);
  w.u32(static_cast<std::uint32_t>(leaf_by_id_.size()));
  for (const node_id n : leaf_by_id_) w.u32(n);
  for (const auto& nd : nodes_) {
    std::uint8_t flags = 0;
    if (nd.leaf) flags |= 1;
    if (nd.structural) flags |= 2;
    w.u8(flags);
    w.f64(nd.mbr.x_min);
    w.f64(nd.mbr.y_min);
    w.f64(nd.mbr.x_max);
    w.f64(nd.mbr.y_max);
    w.u32(nd.id);
    if (nd.leaf) {
      w.u32(static_cast<std::uint32_t>(nd.entries.size()));
      for (const auto& e : nd.entries) {
        w.u32(e.pt.oid);
        w.f64(e.pt.x);
        w.f64(e.pt.y);
        w.u8(e.deleted ? 1 : 0);
      }
    } else {
      w.u32(static_cast<std::uint32_t>(nd.children.size()));
      for (const node_id c : nd.children) w.u32(c);
    }
    w.u32(static_cast<std::uint32_t>(nd.links.size()));
    for (const node_id l : nd.links) w.u32(l);
  }
  return w.take();
}

rtree rtree::load_bytes(const std::vector<unsigned char>& bytes) {
  binary_reader r(bytes);
  if (r.str() != k_snapshot_magic) throw io_error("snapshot: bad magic");
  if (r.u32() != k_snapshot_version) throw io_error("snapshot: unsupported version");
  const std::uint32_t capacity = r.u32();
  const double min_fill = r.f64();
  rtree t(capacity, min_fill);
  const std::uint32_t node_count = r.u32();
  t.root_ = r.u32();
  t.assignment_digest_ = r.u64();
  const std::uint32_t registry = r.u32();
  t.leaf_by_id_.resize(registry);
  for (auto& n : t.leaf_by_id_) n = r.u32();
  t.nodes_.assign(node_count, node{});
  for (auto& nd : t.nodes_) {
    const std::uint8_t flags = r.u8();
    nd.leaf = (flags & 1) != 0;
    nd.structural = (flags & 2) != 0;
    nd.mbr.x_min = r.f64();
    nd.mbr.y_min = r.f64();
    nd.mbr.x_max = r.f64();
    nd.mbr.y_max = r.f64();
    nd.id = r.u32();
    const std::uint32_t count = r.u32();
    if (nd.leaf) {
      nd.entries.resize(count);
      for (auto& e : nd.entries) {
        e.pt.oid = r.u32();
        e.pt.x = r.f64();
        e.pt.y = r.f64();
        e.deleted = r.u8() != 0;
      }
    } else {
      nd.children.resize(count);
      for (auto& c : nd.children) c = r.u32();
    }
    const std::uint32_t links = r.u32();
    nd.links.resize(links);
    for (auto& l : nd.links) l = r.u32();
  }
  for (std::size_t n = 0; n < t.nodes_.size(); ++n) {
    if (t.nodes_[n].leaf) t.reindex_leaf(static_cast<node_id>(n));
  }
  return t;
}

void rtree::save(const std::string& path) const { write_file_bytes(path, save_bytes()); }

rtree rtree::load(const std::string& path) { return load_bytes(read_file_bytes(path)); }

std::uint64_t rtree::digest() const {
  const auto bytes = save_bytes();
  fnv1a64 h;
  h.update(bytes.data(), bytes.size());
  return h.digest();
}

}  // namespace airtree
