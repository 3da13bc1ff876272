#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "airtree/geometry.hpp"
#include "airtree/util.hpp"

namespace airtree {

using node_id = std::uint32_t;
using leaf_id = std::uint32_t;

inline constexpr node_id k_no_node = 0xffffffffu;
inline constexpr leaf_id k_no_leaf = 0xffffffffu;

struct leaf_entry {
  point pt;
  bool deleted = false;
};

/// What one range search did: the answer plus the access bookkeeping the
/// workload profiler and the cost model feed on.
struct search_trace {
  std::vector<point> results;
  /// Every physical leaf touched, in visit order, each at most once.
  std::vector<leaf_id> visited_leaf_ids;
  /// Leaves that contributed at least one result.
  std::vector<leaf_id> true_leaf_ids;
  /// leaf id -> number of results found in that leaf. Ordered for
  /// deterministic iteration.
  std::map<leaf_id, std::uint32_t> per_leaf_hits;
  /// One unit per physical leaf touched; the simulated I/O count.
  std::size_t leaf_accesses = 0;
  /// Leaves reached through links rather than by their own MBR.
  std::size_t chain_hops = 0;
  /// Internal nodes touched; diagnostics only, not part of the I/O model.
  std::size_t internal_visits = 0;

  std::size_t visited_count() const { return visited_leaf_ids.size(); }
  std::size_t true_count() const { return true_leaf_ids.size(); }
};

/// One physical leaf's live contents, as produced by read_leaf.
struct leaf_part {
  leaf_id id = k_no_leaf;
  std::vector<point> entries;
};

struct leaf_read {
  /// Head leaf first, linked leaves after it in link order.
  std::vector<leaf_part> parts;
  rect head_mbr = rect::empty();
  std::size_t leaf_accesses = 0;
};

/// Outcome of one tuple insert, consumed by the mutation layer for case
/// classification and logging.
struct insert_report {
  leaf_id target_leaf = k_no_leaf;    ///< chosen leaf (its pre-existing id, if assigned)
  bool split = false;                 ///< capacity was exceeded
  bool overflow_used = false;         ///< entry went to a linked overflow leaf
  bool overflow_created = false;      ///< a fresh overflow leaf was created
  leaf_id new_leaf = k_no_leaf;       ///< fresh id created by a split or overflow
  std::size_t chain_length = 0;       ///< overflow chain length after the insert
};

/// Guttman-style R-tree with tuple-at-a-time construction, linear node
/// splitting, DFS leaf-id assignment and access-counted range search.
///
/// Leaf nodes can carry links to sibling leaves: an in-place split links
/// the surviving id to the freshly created half, and out-of-place inserts
/// link a full leaf to its overflow leaves. Overflow leaves are not
/// children of any internal node; a range search that touches their head
/// touches them as well.
class rtree {
 public:
  explicit rtree(std::uint32_t leaf_capacity, double min_fill_ratio = 0.4);

  /// Builds a tree with exactly the given leaf contents (scenario fixtures:
  /// the per-case mutation tests need precise pre-states that tuple inserts
  /// cannot pin down). Capacities and balance are respected.
  static rtree from_leaves(std::uint32_t leaf_capacity,
                           const std::vector<std::vector<point>>& leaves,
                           double min_fill_ratio = 0.4);

  std::uint32_t capacity() const { return capacity_; }
  double min_fill_ratio() const { return min_fill_ratio_; }

  // -- construction / mutation (exclusive access) ------------------------

  /// Insert with immediate splits (build phase and the in-place policy).
  /// Splits that touch an id-assigned leaf leave a link old -> new so that
  /// stale leaf-id predictions can still reach the moved entries.
  insert_report insert(const point& p);

  /// Out-of-place insert: place in the chosen leaf when it has room,
  /// otherwise append to its overflow chain, deferring the split.
  insert_report insert_overflow(const point& p);

  /// Logical delete: flags the entry; MBRs and ids stay untouched.
  /// Returns the id of the leaf holding the entry.
  leaf_id erase_logical(std::uint32_t oid);

  /// Where an insert would land, before performing it; drives the
  /// Case 1-4 classification.
  struct insert_preview {
    leaf_id target = k_no_leaf;
    bool target_full = false;
    rect post_insert_mbr;
  };
  insert_preview preview_insert(const point& p) const;

  /// Does `r` intersect any structural leaf MBR other than `exclude`?
  bool rect_overlaps_other_leaf(const rect& r, leaf_id exclude) const;

  bool contains_live(std::uint32_t oid) const { return live_index_.count(oid) > 0; }

  /// Physically drops deleted entries, folds overflow chains back into
  /// their heads (splitting where capacity demands), clears all links,
  /// prunes empty nodes and re-tightens every MBR. Leaf ids are left
  /// unassigned; call assign_leaf_ids afterwards.
  void compact();

  // -- leaf ids -----------------------------------------------------------

  /// Numbers leaves 0..L-1 in DFS pre-order (children in stored order).
  /// Idempotent on an unchanged tree. Returns the leaf count.
  std::uint32_t assign_leaf_ids();

  bool ids_assigned() const { return !leaf_by_id_.empty(); }
  std::uint32_t leaf_count() const { return static_cast<std::uint32_t>(leaf_by_id_.size()); }

  /// Digest of the current id assignment; models record it and the hybrid
  /// index refuses to pair components trained against anything else.
  std::uint64_t assignment_digest() const { return assignment_digest_; }

  // -- queries (shared access) ---------------------------------------------

  search_trace range_search(const rect& q) const;

  /// Fetch one predicted leaf: its live entries plus, transitively, the
  /// entries of every linked leaf. One access is charged per physical leaf.
  leaf_read read_leaf(leaf_id id) const;

  rect leaf_mbr(leaf_id id) const;
  std::size_t leaf_entry_count(leaf_id id) const;  ///< live entries, head only
  /// Live entries stored in this physical leaf itself, links not followed.
  std::vector<point> leaf_own_entries(leaf_id id) const;
  bool leaf_is_structural(leaf_id id) const;
  std::vector<leaf_id> leaf_links(leaf_id id) const;

  /// True when the post-state MBR of `id` intersects any other structural
  /// leaf MBR; drives the overlap half of the insert case classification.
  bool leaf_overlaps_any(leaf_id id) const;

  rect bounds() const;
  /// Every live point, in leaf-storage order. The brute-force oracle's view.
  std::vector<point> live_points() const;
  std::size_t live_size() const { return live_index_.size(); }
  std::size_t total_entries() const;
  std::uint32_t height() const;
  std::vector<std::uint32_t> leaf_fill_histogram() const;

  /// Structural sanity: every entry inside its leaf MBR, every child MBR
  /// inside its parent's, capacities respected, links acyclic.
  void check_invariants() const;

  // -- persistence ----------------------------------------------------------

  std::vector<unsigned char> save_bytes() const;
  static rtree load_bytes(const std::vector<unsigned char>& bytes);
  void save(const std::string& path) const;
  static rtree load(const std::string& path);
  std::uint64_t digest() const;

 private:
  struct node {
    rect mbr = rect::empty();
    bool leaf = false;
    bool structural = true;  // false: overflow leaf, reachable only via links
    leaf_id id = k_no_leaf;
    std::vector<node_id> children;   // internal only
    std::vector<leaf_entry> entries; // leaf only
    std::vector<node_id> links;      // leaf only: split links / overflow chain
  };

  node& at(node_id n) { return nodes_[n]; }
  const node& at(node_id n) const { return nodes_[n]; }

  node_id new_node(bool is_leaf);
  std::size_t min_fill() const;

  node_id choose_leaf(const point& p, std::vector<node_id>& path) const;
  void register_oid(std::uint32_t oid, node_id n, std::size_t slot);
  void reindex_leaf(node_id n);
  void adjust_path_mbrs(const std::vector<node_id>& path, const point& p);

  /// Splits `n` (leaf or internal); returns the new sibling. The original
  /// node keeps the first group.
  node_id split_node(node_id n);
  void insert_at(const point& p, std::vector<node_id>& path, insert_report& rep);

  leaf_id fresh_leaf_id(node_id n);
  void require_leaf(leaf_id id) const;

  void dfs_collect_leaves(node_id n, std::vector<node_id>& out) const;
  void visit_leaf(node_id n, const rect& q, search_trace& trace,
                  std::vector<bool>& seen, bool via_link) const;
  rect recompute_mbr(node_id n) const;
  void compact_rebuild(node_id n, std::vector<node>& out, node_id& out_id) const;
  void check_node(node_id n, const rect* parent_mbr, std::size_t depth) const;

  std::uint32_t capacity_;
  double min_fill_ratio_;
  std::vector<node> nodes_;
  node_id root_;
  std::vector<node_id> leaf_by_id_;
  std::uint64_t assignment_digest_ = 0;
  // oid -> (node, entry slot) for live entries only.
  std::unordered_map<std::uint32_t, std::pair<node_id, std::uint32_t>> live_index_;
};

}  // namespace airtree
