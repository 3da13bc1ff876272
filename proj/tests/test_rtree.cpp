#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "airtree/rtree.hpp"
#include "helpers.hpp"

using namespace airtree;
using namespace airtree::testing;

TEST_CASE("insert into empty tree: root is a leaf with one entry") {
  rtree t(4);
  t.insert(point{1.0, 2.0, 0});
  t.assign_leaf_ids();
  CHECK(t.leaf_count() == 1);
  CHECK(t.leaf_entry_count(0) == 1);
  CHECK(t.height() == 1);
  CHECK(t.bounds() == rect{1.0, 2.0, 1.0, 2.0});
}

TEST_CASE("duplicate oid is rejected") {
  rtree t(4);
  t.insert(point{0.0, 0.0, 7});
  CHECK_THROWS_AS(t.insert(point{1.0, 1.0, 7}), duplicate_key_error);
  CHECK_THROWS_AS(t.insert(point{std::nan(""), 0.0, 8}), error);
}

TEST_CASE("M+1 collinear points split: hand-traced linear split") {
  // Five points on a line with M = 4. PickSeeds separates the extremes;
  // every tie resolves to group 0, so the split is {0,1,2,3} | {4}.
  rtree t(4);
  for (std::uint32_t i = 0; i < 5; ++i) t.insert(point{static_cast<double>(i), 0.0, i});
  t.assign_leaf_ids();
  CHECK(t.leaf_count() == 2);
  CHECK(t.height() == 2);
  CHECK(t.leaf_entry_count(0) + t.leaf_entry_count(1) == 5);
  const auto left = t.leaf_own_entries(0);
  const auto right = t.leaf_own_entries(1);
  CHECK(left.size() == 4);
  CHECK(right.size() == 1);
  CHECK(right.front().oid == 4);
  t.check_invariants();
}

TEST_CASE("10k uniform points, M=1000: every point retrievable by point query") {
  const auto pts = random_points(10000, 42);
  rtree t = build_tree(pts, 1000);
  for (std::size_t i = 0; i < pts.size(); i += 97) {
    const point& p = pts[i];
    const auto trace = t.range_search(rect{p.x, p.y, p.x, p.y});
    bool found = false;
    for (const point& r : trace.results) found = found || r.oid == p.oid;
    CHECK(found);
  }
}

TEST_CASE("oracle equivalence: 1000 random rects over 10000 random points") {
  const auto pts = random_points(10000, 4242);
  rtree t = build_tree(pts, 64);
  t.check_invariants();
  rng r(99);
  for (int i = 0; i < 1000; ++i) {
    const rect q = random_rect(r);
    const auto trace = t.range_search(q);
    const auto expected = brute_force_search(pts, q);
    REQUIRE(oid_set(trace.results) == oid_set(expected));
    // TN <= VN and the trace accounting holds.
    CHECK(trace.true_count() <= trace.visited_count());
    CHECK(trace.leaf_accesses == trace.visited_leaf_ids.size());
    std::uint64_t hit_sum = 0;
    for (const auto& [leaf, hits] : trace.per_leaf_hits) {
      (void)leaf;
      hit_sum += hits;
    }
    CHECK(hit_sum == trace.results.size());
  }
}

TEST_CASE("search disjoint from the root MBR returns nothing and visits nothing") {
  rtree t = build_tree(random_points(100, 5), 8);
  const auto trace = t.range_search(rect{100.0, 100.0, 101.0, 101.0});
  CHECK(trace.results.empty());
  CHECK(trace.visited_leaf_ids.empty());
  CHECK(trace.leaf_accesses == 0);
}

TEST_CASE("degenerate query rectangles (point, line) are legal") {
  rtree t(4);
  t.insert(point{1.0, 1.0, 0});
  t.insert(point{2.0, 1.0, 1});
  t.assign_leaf_ids();
  CHECK(t.range_search(rect{1.0, 1.0, 1.0, 1.0}).results.size() == 1);
  CHECK(t.range_search(rect{0.0, 1.0, 3.0, 1.0}).results.size() == 2);
}

TEST_CASE("overlap example: 4 visited leaves, 2 true, alpha = 0.5") {
  rtree t = four_cluster_tree();
  REQUIRE(t.leaf_count() == 4);

  // One thin band across all four clusters: visits 4 leaves, only the two
  // mid-line clusters contribute results.
  const rect q2{-1.0, 3.0, 71.0, 7.0};
  const auto trace = t.range_search(q2);
  CHECK(trace.visited_count() == 4);
  CHECK(trace.true_count() == 2);
  CHECK(static_cast<double>(trace.true_count()) / static_cast<double>(trace.visited_count()) ==
        0.5);

  // Fully covering two clusters: 2 visited, 2 true, alpha = 1.
  const rect q3{-1.0, -1.0, 31.0, 11.0};
  const auto t3 = t.range_search(q3);
  CHECK(t3.visited_count() == 2);
  CHECK(t3.true_count() == 2);
}

TEST_CASE("DFS leaf id assignment") {
  SUBCASE("single leaf gets id 0") {
    rtree t(4);
    t.insert(point{0.0, 0.0, 0});
    CHECK(t.assign_leaf_ids() == 1);
  }

  SUBCASE("eight separated clusters: ids 0..7, idempotent, deterministic") {
    std::vector<point> pts;
    std::uint32_t oid = 0;
    for (int c = 0; c < 8; ++c) {
      const double bx = 20.0 * c;
      pts.push_back({bx, 0.0, oid++});
      pts.push_back({bx + 1.0, 1.5, oid++});
      pts.push_back({bx + 2.0, 0.5, oid++});
      pts.push_back({bx + 1.2, 2.1, oid++});
    }
    rtree t = build_tree(pts, 4);
    REQUIRE(t.leaf_count() == 8);
    std::set<leaf_id> ids;
    for (leaf_id id = 0; id < 8; ++id) {
      CHECK_NOTHROW(t.leaf_mbr(id));
      ids.insert(id);
    }
    CHECK(ids.size() == 8);

    const auto digest_before = t.assignment_digest();
    CHECK(t.assign_leaf_ids() == 8);
    CHECK(t.assignment_digest() == digest_before);

    // Identical insert sequence reproduces the identical assignment.
    rtree t2 = build_tree(pts, 4);
    CHECK(t2.assignment_digest() == digest_before);
    for (leaf_id id = 0; id < 8; ++id) {
      CHECK(t.leaf_mbr(id) == t2.leaf_mbr(id));
    }
  }

  SUBCASE("a split adds exactly one id; prior leaves keep DFS order") {
    // Root has spare fanout so the leaf split does not propagate.
    std::uint32_t oid = 0;
    const auto cluster = [&](double bx) -> std::vector<point> {
      return {{bx, 0.0, oid++}, {bx + 10.0, 0.0, oid++}, {bx, 10.0, oid++},
              {bx + 10.0, 10.0, oid++}};
    };
    rtree t = rtree::from_leaves(4, {cluster(0.0), cluster(20.0), cluster(40.0)});
    t.assign_leaf_ids();
    std::vector<rect> before;
    for (leaf_id id = 0; id < t.leaf_count(); ++id) before.push_back(t.leaf_mbr(id));

    // Cluster A's leaf is at capacity: this insert splits it.
    t.insert(point{1.0, 1.0, 1000});
    CHECK(t.leaf_count() == 4);  // fresh id appended, not renumbered
    const auto reassigned = t.assign_leaf_ids();
    CHECK(reassigned == 4);

    // Previously assigned leaves keep their relative DFS order: the two
    // untouched cluster MBRs appear in the same order in the new walk.
    std::vector<rect> after;
    for (leaf_id id = 0; id < reassigned; ++id) after.push_back(t.leaf_mbr(id));
    std::vector<std::size_t> positions;
    for (std::size_t b = 1; b < 3; ++b) {  // clusters B and C survived intact
      for (std::size_t a = 0; a < after.size(); ++a) {
        if (after[a] == before[b]) positions.push_back(a);
      }
    }
    REQUIRE(positions.size() == 2);
    CHECK(std::is_sorted(positions.begin(), positions.end()));
  }
}

TEST_CASE("containment invariants hold after every insert") {
  const auto pts = random_points(500, 7);
  rtree t(8);
  for (const point& p : pts) {
    t.insert(p);
    t.check_invariants();
  }
}

TEST_CASE("read_leaf") {
  rtree t = four_cluster_tree();

  SUBCASE("single leaf with k points") {
    const auto lr = t.read_leaf(0);
    CHECK(lr.parts.size() == 1);
    CHECK(lr.parts.front().entries.size() == 4);
    CHECK(lr.leaf_accesses == 1);
  }

  SUBCASE("unknown id") { CHECK_THROWS_AS(t.read_leaf(99), not_found_error); }

  SUBCASE("freshly split leaf reads through its link, access counter +2") {
    t.insert(point{1.0, 1.0, 1000});  // splits leaf 0, link 0 -> 4
    const auto links = t.leaf_links(0);
    REQUIRE(links.size() == 1);
    CHECK(links.front() == 4);
    const auto lr = t.read_leaf(0);
    CHECK(lr.leaf_accesses == 2);
    std::size_t total = 0;
    for (const auto& part : lr.parts) total += part.entries.size();
    CHECK(total == 5);  // all five points reachable under the stale id
  }

  SUBCASE("leaf with all entries logically deleted reads empty, one access") {
    for (std::uint32_t oid = 0; oid < 4; ++oid) t.erase_logical(oid);
    const auto lr = t.read_leaf(0);
    CHECK(lr.leaf_accesses == 1);
    CHECK(lr.parts.front().entries.empty());
  }
}

TEST_CASE("logical delete excludes entries immediately, MBRs unchanged") {
  rtree t = four_cluster_tree();
  const rect before_mbr = t.leaf_mbr(0);
  t.erase_logical(0);
  CHECK(t.leaf_mbr(0) == before_mbr);
  const auto trace = t.range_search(rect{-1.0, -1.0, 11.0, 11.0});
  for (const point& p : trace.results) CHECK(p.oid != 0);
  CHECK_THROWS_AS(t.erase_logical(0), not_found_error);   // already deleted
  CHECK_THROWS_AS(t.erase_logical(999), not_found_error); // never existed
}

TEST_CASE("overflow insert defers the split and chains accesses") {
  rtree t = four_cluster_tree();
  const rect head_mbr = t.leaf_mbr(0);
  const auto rep = t.insert_overflow(point{1.0, 1.0, 1000});
  CHECK(rep.split);
  CHECK(rep.overflow_used);
  CHECK(rep.overflow_created);
  CHECK(rep.new_leaf == 4);
  CHECK_FALSE(t.leaf_is_structural(4));
  CHECK(t.leaf_mbr(0) == head_mbr);  // the new point fell inside

  // A query over cluster A touches head and chain: 2 accesses, 1 hop.
  const auto trace = t.range_search(rect{-1.0, -1.0, 11.0, 11.0});
  CHECK(trace.leaf_accesses == 2);
  CHECK(trace.chain_hops == 1);
  CHECK(trace.visited_leaf_ids == std::vector<leaf_id>{0, 4});
  CHECK(trace.results.size() == 5);
  CHECK(trace.leaf_accesses ==
        (trace.visited_leaf_ids.size() - trace.chain_hops) + trace.chain_hops);
}

TEST_CASE("compact resolves chains and deleted entries; retrain idempotence") {
  rtree t = four_cluster_tree();

  SUBCASE("no mutations: compact + assign reproduces the identical assignment") {
    const auto digest = t.assignment_digest();
    t.compact();
    t.assign_leaf_ids();
    CHECK(t.assignment_digest() == digest);
  }

  SUBCASE("deferred splits are resolved, no links remain, capacities hold") {
    rng r(3);
    for (std::uint32_t i = 0; i < 40; ++i) {
      t.insert_overflow(point{r.uniform(0.0, 10.0), r.uniform(0.0, 10.0), 100 + i});
    }
    t.erase_logical(100);
    t.erase_logical(101);
    const auto live_before = t.live_points();
    t.compact();
    t.assign_leaf_ids();
    t.check_invariants();
    for (leaf_id id = 0; id < t.leaf_count(); ++id) {
      CHECK(t.leaf_links(id).empty());
      CHECK(t.leaf_entry_count(id) <= t.capacity());
      CHECK(t.leaf_is_structural(id));
    }
    CHECK(oid_set(t.live_points()) == oid_set(live_before));
  }
}

TEST_CASE("snapshot persistence round-trips bit-identically") {
  const auto pts = random_points(2000, 11);
  rtree t = build_tree(pts, 32);
  t.erase_logical(3);
  t.insert_overflow(point{0.5, 0.5, 50000});

  const auto bytes = t.save_bytes();
  rtree loaded = rtree::load_bytes(bytes);
  CHECK(loaded.save_bytes() == bytes);  // save -> load -> save equality
  CHECK(loaded.assignment_digest() == t.assignment_digest());
  CHECK(loaded.leaf_count() == t.leaf_count());

  // Behavioral equality on a few queries.
  rng r(17);
  for (int i = 0; i < 50; ++i) {
    const rect q = random_rect(r);
    CHECK(oid_set(loaded.range_search(q).results) == oid_set(t.range_search(q).results));
  }

  // Bad magic rejected.
  std::vector<unsigned char> junk = bytes;
  junk[4] ^= 0xff;
  CHECK_THROWS_AS(rtree::load_bytes(junk), io_error);

  const std::string path = (std::filesystem::temp_directory_path() / "airtree_t.bin").string();
  t.save(path);
  CHECK(rtree::load(path).save_bytes() == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("from_leaves fixture respects structure") {
  rtree t = rtree::from_leaves(4, {{{0.0, 0.0, 0}, {1.0, 1.0, 1}}, {{5.0, 5.0, 2}}});
  t.assign_leaf_ids();
  CHECK(t.leaf_count() == 2);
  t.check_invariants();
  CHECK(t.range_search(rect{0.0, 0.0, 10.0, 10.0}).results.size() == 3);
}
