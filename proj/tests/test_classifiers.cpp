#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "airtree/tree_classifiers.hpp"
#include "helpers.hpp"

using namespace airtree;
using namespace airtree::testing;

namespace {

labeled_corpus corpus_of(const std::vector<std::pair<rect, std::vector<std::uint32_t>>>& rows,
                         std::uint32_t label_count) {
  labeled_corpus c;
  c.label_count = label_count;
  fnv1a64 h;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    labeled_example ex;
    ex.features = {rows[i].first.x_min, rows[i].first.y_min, rows[i].first.x_max,
                   rows[i].first.y_max};
    ex.labels = rows[i].second;
    std::sort(ex.labels.begin(), ex.labels.end());
    ex.profile_index = i;
    for (const double f : ex.features) h.update_value(f);
    for (const auto l : ex.labels) h.update_value(l);
    c.examples.push_back(std::move(ex));
  }
  c.digest = h.digest();
  return c;
}

std::vector<std::size_t> all_indices(const labeled_corpus& c) {
  std::vector<std::size_t> idx(c.examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

rect rect_at(double x, double y, double s = 0.01) { return rect{x, y, x + s, y + s}; }

/// Two spatially disjoint query clusters with disjoint label sets.
labeled_corpus two_cluster_corpus() {
  std::vector<std::pair<rect, std::vector<std::uint32_t>>> rows;
  for (int i = 0; i < 10; ++i) {
    rows.emplace_back(rect_at(0.1 + 0.001 * i, 0.1), std::vector<std::uint32_t>{0, 1});
    rows.emplace_back(rect_at(0.8 + 0.001 * i, 0.8), std::vector<std::uint32_t>{2, 3});
  }
  return corpus_of(rows, 4);
}

}  // namespace

TEST_CASE("pure root: all examples share one label set") {
  std::vector<std::pair<rect, std::vector<std::uint32_t>>> rows;
  for (int i = 0; i < 8; ++i) rows.emplace_back(rect_at(0.1 * i, 0.2), std::vector<std::uint32_t>{1, 3});
  const auto corpus = corpus_of(rows, 5);
  const auto tree = decision_tree::fit(corpus, all_indices(corpus), {});
  CHECK(tree.node_count() == 1);
  CHECK(tree.depth() == 0);
  CHECK(tree.predict(rect_at(0.0, 0.2), 0.5) == std::vector<std::uint32_t>{1, 3});
  CHECK(tree.predict(rect_at(12.0, -3.0), 0.5) == std::vector<std::uint32_t>{1, 3});
}

TEST_CASE("empty example list rejected") {
  const auto corpus = two_cluster_corpus();
  CHECK_THROWS_AS(decision_tree::fit(corpus, {}, {}), error);
}

TEST_CASE("two disjoint clusters split at depth 1 with perfect train accuracy") {
  const auto corpus = two_cluster_corpus();
  const auto tree = decision_tree::fit(corpus, all_indices(corpus), {});
  CHECK(tree.depth() == 1);
  for (const auto& ex : corpus.examples) {
    const rect q{ex.features[0], ex.features[1], ex.features[2], ex.features[3]};
    CHECK(tree.predict(q, 0.5) == ex.labels);
  }
}

TEST_CASE("XOR layout beats the majority baseline at depth >= 2") {
  // Labels follow the XOR of the two halves of the feature plane: no single
  // axis-aligned split improves impurity, two do.
  std::vector<std::pair<rect, std::vector<std::uint32_t>>> rows;
  for (int i = 0; i < 6; ++i) {
    const double j = 0.002 * i;
    rows.emplace_back(rect_at(0.1 + j, 0.1 + j), std::vector<std::uint32_t>{0});
    rows.emplace_back(rect_at(0.9 + j, 0.9 + j), std::vector<std::uint32_t>{0});
    rows.emplace_back(rect_at(0.1 + j, 0.9 + j), std::vector<std::uint32_t>{1});
    rows.emplace_back(rect_at(0.9 + j, 0.1 + j), std::vector<std::uint32_t>{1});
  }
  const auto corpus = corpus_of(rows, 2);

  // Majority baseline: predicting the more common label set for everything
  // gets exactly half of this corpus right.
  const double baseline = 0.5;

  const auto tree = decision_tree::fit(corpus, all_indices(corpus), {});
  CHECK(tree.depth() >= 2);
  std::size_t correct = 0;
  for (const auto& ex : corpus.examples) {
    const rect q{ex.features[0], ex.features[1], ex.features[2], ex.features[3]};
    if (tree.predict(q, 0.5) == ex.labels) ++correct;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(corpus.examples.size());
  CHECK(accuracy > baseline);
  CHECK(accuracy == 1.0);  // unrestricted depth memorizes the duplicate-free corpus
}

TEST_CASE("unrestricted tree reaches exact-match 1.0 on a duplicate-free corpus") {
  const auto pts = random_points(4000, 3);
  rtree t = build_tree(pts, 32);
  const auto queries = generate_queries(pts, 0.002, 120, 7);
  const auto profiles = profile_queries(t, queries, 0.002);
  std::vector<std::size_t> idx(profiles.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto corpus = make_labeled_corpus(profiles, idx, t.leaf_count(), t.assignment_digest());
  const auto tree = decision_tree::fit(corpus, all_indices(corpus), {});
  for (const auto& ex : corpus.examples) {
    const rect q{ex.features[0], ex.features[1], ex.features[2], ex.features[3]};
    CHECK(tree.predict(q, 0.5) == ex.labels);
  }
}

TEST_CASE("prediction cutoff semantics") {
  const auto corpus = two_cluster_corpus();
  const auto tree = decision_tree::fit(corpus, all_indices(corpus), {});

  SUBCASE("memorized query returns its exact label set") {
    CHECK(tree.predict(rect_at(0.1, 0.1), 0.5) == std::vector<std::uint32_t>{0, 1});
  }

  SUBCASE("cutoff 0 returns every label ever positive in the reached leaf") {
    const auto labels = tree.predict(rect_at(0.1, 0.1), 0.0);
    CHECK(labels == std::vector<std::uint32_t>{0, 1});
  }

  SUBCASE("cutoff above every fraction returns nothing") {
    const auto mixed = corpus_of({{rect_at(0.0, 0.0), {0}}, {rect_at(0.0001, 0.0), {1}}}, 2);
    const auto stump_tree = decision_tree::fit(mixed, all_indices(mixed), {0, 2});
    // Both labels at fraction 0.5 in the single leaf.
    CHECK(stump_tree.predict(rect_at(0.0, 0.0), 0.9).empty());
  }
}

TEST_CASE("held-out prediction beats the majority baseline") {
  const auto pts = random_points(8000, 13);
  rtree t = build_tree(pts, 64);
  const auto queries = generate_queries(pts, 0.001, 300, 19);
  const auto profiles = profile_queries(t, queries, 0.001);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    (i % 5 == 4 ? test_idx : train_idx).push_back(i);
  }
  const auto train = make_labeled_corpus(profiles, train_idx, t.leaf_count(), t.assignment_digest());
  const auto tree = decision_tree::fit(train, all_indices(train), {});

  // Majority baseline: the most frequent single label set in training.
  std::map<std::vector<std::uint32_t>, std::size_t> freq;
  for (const auto& ex : train.examples) ++freq[ex.labels];
  const auto majority =
      std::max_element(freq.begin(), freq.end(),
                       [](const auto& a, const auto& b) { return a.second < b.second; })
          ->first;

  std::size_t tree_hits = 0, baseline_hits = 0, total = 0;
  for (const std::size_t i : test_idx) {
    std::vector<std::uint32_t> truth = profiles[i].true_leaf_ids;
    std::sort(truth.begin(), truth.end());
    const auto predicted = tree.predict(profiles[i].query, 0.5);
    std::vector<std::uint32_t> inter;
    std::set_intersection(predicted.begin(), predicted.end(), truth.begin(), truth.end(),
                          std::back_inserter(inter));
    tree_hits += inter.size();
    inter.clear();
    std::set_intersection(majority.begin(), majority.end(), truth.begin(), truth.end(),
                          std::back_inserter(inter));
    baseline_hits += inter.size();
    total += truth.size();
  }
  REQUIRE(total > 0);
  CHECK(tree_hits > baseline_hits);
}

TEST_CASE("forest aggregates tree distributions") {
  const auto corpus = two_cluster_corpus();
  forest_hyperparams hyper;
  hyper.n_estimators = 15;
  const auto forest = random_forest::fit(corpus, all_indices(corpus), hyper, 7);
  CHECK(forest.tree_count() == 15);
  CHECK(forest.predict(rect_at(0.1, 0.1), 0.5) == std::vector<std::uint32_t>{0, 1});
  CHECK(forest.predict(rect_at(0.8, 0.8), 0.5) == std::vector<std::uint32_t>{2, 3});
  CHECK_THROWS_AS(random_forest::fit(corpus, all_indices(corpus), {0, 1.0, {}}, 1), error);
}

TEST_CASE("forest variance shrinks as the ensemble grows") {
  // Train many small and large forests on bootstrap-noisy data; per-label
  // score variance across seeds must drop with more estimators.
  const auto pts = random_points(3000, 23);
  rtree t = build_tree(pts, 32);
  const auto queries = generate_queries(pts, 0.002, 80, 29);
  const auto profiles = profile_queries(t, queries, 0.002);
  std::vector<std::size_t> idx(profiles.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto corpus = make_labeled_corpus(profiles, idx, t.leaf_count(), t.assignment_digest());
  const rect probe = profiles.front().query;

  const auto variance_at = [&](std::uint32_t n_estimators) {
    std::vector<double> probe_scores;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      forest_hyperparams hyper;
      hyper.n_estimators = n_estimators;
      const auto forest = random_forest::fit(corpus, idx, hyper, seed);
      double score = 0.0;
      for (const auto& [label, s] : forest.scores(probe)) {
        (void)label;
        score += s;
      }
      probe_scores.push_back(score);
    }
    double mean = 0.0;
    for (const double s : probe_scores) mean += s;
    mean /= static_cast<double>(probe_scores.size());
    double var = 0.0;
    for (const double s : probe_scores) var += (s - mean) * (s - mean);
    return var / static_cast<double>(probe_scores.size());
  };

  CHECK(variance_at(40) <= variance_at(2) + 1e-12);
}

TEST_CASE("model serialization") {
  const auto corpus = two_cluster_corpus();

  SUBCASE("round trip preserves predictions on random rects") {
    forest_hyperparams hyper;
    hyper.n_estimators = 10;
    const auto forest = random_forest::fit(corpus, all_indices(corpus), hyper, 3);
    const auto bytes = serialize_model(forest);
    const auto loaded = deserialize_model(bytes);
    rng r(5);
    for (int i = 0; i < 100; ++i) {
      const rect q = random_rect(r);
      CHECK(loaded->predict(q, 0.5) == forest.predict(q, 0.5));
      CHECK(loaded->predict(q, 0.0) == forest.predict(q, 0.0));
    }
    CHECK(loaded->kind() == model_kind::rf);
  }

  SUBCASE("determinism: identical corpus + seed give byte-identical models") {
    forest_hyperparams hyper;
    hyper.n_estimators = 8;
    const auto a = random_forest::fit(corpus, all_indices(corpus), hyper, 11);
    const auto b = random_forest::fit(corpus, all_indices(corpus), hyper, 11);
    CHECK(serialize_model(a) == serialize_model(b));
    const auto c = random_forest::fit(corpus, all_indices(corpus), hyper, 12);
    CHECK(serialize_model(a) != serialize_model(c));
  }

  SUBCASE("empty forest cannot serialize") {
    random_forest empty;
    CHECK_THROWS_AS(serialize_model(empty), error);
  }

  SUBCASE("size grows strictly with n_estimators") {
    forest_hyperparams small;
    small.n_estimators = 10;
    forest_hyperparams large;
    large.n_estimators = 50;
    const auto a = random_forest::fit(corpus, all_indices(corpus), small, 3);
    const auto b = random_forest::fit(corpus, all_indices(corpus), large, 3);
    CHECK(serialize_model(a).size() < serialize_model(b).size());
  }

  SUBCASE("corrupted header rejected") {
    const auto tree = decision_tree::fit(corpus, all_indices(corpus), {});
    auto bytes = serialize_model(tree);
    bytes[4] ^= 0x7f;
    CHECK_THROWS_AS(deserialize_model(bytes), io_error);
  }
}

namespace {

std::vector<query_profile> router_profiles() {
  // High-overlap queries live left, low-overlap right: spatially separable.
  std::vector<query_profile> profiles;
  rng r(31);
  for (int i = 0; i < 400; ++i) {
    query_profile p;
    const bool high = i % 2 == 0;
    const double x = high ? r.uniform(0.0, 0.45) : r.uniform(0.55, 1.0);
    const double y = r.uniform(0.0, 1.0);
    p.query = rect{x, y, x + 0.01, y + 0.01};
    p.visited_count = 10;
    p.true_count = high ? 3 : 10;  // alpha 0.3 vs 1.0
    p.alpha = static_cast<double>(p.true_count) / 10.0;
    p.selectivity = 0.001;
    profiles.push_back(p);
  }
  return profiles;
}

}  // namespace

TEST_CASE("binary router") {
  const auto profiles = router_profiles();

  SUBCASE("label rule: alpha <= tau is high-overlap") {
    CHECK(binary_router::high_overlap_label(0.5, 0.75));
    CHECK(binary_router::high_overlap_label(0.75, 0.75));
    CHECK_FALSE(binary_router::high_overlap_label(1.0, 0.75));
  }

  SUBCASE("monotonicity: larger tau never shrinks the high-overlap class") {
    for (const auto& p : profiles) {
      if (binary_router::high_overlap_label(p.alpha, 0.5)) {
        CHECK(binary_router::high_overlap_label(p.alpha, 0.75));
      }
    }
  }

  SUBCASE("separable corpus trains to strong held-out accuracy") {
    const auto router = binary_router::fit(profiles, 0.75, {}, 3, 0xabc);
    CHECK(router.test_accuracy() >= 0.8);
    CHECK(router.is_high_overlap(rect{0.2, 0.5, 0.21, 0.51}));
    CHECK_FALSE(router.is_high_overlap(rect{0.9, 0.5, 0.91, 0.51}));
    CHECK(router.tau() == 0.75);
    CHECK(router.assignment_digest() == 0xabc);
  }

  SUBCASE("single-class corpus is rejected with guidance") {
    std::vector<query_profile> one_class;
    for (int i = 0; i < 10; ++i) {
      query_profile p;
      p.alpha = 0.2;
      p.query = rect_at(0.1 * i, 0.0);
      one_class.push_back(p);
    }
    CHECK_THROWS_WITH_AS(binary_router::fit(one_class, 0.75, {}, 1, 0),
                         doctest::Contains("widen the workload"), error);
  }

  SUBCASE("serialization round trip preserves behavior and metadata") {
    const auto router = binary_router::fit(profiles, 0.75, {}, 3, 0xabc);
    const auto bytes = router.serialize();
    const auto loaded = binary_router::deserialize(bytes);
    CHECK(loaded.tau() == router.tau());
    CHECK(loaded.test_accuracy() == router.test_accuracy());
    CHECK(loaded.assignment_digest() == router.assignment_digest());
    rng r(7);
    for (int i = 0; i < 100; ++i) {
      const rect q = random_rect(r);
      CHECK(loaded.probability_high(q) == router.probability_high(q));
    }
  }
}
