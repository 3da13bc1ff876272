#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "airtree/grid_index.hpp"
#include "airtree/trainers.hpp"
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

grid_geometry unit_grid(std::uint32_t rows, std::uint32_t cols) {
  grid_geometry g;
  g.bounds = rect{0.0, 0.0, 1.0, 1.0};
  g.rows = rows;
  g.cols = cols;
  return g;
}

rect small_rect(double x, double y, double s = 0.02) { return rect{x, y, x + s, y + s}; }

}  // namespace

TEST_CASE("cell geometry covers the bounds exactly") {
  const grid_geometry g = unit_grid(4, 4);
  double area = 0.0;
  for (std::uint32_t r = 0; r < 4; ++r) {
    for (std::uint32_t c = 0; c < 4; ++c) area += g.cell_rect(r, c).area();
  }
  CHECK(area == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.cell_rect(0, 0).x_min == 0.0);
  CHECK(g.cell_rect(3, 3).x_max == 1.0);
  CHECK(g.cell_rect(3, 3).y_max == 1.0);

  // Interior points land in exactly one cell (boundaries may touch two).
  rng r(5);
  for (int i = 0; i < 200; ++i) {
    const double x = 0.001 + 0.998 * r.next_double();
    const double y = 0.001 + 0.998 * r.next_double();
    int containing = 0;
    int strictly = 0;
    for (std::uint32_t row = 0; row < 4; ++row) {
      for (std::uint32_t col = 0; col < 4; ++col) {
        const rect cell = g.cell_rect(row, col);
        if (cell.contains(point{x, y, 0})) ++containing;
        if (x > cell.x_min && x < cell.x_max && y > cell.y_min && y < cell.y_max) ++strictly;
      }
    }
    CHECK(containing >= 1);
    CHECK(strictly <= 1);
  }
}

TEST_CASE("cell assignment") {
  const auto corpus = corpus_of({{small_rect(0.1, 0.1), {0}}}, 1);
  const dct_cell_trainer trainer{{}};
  const auto index = grid_model_index::train(corpus, unit_grid(4, 4), trainer, 1, 0);

  SUBCASE("rect strictly inside one cell") {
    const auto cells = index.overlapping_cells(rect{0.05, 0.05, 0.2, 0.2});
    REQUIRE(cells.size() == 1);
    CHECK(cells.front() == std::pair<std::uint32_t, std::uint32_t>{0, 0});
  }

  SUBCASE("rect spanning a 2x2 block") {
    const auto cells = index.overlapping_cells(rect{0.3, 0.3, 0.6, 0.6});
    CHECK(cells.size() == 4);
  }

  SUBCASE("rect equal to the full bounds covers all cells") {
    CHECK(index.overlapping_cells(rect{0.0, 0.0, 1.0, 1.0}).size() == 16);
  }

  SUBCASE("rect outside the bounds maps to no cells") {
    CHECK(index.overlapping_cells(rect{2.0, 2.0, 3.0, 3.0}).empty());
  }
}

TEST_CASE("1x1 grid equals the bare classifier") {
  // Seed-sensitive forests are the meaningful check here.
  std::vector<std::pair<rect, std::vector<std::uint32_t>>> rows;
  rng r(3);
  for (int i = 0; i < 60; ++i) {
    const double x = r.next_double() * 0.9;
    rows.emplace_back(small_rect(x, r.next_double() * 0.9),
                      std::vector<std::uint32_t>{static_cast<std::uint32_t>(x * 5.0)});
  }
  const auto corpus = corpus_of(rows, 5);
  const forest_hyperparams hyper{20, 1.0, {}};
  const rf_cell_trainer trainer{hyper};
  const std::uint64_t seed = 77;
  const auto index = grid_model_index::train(corpus, unit_grid(1, 1), trainer, seed, 0);

  std::vector<std::size_t> all(corpus.examples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto bare = random_forest::fit(corpus, all, hyper, rng::derive_seed(seed, 0));

  rng probe(9);
  for (int i = 0; i < 100; ++i) {
    const rect q = random_rect(probe, 0.0, 1.0, 0.1);
    CHECK(index.predict_aggregate(q, 0.5) == bare.predict(q, 0.5));
  }
}

TEST_CASE("two disjoint clusters on a 2x2 grid populate two cells") {
  std::vector<std::pair<rect, std::vector<std::uint32_t>>> rows;
  for (int i = 0; i < 8; ++i) {
    rows.emplace_back(small_rect(0.1 + 0.002 * i, 0.1), std::vector<std::uint32_t>{0});
    rows.emplace_back(small_rect(0.8 + 0.002 * i, 0.8), std::vector<std::uint32_t>{1});
  }
  const auto corpus = corpus_of(rows, 2);
  const dct_cell_trainer trainer{{}};
  const auto index = grid_model_index::train(corpus, unit_grid(2, 2), trainer, 1, 0);
  CHECK(index.populated_cells() == 2);
  CHECK(index.cell_model(0, 0) != nullptr);
  CHECK(index.cell_model(1, 1) != nullptr);
  CHECK(index.cell_model(0, 1) == nullptr);
  CHECK(index.cell_model(1, 0) == nullptr);
  const auto& hist = index.training_histogram();
  CHECK(hist[0] == 8);
  CHECK(hist[3] == 8);

  // Absent cells contribute nothing; a query over an empty cell predicts
  // the empty set (the hybrid layer owns the fallback).
  CHECK(index.predict_aggregate(small_rect(0.8, 0.1), 0.5).empty());
}

TEST_CASE("sparse population on a 20x20 grid trains without failure") {
  std::vector<std::pair<rect, std::vector<std::uint32_t>>> rows;
  for (int i = 0; i < 10; ++i) {
    rows.emplace_back(small_rect(0.05 * i + 0.01, 0.05 * i + 0.01, 0.005),
                      std::vector<std::uint32_t>{static_cast<std::uint32_t>(i)});
  }
  const auto corpus = corpus_of(rows, 10);
  const dct_cell_trainer trainer{{}};
  const auto index = grid_model_index::train(corpus, unit_grid(20, 20), trainer, 1, 0);
  CHECK(index.populated_cells() <= 20);
  CHECK(index.populated_cells() >= 10);
}

TEST_CASE("aggregation modes") {
  // Cell (0,0) trains on label sets {1,2}; cell (0,1) on {2,3}.
  std::vector<std::pair<rect, std::vector<std::uint32_t>>> rows;
  for (int i = 0; i < 5; ++i) {
    rows.emplace_back(small_rect(0.1 + 0.002 * i, 0.4), std::vector<std::uint32_t>{1, 2});
    rows.emplace_back(small_rect(0.8 + 0.002 * i, 0.4), std::vector<std::uint32_t>{2, 3});
  }
  const auto corpus = corpus_of(rows, 4);
  const dct_cell_trainer trainer{{}};
  const rect spanning{0.2, 0.4, 0.8, 0.45};  // overlaps both cells of the 1x2 grid

  SUBCASE("union merges predictions") {
    const auto index =
        grid_model_index::train(corpus, unit_grid(1, 2), trainer, 1, 0,
                                aggregation_mode::set_union);
    CHECK(index.predict_aggregate(spanning, 0.5) == std::vector<std::uint32_t>{1, 2, 3});
  }

  SUBCASE("vote keeps majorities only") {
    const auto index = grid_model_index::train(corpus, unit_grid(1, 2), trainer, 1, 0,
                                               aggregation_mode::majority_vote);
    CHECK(index.predict_aggregate(spanning, 0.5) == std::vector<std::uint32_t>{2});
  }

  SUBCASE("single overlapping cell answers verbatim under either mode") {
    const auto index = grid_model_index::train(corpus, unit_grid(1, 2), trainer, 1, 0,
                                               aggregation_mode::majority_vote);
    CHECK(index.predict_aggregate(small_rect(0.1, 0.4), 0.5) ==
          std::vector<std::uint32_t>{1, 2});
  }

  SUBCASE("union aggregation is monotone in the overlapping cell set") {
    const auto index = grid_model_index::train(corpus, unit_grid(1, 2), trainer, 1, 0,
                                               aggregation_mode::set_union);
    const auto narrow = index.predict_aggregate(small_rect(0.1, 0.4), 0.5);
    const auto wide = index.predict_aggregate(spanning, 0.5);
    for (const auto label : narrow) {
      CHECK(std::find(wide.begin(), wide.end(), label) != wide.end());
    }
  }
}

TEST_CASE("grid size tuning") {
  // Two label clusters inside the same 2x2 cell but different 4x4 cells.
  // Blunt per-cell models (min_samples_leaf huge) cannot separate them, so
  // only the finer grid reaches them at cutoff 0.6.
  std::vector<std::pair<rect, std::vector<std::uint32_t>>> rows;
  std::vector<query_profile> profiles;
  for (int i = 0; i < 12; ++i) {
    const bool first = i % 2 == 0;
    const rect q = first ? small_rect(0.05 + 0.001 * i, 0.05, 0.01)
                         : small_rect(0.30 + 0.001 * i, 0.30, 0.01);
    rows.emplace_back(q, std::vector<std::uint32_t>{first ? 0u : 1u});
    query_profile p;
    p.query = q;
    p.result_count = 10;
    p.true_count = 1;
    p.visited_count = 2;
    p.alpha = 0.5;
    p.per_leaf_hits[first ? 0 : 1] = 10;
    p.true_leaf_ids = {first ? 0u : 1u};
    profiles.push_back(p);
  }
  const auto corpus = corpus_of(rows, 2);

  tree_hyperparams blunt;
  blunt.min_samples_leaf = 1000000;
  const dct_cell_trainer trainer{blunt};

  SUBCASE("single candidate is chosen trivially") {
    const auto index = tune_grid_size(corpus, corpus, profiles, unit_grid(1, 1), {2}, trainer, 1,
                                      0, 0.6);
    REQUIRE(index.tuning().has_value());
    CHECK(index.tuning()->chosen_rows == 2);
    CHECK(index.tuning()->entries.size() == 1);
  }

  SUBCASE("the four-by-four grid wins the engineered two-scale corpus") {
    const auto index = tune_grid_size(corpus, corpus, profiles, unit_grid(1, 1), {2, 4}, trainer,
                                      1, 0, 0.6);
    REQUIRE(index.tuning().has_value());
    CHECK(index.tuning()->chosen_rows == 4);
    REQUIRE(index.tuning()->entries.size() == 2);
    CHECK(index.tuning()->entries[0].mean_validation_recall <
          index.tuning()->entries[1].mean_validation_recall);
  }

  SUBCASE("ties go to the smaller grid") {
    // Perfectly separable either way: both candidates reach recall 1.
    const dct_cell_trainer sharp{{}};
    const auto index =
        tune_grid_size(corpus, corpus, profiles, unit_grid(1, 1), {2, 4}, sharp, 1, 0, 0.5);
    REQUIRE(index.tuning().has_value());
    CHECK(index.tuning()->chosen_rows == 2);
  }

  SUBCASE("tuning is deterministic") {
    const auto a = tune_grid_size(corpus, corpus, profiles, unit_grid(1, 1), {2, 4}, trainer, 9,
                                  0, 0.6);
    const auto b = tune_grid_size(corpus, corpus, profiles, unit_grid(1, 1), {2, 4}, trainer, 9,
                                  0, 0.6);
    CHECK(a.tuning()->chosen_rows == b.tuning()->chosen_rows);
    CHECK(a.tuning()->entries.size() == b.tuning()->entries.size());
    for (std::size_t i = 0; i < a.tuning()->entries.size(); ++i) {
      CHECK(a.tuning()->entries[i].mean_validation_recall ==
            b.tuning()->entries[i].mean_validation_recall);
    }
  }

  SUBCASE("rf and dct candidates both report scores, no winner asserted") {
    const rf_cell_trainer rf_trainer{{5, 1.0, {}}};
    const auto rf_index = tune_grid_size(corpus, corpus, profiles, unit_grid(1, 1), {4, 20},
                                         rf_trainer, 1, 0, 0.5);
    const dct_cell_trainer dct_trainer{{}};
    const auto dct_index = tune_grid_size(corpus, corpus, profiles, unit_grid(1, 1), {4, 20},
                                          dct_trainer, 1, 0, 0.5);
    CHECK(rf_index.tuning()->entries.size() == 2);
    CHECK(dct_index.tuning()->entries.size() == 2);
  }
}

TEST_CASE("feed-forward cells train under the grid trainer") {
  const auto pts = random_points(800, 29);
  rtree t = build_tree(pts, 32);
  const auto queries = generate_queries(pts, 0.01, 40, 7);
  const auto profiles = profile_queries(t, queries, 0.01);
  std::vector<std::size_t> idx(profiles.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto corpus = make_labeled_corpus(profiles, idx, t.leaf_count(), t.assignment_digest());
  const auto A = build_incidence(t);

  nn_config cfg;
  cfg.hidden = {8, 8};
  cfg.epochs = 3;
  cfg.objective = nn_objective::custom;
  const nn_cell_trainer trainer(&t, &A, cfg, &corpus);
  grid_geometry g;
  g.bounds = t.bounds();
  g.rows = 2;
  g.cols = 1;
  const auto index = grid_model_index::train(corpus, g, trainer, 5, t.assignment_digest());
  CHECK(index.kind() == model_kind::nn_custom);
  CHECK(index.populated_cells() >= 1);
  CHECK(trainer.histories().size() == index.populated_cells());
  for (const auto& h : trainer.histories()) {
    CHECK(h.train_loss.size() == 3);
    CHECK(h.validation_loss.size() == 3);
  }
  // The trained index predicts through the standard aggregation path.
  CHECK_NOTHROW(index.predict_aggregate(profiles.front().query, 0.5));
}

TEST_CASE("grid save/load round trip") {
  const auto pts = random_points(3000, 15);
  rtree t = build_tree(pts, 32);
  const auto queries = generate_queries(pts, 0.002, 60, 3);
  const auto profiles = profile_queries(t, queries, 0.002);
  std::vector<std::size_t> idx(profiles.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto corpus = make_labeled_corpus(profiles, idx, t.leaf_count(), t.assignment_digest());

  grid_geometry g;
  g.bounds = t.bounds();
  g.rows = 3;
  g.cols = 3;
  const dct_cell_trainer trainer{{}};
  auto index = grid_model_index::train(corpus, g, trainer, 5, t.assignment_digest());
  grid_tuning_report tuning;
  tuning.chosen_rows = 3;
  tuning.chosen_cols = 3;
  tuning.entries.push_back({3, 3, 0.9});
  index.set_tuning(tuning);

  const auto dir = (std::filesystem::temp_directory_path() / "airtree_grid_test").string();
  std::filesystem::remove_all(dir);
  index.save(dir, "dct");
  const auto loaded = grid_model_index::load(dir, "dct");
  CHECK(loaded.geometry().rows == 3);
  CHECK(loaded.kind() == model_kind::dct);
  CHECK(loaded.assignment_digest() == t.assignment_digest());
  CHECK(loaded.training_histogram() == index.training_histogram());
  REQUIRE(loaded.tuning().has_value());
  CHECK(loaded.tuning()->chosen_rows == 3);
  CHECK(loaded.serialized_model_bytes() == index.serialized_model_bytes());
  rng r(1);
  for (int i = 0; i < 100; ++i) {
    const rect q = random_rect(r, 0.0, 1.0, 0.1);
    CHECK(loaded.predict_aggregate(q, 0.5) == index.predict_aggregate(q, 0.5));
  }
  std::filesystem::remove_all(dir);
}
