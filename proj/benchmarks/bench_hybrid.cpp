#include <benchmark/benchmark.h>

#include "airtree/hybrid.hpp"
#include "airtree/trainers.hpp"
#include "airtree/workload.hpp"

namespace {

using namespace airtree;

struct hybrid_fixture {
  rtree tree;
  std::vector<query_profile> profiles;
  std::optional<hybrid_index> hybrid;

  hybrid_fixture() : tree(200) {
    synthetic_spec spec;
    spec.count = 50000;
    spec.seed = 13;
    const auto pts = synthetic_points(spec);
    for (const point& p : pts) tree.insert(p);
    tree.assign_leaf_ids();

    profiles = build_bucketed_workload(tree, pts, {0.0001}, {0.1, 0.25, 0.5, 0.75, 1.0}, 64, 21);
    const auto split = split_workload(profiles, {0.6, 0.2, 0.2}, 23, {0.1, 0.25, 0.5, 0.75, 1.0});
    const auto router = binary_router::fit(profiles, 0.75, {}, 29, tree.assignment_digest());
    const auto corpus =
        make_labeled_corpus(profiles, split.train, tree.leaf_count(), tree.assignment_digest());
    const dct_cell_trainer trainer{tree_hyperparams{}};
    grid_geometry geometry;
    geometry.bounds = tree.bounds();
    geometry.rows = 4;
    geometry.cols = 4;
    auto grid = grid_model_index::train(corpus, geometry, trainer, 31, tree.assignment_digest());
    hybrid.emplace(&tree, router, std::move(grid));
  }
};

void BM_hybrid_query(benchmark::State& state) {
  static hybrid_fixture f;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.hybrid->query(f.profiles[i++ % f.profiles.size()].query));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_hybrid_query);

void BM_router_classify(benchmark::State& state) {
  static hybrid_fixture f;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        f.hybrid->router().probability_high(f.profiles[i++ % f.profiles.size()].query));
  }
}
BENCHMARK(BM_router_classify);

}  // namespace
