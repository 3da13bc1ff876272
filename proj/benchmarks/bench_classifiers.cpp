#include <benchmark/benchmark.h>

#include "airtree/nn.hpp"
#include "airtree/tree_classifiers.hpp"
#include "airtree/workload.hpp"

namespace {

using namespace airtree;

struct corpus_fixture {
  rtree tree;
  std::vector<query_profile> profiles;
  labeled_corpus corpus;

  corpus_fixture() : tree(200) {
    synthetic_spec spec;
    spec.count = 50000;
    spec.seed = 31;
    const auto pts = synthetic_points(spec);
    for (const point& p : pts) tree.insert(p);
    tree.assign_leaf_ids();
    const auto queries = generate_queries(pts, 0.0001, 512, 9);
    profiles = profile_queries(tree, queries, 0.0001);
    std::vector<std::size_t> all(profiles.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    corpus = make_labeled_corpus(profiles, all, tree.leaf_count(), tree.assignment_digest());
  }
};

const corpus_fixture& fixture() {
  static corpus_fixture f;
  return f;
}

void BM_decision_tree_fit(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<std::size_t> all(f.corpus.examples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (auto _ : state) {
    benchmark::DoNotOptimize(decision_tree::fit(f.corpus, all, tree_hyperparams{}));
  }
}
BENCHMARK(BM_decision_tree_fit);

void BM_forest_predict(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<std::size_t> all(f.corpus.examples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  forest_hyperparams hyper;
  hyper.n_estimators = static_cast<std::uint32_t>(state.range(0));
  const auto forest = random_forest::fit(f.corpus, all, hyper, 3);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forest.predict(f.profiles[i++ % f.profiles.size()].query, 0.5));
  }
}
BENCHMARK(BM_forest_predict)->Arg(10)->Arg(50);

void BM_nn_forward(benchmark::State& state) {
  const auto& f = fixture();
  const auto net = feed_forward_net::make(4, {64, 64, 64}, f.corpus.label_count, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = f.profiles[i++ % f.profiles.size()].query;
    benchmark::DoNotOptimize(net.forward({q.x_min, q.y_min, q.x_max, q.y_max}));
  }
}
BENCHMARK(BM_nn_forward);

}  // namespace
