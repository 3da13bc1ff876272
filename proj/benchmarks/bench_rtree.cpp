#include <benchmark/benchmark.h>

#include "airtree/rtree.hpp"
#include "airtree/workload.hpp"

namespace {

using namespace airtree;

std::vector<point> bench_points(std::size_t n) {
  synthetic_spec spec;
  spec.count = static_cast<std::uint32_t>(n);
  spec.seed = 77;
  return synthetic_points(spec);
}

void BM_rtree_build(benchmark::State& state) {
  const auto pts = bench_points(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    rtree t(200);
    for (const point& p : pts) t.insert(p);
    benchmark::DoNotOptimize(t.assign_leaf_ids());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_rtree_build)->Arg(10000)->Arg(50000);

void BM_rtree_range_search(benchmark::State& state) {
  const auto pts = bench_points(100000);
  rtree t(200);
  for (const point& p : pts) t.insert(p);
  t.assign_leaf_ids();
  const auto queries = generate_queries(pts, 0.0001, 64, 5);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(t.range_search(queries[i++ % queries.size()]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_rtree_range_search);

void BM_rtree_read_leaf(benchmark::State& state) {
  const auto pts = bench_points(100000);
  rtree t(200);
  for (const point& p : pts) t.insert(p);
  const auto leaves = t.assign_leaf_ids();
  leaf_id id = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(t.read_leaf(id));
    id = (id + 1) % leaves;
  }
}
BENCHMARK(BM_rtree_read_leaf);

}  // namespace
