#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "airtree/metrics.hpp"
#include "helpers.hpp"

using namespace airtree;
using namespace airtree::testing;

namespace {

query_profile profile_with(std::uint32_t results, double alpha, double selectivity = 0.001) {
  query_profile p;
  p.query = rect{0.0, 0.0, 1.0, 1.0};
  p.selectivity = selectivity;
  p.result_count = results;
  p.visited_count = 10;
  p.true_count = static_cast<std::uint32_t>(alpha * 10.0);
  p.alpha = alpha;
  return p;
}

query_outcome outcome_with(std::size_t results, std::size_t accesses, query_path path,
                           double cpu_ms = 0.0) {
  query_outcome o;
  o.path = path;
  for (std::size_t i = 0; i < results; ++i) {
    o.results.push_back(point{0.5, 0.5, static_cast<std::uint32_t>(i)});
  }
  o.leaf_accesses = accesses;
  o.wall_cpu_ms = cpu_ms;
  return o;
}

}  // namespace

TEST_CASE("query recall mirrors the object-count definition") {
  // Truth spread over three leaves holding 5/10/15 qualifying objects.
  query_profile truth;
  truth.query = rect{0.0, 0.0, 1.0, 1.0};
  truth.result_count = 30;
  truth.true_leaf_ids = {1, 2, 3};
  truth.per_leaf_hits = {{1, 5}, {2, 10}, {3, 15}};
  truth.true_count = 3;
  truth.visited_count = 3;

  // Predicting only the lightest leaf yields 5/30; only the heaviest, 15/30.
  CHECK(predicted_leaf_recall({1}, truth) == doctest::Approx(5.0 / 30.0));
  CHECK(predicted_leaf_recall({3}, truth) == 0.5);
  CHECK(predicted_leaf_recall({1, 2, 3}, truth) == 1.0);
  CHECK(predicted_leaf_recall({}, truth) == 0.0);

  // Outcome-level recall counts returned objects.
  CHECK(query_recall(outcome_with(5, 1, query_path::ai), truth) ==
        doctest::Approx(5.0 / 30.0));
  CHECK(query_recall(outcome_with(30, 3, query_path::ai_then_fallback), truth) == 1.0);

  // Empty truth answered with nothing is a perfect answer.
  query_profile empty_truth;
  empty_truth.result_count = 0;
  CHECK(query_recall(outcome_with(0, 2, query_path::ai), empty_truth) == 1.0);
  CHECK(predicted_leaf_recall({7}, empty_truth) == 1.0);
}

TEST_CASE("query time = cpu + accesses * io unit") {
  const cost_model cost{1.0};
  CHECK(query_time_ms(outcome_with(0, 0, query_path::rtree, 0.37), cost) == 0.37);
  CHECK(query_time_ms(outcome_with(0, 10, query_path::rtree, 0.5), cost) == 10.5);
  const cost_model fast{0.0};
  CHECK(query_time_ms(outcome_with(0, 10, query_path::rtree, 0.5), fast) == 0.5);

  // Cost monotonicity in accesses.
  CHECK(query_time_ms(outcome_with(0, 11, query_path::rtree, 0.5), cost) >
        query_time_ms(outcome_with(0, 10, query_path::rtree, 0.5), cost));
}

TEST_CASE("io-dominated limit: oracle/rtree time ratio approaches alpha") {
  // At io = 100 ms the constant CPU term washes out: TN=2 vs VN=20.
  const cost_model heavy{100.0};
  const double oracle_time = query_time_ms(outcome_with(5, 2, query_path::ai, 0.6), heavy);
  const double rtree_time = query_time_ms(outcome_with(5, 20, query_path::rtree, 0.4), heavy);
  const double alpha = 2.0 / 20.0;
  CHECK(std::abs(oracle_time / rtree_time - alpha) < 0.02);
}

TEST_CASE("aggregation groups by bucket and by path") {
  std::vector<query_profile> truths;
  std::vector<query_outcome> outcomes;
  // Two alpha-0.1 queries on the ai path, one alpha-1.0 on the rtree path,
  // one fallback.
  truths.push_back(profile_with(10, 0.1));
  outcomes.push_back(outcome_with(9, 2, query_path::ai, 0.1));
  truths.push_back(profile_with(10, 0.1));
  outcomes.push_back(outcome_with(10, 2, query_path::ai, 0.1));
  truths.push_back(profile_with(10, 1.0));
  outcomes.push_back(outcome_with(10, 10, query_path::rtree, 0.2));
  truths.push_back(profile_with(10, 0.3));
  outcomes.push_back(outcome_with(10, 12, query_path::ai_then_fallback, 0.3));

  const std::vector<double> edges{0.1, 0.25, 0.5, 0.75, 1.0};
  const cost_model cost{1.0};
  const auto reports = aggregate_outcomes(outcomes, truths, "dct", edges, cost);

  // Conservation: per view, group counts sum to the outcome count.
  std::size_t by_alpha = 0, by_router = 0;
  for (const auto& r : reports) {
    (r.view == "by_true_alpha" ? by_alpha : by_router) += r.query_count;
    CHECK(r.model == "dct");
    CHECK(r.precision == 1.0);  // every synthetic result lies inside the rect
  }
  CHECK(by_alpha == outcomes.size());
  CHECK(by_router == outcomes.size());

  const auto find = [&](const std::string& view, const std::string& bucket) {
    for (const auto& r : reports) {
      if (r.view == view && r.bucket == bucket) return r;
    }
    REQUIRE(false);
    return reports.front();
  };

  const auto alpha01 = find("by_true_alpha", "0.1");
  CHECK(alpha01.query_count == 2);
  CHECK(alpha01.mean_recall == doctest::Approx(0.95));
  CHECK(alpha01.mean_leaf_accesses == 2.0);
  CHECK(alpha01.mean_io_ms == 2.0);
  CHECK(alpha01.fallback_fraction == 0.0);

  const auto fallback_row = find("by_router", "ai_then_fallback");
  CHECK(fallback_row.query_count == 1);
  CHECK(fallback_row.mean_recall == 1.0);
  CHECK(fallback_row.fallback_fraction == 1.0);

  // Single-query group means equal that query's values.
  const auto rtree_row = find("by_router", "rtree");
  CHECK(rtree_row.mean_leaf_accesses == 10.0);
  CHECK(rtree_row.mean_cpu_ms == doctest::Approx(0.2));
  CHECK(rtree_row.mean_query_time_ms == doctest::Approx(10.2));
}

TEST_CASE("model footprint") {
  SUBCASE("components add up; percentage has two decimals") {
    const auto report = model_footprint({{"router", 1000}, {"grid_dct", 3000}}, 1000000);
    CHECK(report.model_bytes_total == 4000);
    CHECK(report.overhead_ratio == doctest::Approx(0.004));
    CHECK(report.overhead_pct == "0.40");
  }

  SUBCASE("empty grid leaves the router alone") {
    const auto report = model_footprint({{"router", 1234}}, 10000);
    CHECK(report.model_bytes_total == 1234);
    CHECK(report.overhead_pct == "12.34");
  }

  SUBCASE("zero tree bytes yields zero ratio") {
    const auto report = model_footprint({{"router", 10}}, 0);
    CHECK(report.overhead_ratio == 0.0);
  }
}

TEST_CASE("report serialization round trips and separates timing") {
  bucket_report r;
  r.view = "by_true_alpha";
  r.model = "rf";
  r.selectivity = 0.0001;
  r.bucket = "0.25";
  r.query_count = 40;
  r.mean_recall = 0.9125;
  r.mean_leaf_accesses = 4.25;
  r.mean_io_ms = 4.25;
  r.fallback_fraction = 0.05;
  r.precision = 1.0;
  r.mean_cpu_ms = 0.031;
  r.mean_query_time_ms = 4.281;

  const std::string deterministic = reports_to_jsonl({r}, false);
  CHECK(deterministic.find("cpu") == std::string::npos);
  const std::string with_timing = reports_to_jsonl({r}, true);
  CHECK(with_timing.find("mean_cpu_ms") != std::string::npos);

  const auto back = reports_from_jsonl(with_timing);
  REQUIRE(back.size() == 1);
  CHECK(back[0].view == r.view);
  CHECK(back[0].mean_recall == r.mean_recall);
  CHECK(back[0].mean_cpu_ms == r.mean_cpu_ms);

  // Identical inputs produce identical bytes.
  CHECK(reports_to_jsonl({r}, false) == deterministic);

  CHECK(reports_to_table({r}).find("rf") != std::string::npos);
  CHECK(reports_to_csv({r}).find("0.9125") != std::string::npos);
  CHECK(footprint_to_table(model_footprint({{"router", 10}}, 100)).find("overhead") !=
        std::string::npos);
}
