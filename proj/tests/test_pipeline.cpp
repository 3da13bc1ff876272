#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "airtree/binary_io.hpp"
#include "airtree/pipeline.hpp"
#include "helpers.hpp"

using namespace airtree;
using namespace airtree::testing;

namespace {

namespace fs = std::filesystem;

experiment_config tiny_config(const std::string& out_name) {
  experiment_config c;
  c.synthetic.count = 4000;
  c.synthetic.cluster_count = 10;
  c.synthetic.seed = 5;
  c.leaf_capacity = 64;
  c.selectivities = {0.002};
  c.alpha_buckets = {0.25, 0.5, 0.75, 1.0};
  c.queries_per_cell = 25;
  c.workload_oversample = 32;
  c.model_kinds = {model_kind::dct};
  c.grid_candidates = {1, 2};
  c.nn.epochs = 4;
  c.nn.hidden = {16, 16};
  c.seed = 11;
  c.out_dir = (fs::temp_directory_path() / out_name).string();
  fs::remove_all(c.out_dir);
  return c;
}

std::string artifact_path(const experiment_config& c, const char* name) {
  return (fs::path(c.out_dir) / name).string();
}

}  // namespace

TEST_CASE("config validation and json round trip") {
  experiment_config c;
  CHECK_NOTHROW(c.validate());

  SUBCASE("round trip preserves each field") {
    c.leaf_capacity = 333;
    c.selectivities = {0.001, 0.002};
    c.tau = 0.6;
    c.model_kinds = {model_kind::rf, model_kind::nn_custom};
    c.nn.hidden = {32, 16};
    c.grid_candidates = {2, 20};
    c.io_unit_ms = 2.5;
    c.strategy = insert_strategy::out_of_place;
    const auto back = experiment_config::from_json(c.to_json());
    CHECK(back.leaf_capacity == 333);
    CHECK(back.selectivities == c.selectivities);
    CHECK(back.tau == 0.6);
    CHECK(back.model_kinds == c.model_kinds);
    CHECK(back.nn.hidden == c.nn.hidden);
    CHECK(back.grid_candidates == c.grid_candidates);
    CHECK(back.io_unit_ms == 2.5);
    CHECK(back.strategy == insert_strategy::out_of_place);
    CHECK(back.to_json() == c.to_json());
  }

  SUBCASE("defaults mirror the reference parameters at paper scale") {
    experiment_config p;
    p.apply_paper_scale();
    CHECK(p.leaf_capacity == 1000);
    CHECK(p.queries_per_cell == 1000);
    CHECK(p.selectivities == std::vector<double>{0.00005, 0.0001, 0.0002});
    CHECK(p.alpha_buckets == std::vector<double>{0.1, 0.25, 0.5, 0.75, 1.0});
    CHECK(p.tau == 0.75);
    CHECK(p.split_ratios == std::array<double, 3>{0.6, 0.2, 0.2});
  }

  SUBCASE("invalid settings are rejected before any work") {
    experiment_config bad = tiny_config("airtree_cfg");
    bad.tau = 1.5;
    CHECK_THROWS_AS(bad.validate(), error);
    bad = tiny_config("airtree_cfg");
    bad.alpha_buckets = {0.5, 0.25};
    CHECK_THROWS_AS(bad.validate(), error);
    bad = tiny_config("airtree_cfg");
    bad.split_ratios = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(bad.validate(), error);
    bad = tiny_config("airtree_cfg");
    bad.leaf_capacity = 1;
    CHECK_THROWS_AS(bad.validate(), error);
  }
}

TEST_CASE("build stage") {
  auto config = tiny_config("airtree_p_build");
  const auto s = cmd_build(config);
  CHECK(s.point_count == 4000);
  CHECK(s.leaf_count >= (4000 + 63) / 64);  // pigeonhole
  CHECK(fs::exists(artifact_path(config, artifact::tree_file)));
  CHECK(fs::exists(artifact_path(config, artifact::build_file)));
  CHECK(fs::exists(artifact_path(config, artifact::config_file)));

  // Rebuild from the identical config reproduces the identical snapshot.
  const auto again = cmd_build(config);
  CHECK(again.snapshot_digest == s.snapshot_digest);
  CHECK(again.assignment_digest == s.assignment_digest);
  fs::remove_all(config.out_dir);
}

TEST_CASE("full pipeline: train, eval, determinism, digests") {
  auto config = tiny_config("airtree_p_full");
  cmd_build(config);
  const auto train = cmd_train(config);
  CHECK(train.profile_count > 0);
  CHECK(train.router_accuracy >= 0.0);
  CHECK(train.tuning.count("dct") == 1);
  CHECK(train.tuning.at("dct").entries.size() == 2);  // candidates {1, 2}
  CHECK(fs::exists(artifact_path(config, artifact::corpus_file)));
  CHECK(fs::exists(artifact_path(config, artifact::router_file)));
  CHECK(fs::exists((fs::path(config.out_dir) / "models" / "dct_manifest.json").string()));

  const auto eval = cmd_eval(config);
  CHECK(eval.test_queries > 0);
  CHECK(eval.footprints.count("dct") == 1);
  CHECK(eval.footprints.at("dct").model_bytes_total > 0);

  // The plain R-tree baseline has recall 1.0 in every bucket row.
  bool saw_rtree_rows = false;
  for (const auto& r : eval.reports) {
    if (r.model == "rtree") {
      saw_rtree_rows = true;
      CHECK(r.mean_recall == 1.0);
      CHECK(r.fallback_fraction == 0.0);
    }
    CHECK(r.precision == 1.0);
  }
  CHECK(saw_rtree_rows);

  SUBCASE("the whole pipeline is byte-deterministic") {
    auto config2 = tiny_config("airtree_p_full2");
    cmd_build(config2);
    cmd_train(config2);
    cmd_eval(config2);
    for (const char* name : {artifact::corpus_file, artifact::train_file, artifact::build_file,
                             artifact::footprint_file, artifact::report_file}) {
      CHECK(read_file_text(artifact_path(config, name)) ==
            read_file_text(artifact_path(config2, name)));
    }
    CHECK(fs::exists((fs::path(config.out_dir) / "outcomes_dct.jsonl").string()));
    CHECK(fs::exists((fs::path(config.out_dir) / "outcomes_rtree.jsonl").string()));
    fs::remove_all(config2.out_dir);
  }

  SUBCASE("eval rejects artifacts from a different snapshot") {
    // Retrain against a different dataset: the digest handshake must fail.
    auto other = config;
    other.synthetic.seed = 999;
    cmd_build(other);  // overwrites tree.bin in the same out_dir
    CHECK_THROWS_WITH_AS(cmd_eval(other), doctest::Contains("different tree"), error);
  }

  fs::remove_all(config.out_dir);
}

TEST_CASE("csv datasets build through the same pipeline, prefix respected") {
  auto config = tiny_config("airtree_p_csv");
  const auto pts = random_points(30000, 3);
  const std::string csv = (fs::path(config.out_dir) / "points.csv").string();
  fs::create_directories(config.out_dir);
  write_file_text(csv, export_csv(pts, "lon", "lat"));
  config.csv_path = csv;
  config.csv_x_column = "lon";
  config.csv_y_column = "lat";
  config.max_rows = 12000;  // desk-scale prefix of a large file
  const auto s = cmd_build(config);
  CHECK(s.point_count == 12000);
  fs::remove_all(config.out_dir);
}

TEST_CASE("oracle-predictor evaluation emits an oracle column") {
  auto config = tiny_config("airtree_p_oracle");
  config.oracle_predictor = true;
  cmd_build(config);
  cmd_train(config);
  const auto eval = cmd_eval(config);
  bool saw_oracle = false;
  for (const auto& r : eval.reports) {
    if (r.model == "oracle") {
      saw_oracle = true;
      CHECK(r.mean_recall == 1.0);
    }
  }
  CHECK(saw_oracle);

  // With exact predictions the oracle reads the true leaves only, so its
  // access mean stays at or below the R-tree's in every matching bucket.
  for (const auto& r : eval.reports) {
    if (r.model != "oracle" || r.view != "by_true_alpha") continue;
    for (const auto& base : eval.reports) {
      if (base.model == "rtree" && base.view == r.view && base.bucket == r.bucket &&
          base.selectivity == r.selectivity) {
        CHECK(r.mean_leaf_accesses <= base.mean_leaf_accesses + 1e-9);
      }
    }
  }
  CHECK(fs::exists((fs::path(config.out_dir) / "outcomes_oracle.jsonl").string()));
  fs::remove_all(config.out_dir);
}

TEST_CASE("mutate stage replays scripts under both policies") {
  auto config = tiny_config("airtree_p_mut");
  cmd_build(config);
  cmd_train(config);

  SUBCASE("no-op script produces an empty log") {
    const std::string script = (fs::path(config.out_dir) / "noop.txt").string();
    write_file_text(script, "# nothing happens\n");
    config.mutation_script = script;
    const auto summary = cmd_mutate(config);
    REQUIRE(summary.policies.size() == 2);
    for (const auto& p : summary.policies) {
      CHECK(p.operations == 0);
      CHECK(p.queries == 0);
    }
  }

  SUBCASE("script ending in retrain changes the assignment digest") {
    const std::string script = (fs::path(config.out_dir) / "mut.txt").string();
    write_file_text(script,
                    "insert 0.5 0.5\n"
                    "insert 0.51 0.52\n"
                    "delete 0\n"
                    "update 1 0.2 0.2\n"
                    "query 0.0 0.0 1.0 1.0\n"
                    "retrain\n"
                    "query 0.0 0.0 1.0 1.0\n");
    config.mutation_script = script;
    const auto summary = cmd_mutate(config);
    const auto build_meta = nlohmann::json::parse(
        read_file_text(artifact_path(config, artifact::build_file)));
    const auto original_digest = build_meta.at("assignment_digest").get<std::string>();
    for (const auto& p : summary.policies) {
      CHECK(p.retrains == 1);
      CHECK(to_hex(p.final_assignment_digest) != original_digest);
      CHECK(p.queries == 2);
      CHECK(p.operations == 5);  // insert x2, delete, update_delete, update_insert
    }
    CHECK(fs::exists(artifact_path(config, artifact::mutate_file)));
    CHECK(fs::exists((fs::path(config.out_dir) / "mutation_log_in_place.jsonl").string()));
  }

  SUBCASE("malformed script aborts with its line number") {
    const std::string script = (fs::path(config.out_dir) / "bad.txt").string();
    write_file_text(script, "insert 0.5 0.5\nbogus op here\n");
    config.mutation_script = script;
    CHECK_THROWS_WITH_AS(cmd_mutate(config), doctest::Contains("line 2"), error);
  }

  fs::remove_all(config.out_dir);
}
