// Bench front door: build -> train -> eval -> mutate, driven by one config.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "airtree/pipeline.hpp"

namespace {

struct cli_common {
  std::string config_path;
  std::string out_dir;
  std::string scale = "desk";
  double io_ms = -1.0;
  std::uint64_t seed = 0;
  bool has_seed = false;
  bool oracle_predictor = false;
};

void add_common(CLI::App* cmd, cli_common& c) {
  cmd->add_option("--config", c.config_path, "Experiment config file (JSON)");
  cmd->add_option("--out", c.out_dir, "Output/artifact directory");
  cmd->add_option("--scale", c.scale, "desk (default) or paper parameter scale")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--io-ms", c.io_ms, "Simulated time per leaf access, in ms");
  cmd->add_option("--seed", c.seed, "Master seed")->each([&c](const std::string&) {
    c.has_seed = true;
  });
  cmd->add_flag("--oracle-predictor", c.oracle_predictor,
                "Evaluate with the exact-truth predictor injected");
}

airtree::experiment_config resolve(const cli_common& c) {
  airtree::experiment_config config;
  if (!c.config_path.empty()) config = airtree::experiment_config::load(c.config_path);
  if (c.scale == "paper") config.apply_paper_scale();
  if (!c.out_dir.empty()) config.out_dir = c.out_dir;
  if (c.io_ms >= 0.0) config.io_unit_ms = c.io_ms;
  if (c.has_seed) config.seed = c.seed;
  if (c.oracle_predictor) config.oracle_predictor = true;
  config.validate();
  return config;
}

void print_build(const airtree::build_summary& s) {
  std::printf("build: %zu points, %u leaves, height %u, fill min/mean/max %u/%.1f/%u\n",
              s.point_count, s.leaf_count, s.height, s.min_fill, s.mean_fill, s.max_fill);
  std::printf("build: snapshot digest %s\n", airtree::to_hex(s.snapshot_digest).c_str());
}

void print_train(const airtree::train_summary& s) {
  std::printf("train: %zu profiles (train/val/test %zu/%zu/%zu)\n", s.profile_count, s.train_size,
              s.validation_size, s.test_size);
  std::printf("train: router accuracy %.4f\n", s.router_accuracy);
  for (const auto& [kind, report] : s.tuning) {
    std::printf("train: %s grid chosen %ux%u", kind.c_str(), report.chosen_rows,
                report.chosen_cols);
    for (const auto& e : report.entries) {
      std::printf("  [%ux%u recall %.4f]", e.rows, e.cols, e.mean_validation_recall);
    }
    std::printf("\n");
  }
  for (const auto& w : s.warnings) std::printf("train: warning: %s\n", w.c_str());
}

void print_eval(const airtree::eval_summary& s) {
  std::printf("eval: %zu test queries, %zu report rows\n", s.test_queries, s.reports.size());
  for (const auto& [kind, foot] : s.footprints) {
    std::printf("eval: footprint %s: models %zu bytes, tree %zu bytes, overhead %s%%\n",
                kind.c_str(), foot.model_bytes_total, foot.tree_snapshot_bytes,
                foot.overhead_pct.c_str());
  }
}

void print_mutate(const airtree::mutate_summary& s) {
  for (const auto& p : s.policies) {
    std::printf("mutate[%s]: %zu ops, %zu queries, %zu retrains\n", p.policy.c_str(),
                p.operations, p.queries, p.retrains);
    for (const auto& [c, n] : p.case_histogram) {
      std::printf("mutate[%s]: case-%d x%zu\n", p.policy.c_str(), c, n);
    }
    for (const auto& [bucket, recall] : p.staleness_recall_by_bucket) {
      std::printf("mutate[%s]: bucket %s staleness recall %.4f\n", p.policy.c_str(),
                  bucket.c_str(), recall);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ML-enhanced R-tree benchmark pipeline"};
  app.require_subcommand(1);

  cli_common build_c, train_c, eval_c, mutate_c, all_c;
  std::string mutate_script, all_script;

  auto* build_cmd = app.add_subcommand("build", "Ingest the dataset and build the R-tree");
  add_common(build_cmd, build_c);
  auto* train_cmd =
      app.add_subcommand("train", "Generate the workload and train router + grid models");
  add_common(train_cmd, train_c);
  auto* eval_cmd = app.add_subcommand("eval", "Run the test split and emit bucket reports");
  add_common(eval_cmd, eval_c);
  auto* mutate_cmd = app.add_subcommand("mutate", "Replay a mutation script");
  add_common(mutate_cmd, mutate_c);
  mutate_cmd->add_option("--script", mutate_script, "Mutation script path");
  auto* all_cmd = app.add_subcommand("all", "build + train + eval (+ mutate when scripted)");
  add_common(all_cmd, all_c);
  all_cmd->add_option("--script", all_script, "Mutation script path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build_cmd->parsed()) {
      print_build(airtree::cmd_build(resolve(build_c)));
    } else if (train_cmd->parsed()) {
      print_train(airtree::cmd_train(resolve(train_c)));
    } else if (eval_cmd->parsed()) {
      print_eval(airtree::cmd_eval(resolve(eval_c)));
    } else if (mutate_cmd->parsed()) {
      auto config = resolve(mutate_c);
      if (!mutate_script.empty()) config.mutation_script = mutate_script;
      print_mutate(airtree::cmd_mutate(config));
    } else if (all_cmd->parsed()) {
      auto config = resolve(all_c);
      if (!all_script.empty()) config.mutation_script = all_script;
      airtree::cmd_build(config);
      airtree::cmd_train(config);
      airtree::cmd_eval(config);
      if (!config.mutation_script.empty()) print_mutate(airtree::cmd_mutate(config));
      std::printf("all: artifacts in %s\n", config.out_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
