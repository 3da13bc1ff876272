#pragma once

#include <map>
#include <string>
#include <vector>

#include "airtree/config.hpp"
#include "airtree/metrics.hpp"
#include "airtree/mutation.hpp"

namespace airtree {

/// Artifact filenames under the configured output directory.
namespace artifact {
inline constexpr const char* config_file = "config.json";
inline constexpr const char* tree_file = "tree.bin";
inline constexpr const char* build_file = "build.json";
inline constexpr const char* corpus_file = "corpus.jsonl";
inline constexpr const char* router_file = "router.bin";
inline constexpr const char* models_dir = "models";
inline constexpr const char* train_file = "train.json";
inline constexpr const char* report_file = "report.jsonl";
inline constexpr const char* timing_file = "timing.jsonl";
inline constexpr const char* table_file = "report.txt";
inline constexpr const char* csv_file = "report.csv";
inline constexpr const char* footprint_file = "footprint.json";
inline constexpr const char* mutate_file = "mutate.json";
}  // namespace artifact

std::vector<point> load_dataset(const experiment_config& config);

struct build_summary {
  std::size_t point_count = 0;
  std::uint32_t leaf_count = 0;
  std::uint32_t height = 0;
  std::uint64_t snapshot_digest = 0;
  std::uint64_t assignment_digest = 0;
  std::uint32_t min_fill = 0;
  std::uint32_t max_fill = 0;
  double mean_fill = 0.0;
};

build_summary cmd_build(const experiment_config& config);

struct train_summary {
  double router_accuracy = 0.0;
  std::size_t profile_count = 0;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  std::size_t test_size = 0;
  std::uint64_t assignment_digest = 0;
  std::map<std::string, grid_tuning_report> tuning;
  std::vector<std::string> warnings;
};

train_summary cmd_train(const experiment_config& config);

struct eval_summary {
  std::vector<bucket_report> reports;            ///< deterministic + timing fields
  std::map<std::string, footprint_report> footprints;  ///< per model kind
  std::size_t test_queries = 0;
};

eval_summary cmd_eval(const experiment_config& config);

struct mutate_policy_summary {
  std::string policy;
  std::map<int, std::size_t> case_histogram;
  std::size_t operations = 0;
  std::size_t queries = 0;
  std::size_t retrains = 0;
  std::map<std::string, double> staleness_recall_by_bucket;
  std::uint64_t final_assignment_digest = 0;
};

struct mutate_summary {
  std::vector<mutate_policy_summary> policies;
};

mutate_summary cmd_mutate(const experiment_config& config);

void run_all(const experiment_config& config);

}  // namespace airtree
