#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "airtree/geometry.hpp"
#include "airtree/rtree.hpp"
#include "airtree/util.hpp"

namespace airtree {

/// One executed query together with everything the classifiers train on.
struct query_profile {
  rect query;
  double selectivity = 0.0;  ///< configured target class, not the realized value
  std::uint32_t result_count = 0;
  std::uint32_t visited_count = 0;  ///< VN
  std::uint32_t true_count = 0;     ///< TN
  double alpha = 1.0;               ///< TN/VN; 1 when VN = 0
  std::vector<leaf_id> true_leaf_ids;
  std::map<leaf_id, std::uint32_t> per_leaf_hits;
};

struct workload_split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;
};

struct labeled_example {
  std::array<double, 4> features{};  ///< x_min, y_min, x_max, y_max
  std::vector<std::uint32_t> labels; ///< sorted true leaf ids
  std::size_t profile_index = 0;
};

struct labeled_corpus {
  std::vector<labeled_example> examples;
  std::uint32_t label_count = 0;
  std::uint64_t digest = 0;
};

// -- dataset ingestion -------------------------------------------------------

/// Comma-delimited file with a header row. Rows whose coordinate cells are
/// missing or unparseable are dropped; exact coordinate duplicates are
/// dropped when dedup is set. Object ids follow file order.
std::vector<point> ingest_csv(const std::string& path, const std::string& x_column,
                              const std::string& y_column, bool dedup);

std::string export_csv(const std::vector<point>& points, const std::string& x_column,
                       const std::string& y_column);

struct synthetic_spec {
  std::uint32_t count = 100000;
  std::uint32_t cluster_count = 32;
  double cluster_spread = 0.02;
  std::uint64_t seed = 1;
};

/// Mixture of Gaussian clusters over the unit square; the default dataset.
std::vector<point> synthetic_points(const synthetic_spec& spec);

// -- query generation and profiling ------------------------------------------

/// Rectangles whose true result count lands within +-20% of
/// target_selectivity * |points|. Deterministic per seed.
std::vector<rect> generate_queries(const std::vector<point>& points, double target_selectivity,
                                   std::size_t count, std::uint64_t seed,
                                   std::size_t max_attempts_per_query = 256);

std::vector<query_profile> profile_queries(const rtree& tree, const std::vector<rect>& queries,
                                           double selectivity);

/// Smallest bucket edge >= alpha; edges ascend in (0, 1].
double alpha_bucket(double alpha, const std::vector<double>& edges);

std::map<double, std::vector<std::size_t>> bucket_by_alpha(
    const std::vector<query_profile>& profiles, const std::vector<double>& edges);

/// Stratified shuffle-split over (selectivity, alpha-bucket) cells. Strata
/// smaller than 3 go wholly to train with a warning.
workload_split split_workload(const std::vector<query_profile>& profiles,
                              const std::array<double, 3>& ratios, std::uint64_t seed,
                              const std::vector<double>& bucket_edges);

/// Rejection-driven workload builder: keeps generating and profiling until
/// every (selectivity, bucket) cell holds `per_cell_quota` queries or the
/// attempt budget runs out. Unfilled cells are reported, not fatal.
struct workload_build_report {
  std::map<std::pair<double, double>, std::size_t> cell_counts;
  std::vector<std::string> warnings;
};

std::vector<query_profile> build_bucketed_workload(
    const rtree& tree, const std::vector<point>& points,
    const std::vector<double>& selectivities, const std::vector<double>& bucket_edges,
    std::size_t per_cell_quota, std::uint64_t seed, workload_build_report* report = nullptr,
    std::size_t oversample_factor = 64);

// -- labeled corpus -----------------------------------------------------------

labeled_corpus make_labeled_corpus(const std::vector<query_profile>& profiles,
                                   const std::vector<std::size_t>& indices,
                                   std::uint32_t label_count, std::uint64_t assignment_digest);

// -- corpus persistence (line-delimited JSON) ---------------------------------

struct corpus_entry {
  query_profile profile;
  std::string split;  ///< train | validation | test | (empty)
};

std::string corpus_to_jsonl(const std::vector<corpus_entry>& entries);
std::vector<corpus_entry> corpus_from_jsonl(const std::string& text);
void save_corpus(const std::string& path, const std::vector<corpus_entry>& entries);
std::vector<corpus_entry> load_corpus(const std::string& path);

}  // namespace airtree
