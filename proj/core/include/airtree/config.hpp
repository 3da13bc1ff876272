#pragma once

#include <array>
#include <string>
#include <vector>

#include "airtree/grid_index.hpp"
#include "airtree/mutation.hpp"
#include "airtree/nn.hpp"
#include "airtree/tree_classifiers.hpp"
#include "airtree/workload.hpp"

namespace airtree {

/// One declarative document drives the whole bench pipeline. Desk-scale
/// defaults keep the full suite in the minutes range; `paper_scale()`
/// switches to the reference parameters (M = 1000, 1000 queries per cell).
struct experiment_config {
  // dataset: a CSV path, or the synthetic clustered generator when empty
  std::string csv_path;
  std::string csv_x_column = "x";
  std::string csv_y_column = "y";
  bool csv_dedup = true;
  std::size_t max_rows = 0;  ///< 0 = all; otherwise a prefix, for desk-scale runs
  synthetic_spec synthetic{};

  // tree
  std::uint32_t leaf_capacity = 200;
  double min_fill_ratio = 0.4;

  // workload
  std::vector<double> selectivities{0.00005, 0.0001, 0.0002};
  std::vector<double> alpha_buckets{0.1, 0.25, 0.5, 0.75, 1.0};
  std::size_t queries_per_cell = 200;
  std::size_t workload_oversample = 64;
  double tau = 0.75;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};

  // models
  std::vector<model_kind> model_kinds{model_kind::dct, model_kind::rf, model_kind::nn_bce,
                                      model_kind::nn_custom};
  tree_hyperparams dct_hyper{};
  forest_hyperparams rf_hyper{};
  forest_hyperparams router_hyper{};
  nn_config nn{};
  std::vector<std::uint32_t> grid_candidates{1, 2, 4, 8};
  std::vector<std::uint32_t> nn_grid_candidates{1};  ///< NNs default to a single model
  double prediction_cutoff = 0.5;
  aggregation_mode aggregation = aggregation_mode::set_union;

  // evaluation
  double io_unit_ms = 1.0;
  bool fallback_enabled = true;
  bool oracle_predictor = false;

  // mutation
  std::string mutation_script;
  insert_strategy strategy = insert_strategy::in_place;
  bool mutate_both_policies = true;
  mutation_policy policy{};

  std::uint64_t seed = 1;
  std::string out_dir = "out";

  void validate() const;
  void apply_paper_scale();

  std::string to_json() const;
  static experiment_config from_json(const std::string& text);
  void save(const std::string& path) const;
  static experiment_config load(const std::string& path);

  retrain_config make_retrain_config() const;
};

}  // namespace airtree
