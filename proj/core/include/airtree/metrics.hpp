#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "airtree/hybrid.hpp"
#include "airtree/workload.hpp"

namespace airtree {

struct cost_model {
  double io_unit_ms = 1.0;  ///< simulated time per leaf access
};

/// Object recall achievable by reading exactly the predicted leaves:
/// objects in predicted-and-true leaves over objects in true leaves.
/// Defined as 1 when the true result set is empty.
double predicted_leaf_recall(const std::vector<leaf_id>& predicted_sorted,
                             const query_profile& truth);

/// Returned objects over true objects (1 when the truth is empty).
double query_recall(const query_outcome& outcome, const query_profile& truth);

/// Fraction of returned points actually inside the query rectangle; the
/// hybrid keeps this at exactly 1.
double query_precision(const query_outcome& outcome, const rect& q);

/// CPU time plus leaf accesses priced by the cost model.
double query_time_ms(const query_outcome& outcome, const cost_model& cost);

struct bucket_report {
  std::string view;    ///< by_true_alpha | by_router
  std::string model;   ///< dct | rf | nn_bce | nn_custom | rtree | oracle
  double selectivity = 0.0;
  std::string bucket;  ///< alpha edge (by_true_alpha) or path name (by_router)
  std::size_t query_count = 0;
  double mean_recall = 0.0;
  double mean_leaf_accesses = 0.0;
  double mean_io_ms = 0.0;
  double fallback_fraction = 0.0;
  double precision = 1.0;
  // Measured wall-clock fields; kept out of the deterministic report file.
  double mean_cpu_ms = 0.0;
  double mean_query_time_ms = 0.0;
};

/// Groups outcome/truth pairs two ways: per (selectivity, true-alpha
/// bucket) and per (selectivity, executed path). Means over each group.
std::vector<bucket_report> aggregate_outcomes(const std::vector<query_outcome>& outcomes,
                                              const std::vector<query_profile>& truths,
                                              const std::string& model_name,
                                              const std::vector<double>& bucket_edges,
                                              const cost_model& cost);

struct footprint_component {
  std::string name;
  std::size_t bytes = 0;
};

struct footprint_report {
  std::vector<footprint_component> components;
  std::size_t model_bytes_total = 0;
  std::size_t tree_snapshot_bytes = 0;
  double overhead_ratio = 0.0;        ///< models / tree
  std::string overhead_pct;           ///< percentage with 2 decimals
};

footprint_report model_footprint(const std::vector<footprint_component>& model_components,
                                 std::size_t tree_snapshot_bytes);

/// Line-delimited JSON, one bucket_report per line. `include_timing`
/// controls whether measured wall-clock fields are emitted; the
/// deterministic report leaves them out.
std::string reports_to_jsonl(const std::vector<bucket_report>& reports, bool include_timing);
std::vector<bucket_report> reports_from_jsonl(const std::string& text);

/// Human-readable aligned table (timing included).
std::string reports_to_table(const std::vector<bucket_report>& reports);

std::string reports_to_csv(const std::vector<bucket_report>& reports);

std::string footprint_to_table(const footprint_report& report);
std::string footprint_to_json(const footprint_report& report);

}  // namespace airtree
