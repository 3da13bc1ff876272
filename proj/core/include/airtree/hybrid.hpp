#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "airtree/grid_index.hpp"
#include "airtree/rtree.hpp"
#include "airtree/tree_classifiers.hpp"

namespace airtree {

enum class routing_mode : std::uint8_t {
  automatic = 0,   ///< overlap-ratio router decides
  force_ai = 1,    ///< every query takes the AI path (oracle experiments)
  force_rtree = 2, ///< degraded mode, e.g. while retraining
};

enum class query_path : std::uint8_t { rtree = 0, ai = 1, ai_then_fallback = 2 };

std::string query_path_name(query_path p);

struct hybrid_options {
  bool fallback_enabled = true;
  double prediction_cutoff = 0.5;
  double io_unit_ms = 1.0;
  std::size_t fallback_window = 1000;  ///< sliding window for the retrain trigger
};

struct query_outcome {
  std::vector<point> results;
  query_path path = query_path::rtree;
  bool routed_high = false;
  double router_probability = 0.0;
  std::vector<leaf_id> predicted_leaf_ids;  ///< AI paths only
  std::size_t leaf_accesses = 0;            ///< total over the executed path(s)
  std::size_t ai_leaf_accesses = 0;         ///< before any fallback
  std::size_t fallback_leaf_accesses = 0;
  double wall_cpu_ms = 0.0;
  double simulated_io_ms = 0.0;
  std::optional<double> recall_vs_truth;  ///< filled by evaluation, absent in production
};

struct routing_trace {
  bool in_bounds = true;
  routing_mode mode = routing_mode::automatic;
  bool routed_high = false;
  double router_probability = 0.0;
  bool used_override_predictor = false;
  std::vector<grid_model_index::cell_prediction> cell_predictions;
  std::vector<std::uint32_t> aggregated_prediction;
  std::string fallback_reason;  ///< empty, or "empty AI result"
  query_outcome outcome;
};

/// Keeps every point returned by `entries` that lies inside `q` (closed
/// containment), preserving order. The AI path's precision-one filter.
std::vector<point> verify_filter(const std::vector<point>& entries, const rect& q);

/// The hybrid index: the overlap-ratio router sends high-overlap queries to
/// the grid-indexed AI path and low-overlap queries to the plain R-tree;
/// an empty AI answer falls back to a full R-tree search.
///
/// The tree is held by non-owning pointer: queries may run concurrently
/// (the fallback window is the only mutable state and sits behind a
/// mutex), while mutations (module mutation) require exclusive access.
class hybrid_index {
 public:
  hybrid_index(rtree* tree, binary_router router, grid_model_index grid,
               hybrid_options options = {});

  /// Construction bypassing the trained grid: `predictor` answers every
  /// AI-path prediction. Used for oracle and adversarial experiments.
  hybrid_index(rtree* tree, binary_router router,
               std::shared_ptr<const multilabel_model> predictor, hybrid_options options = {});

  query_outcome query(const rect& q);
  routing_trace explain(const rect& q);

  void set_routing_mode(routing_mode m) { mode_ = m; }
  routing_mode routing() const { return mode_; }
  void set_override_predictor(std::shared_ptr<const multilabel_model> p) {
    override_predictor_ = std::move(p);
  }

  rtree& tree() { return *tree_; }
  const rtree& tree() const { return *tree_; }
  const binary_router& router() const { return router_; }
  const grid_model_index& grid() const { return grid_; }
  const hybrid_options& options() const { return options_; }

  /// Fraction of queries in the sliding window that needed the fallback.
  double fallback_fraction() const;
  std::size_t window_size() const;
  void reset_window();

 private:
  query_outcome query_impl(const rect& q, routing_trace* trace);
  void note_fallback(bool fell_back);

  rtree* tree_;
  binary_router router_;
  grid_model_index grid_;
  std::shared_ptr<const multilabel_model> override_predictor_;
  hybrid_options options_;
  routing_mode mode_ = routing_mode::automatic;
  mutable std::mutex window_mutex_;
  std::deque<bool> window_;
};

}  // namespace airtree
