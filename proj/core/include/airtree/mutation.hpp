#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "airtree/hybrid.hpp"
#include "airtree/nn.hpp"
#include "airtree/tree_classifiers.hpp"
#include "airtree/workload.hpp"

namespace airtree {

enum class insert_strategy : std::uint8_t { in_place = 0, out_of_place = 1 };

std::string insert_strategy_name(insert_strategy s);
insert_strategy insert_strategy_from_name(const std::string& name);

struct mutation_policy {
  insert_strategy strategy = insert_strategy::in_place;
  /// Out-of-place chains longer than this flag the leaf for priority
  /// handling at retrain time.
  std::size_t overflow_chain_cap = 4;
  /// Manual retrains by default; when enabled, a retrain fires once the
  /// fallback fraction over the hybrid's sliding window exceeds the limit.
  bool threshold_trigger = false;
  double fallback_threshold = 0.2;
  std::size_t trigger_min_window = 100;
};

struct mutation_record {
  std::string kind;  ///< insert | delete | update_delete | update_insert
  std::uint32_t oid = 0;
  std::optional<point> pt;
  leaf_id affected_leaf = k_no_leaf;
  int insert_case = 0;  ///< 1..4 for classified inserts, 0 otherwise
  bool split = false;
  bool overflow_used = false;
  bool overflow_created = false;
  leaf_id new_leaf = k_no_leaf;
  bool chain_over_cap = false;
  std::size_t script_line = 0;
};

struct mutation_log {
  std::vector<mutation_record> records;

  std::map<int, std::size_t> case_histogram() const;
  std::string to_jsonl() const;
};

// -- mutation scripts ----------------------------------------------------------

/// Line-delimited operations:
///   capacity <M>
///   insert <x> <y> [oid]
///   delete <oid>
///   update <oid> <x> <y>
///   query <xmin> <ymin> <xmax> <ymax>
///   assign
///   retrain
/// '#' starts a comment. Malformed lines abort with their line number.
struct script_op {
  enum class op_type : std::uint8_t {
    set_capacity,
    insert,
    erase,
    update,
    query,
    assign,
    retrain,
  };
  op_type type = op_type::insert;
  double x = 0.0, y = 0.0, x2 = 0.0, y2 = 0.0;
  std::uint32_t oid = 0;
  bool has_oid = false;
  std::uint32_t capacity = 0;
  std::size_t line = 0;
};

std::vector<script_op> parse_mutation_script(const std::string& text);

// -- retraining ----------------------------------------------------------------

struct retrain_config {
  double tau = 0.75;
  std::vector<double> bucket_edges{0.1, 0.25, 0.5, 0.75, 1.0};
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
  model_kind kind = model_kind::dct;
  std::vector<std::uint32_t> grid_candidates{1, 2, 4};
  tree_hyperparams dct_hyper{};
  forest_hyperparams rf_hyper{};
  forest_hyperparams router_hyper{};
  nn_config nn{};
  double prediction_cutoff = 0.5;
  std::uint64_t seed = 1;
};

struct retrain_result {
  rtree tree;  ///< compacted, freshly id-assigned
  binary_router router;
  grid_model_index grid;
  std::vector<query_profile> profiles;
  workload_split split;
};

/// Compacts a copy of the tree (resolving deferred splits and dropping
/// logically deleted entries), re-assigns DFS ids, re-profiles the given
/// workload and retrains router and grid. The input tree is untouched;
/// failures leave the caller's index fully usable.
retrain_result retrain_index(const rtree& current, const std::vector<std::pair<rect, double>>& workload,
                             const retrain_config& cfg);

// -- replay session --------------------------------------------------------------

struct query_record {
  std::size_t script_line = 0;
  rect q;
  std::vector<leaf_id> visited;  ///< R-tree component access set
  std::size_t result_count = 0;
  double alpha = 1.0;  ///< recomputed at query time, TN/VN over the current tree
  std::optional<query_outcome> hybrid_outcome;
  double recall_vs_live = 1.0;  ///< staleness recall against the live point set
};

struct retrain_event {
  std::size_t after_record = 0;  ///< log position when the retrain fired
  std::uint64_t old_assignment_digest = 0;
  std::uint64_t new_assignment_digest = 0;
  std::uint32_t old_leaf_count = 0;
  std::uint32_t new_leaf_count = 0;
};

struct replay_result {
  mutation_log log;
  std::vector<query_record> queries;
  std::vector<retrain_event> retrain_events;
  std::size_t retrains = 0;
};

/// Owns a tree (and optionally the trained hybrid around it) and applies
/// mutations under one policy, keeping a brute-force live-point oracle on
/// the side. Single writer; queries interleave with mutations only from
/// this session's thread.
class mutation_session {
 public:
  mutation_session(rtree tree, mutation_policy policy);

  void attach_models(binary_router router, grid_model_index grid, hybrid_options options);
  /// Hybrid around an injected predictor (oracle/adversarial experiments);
  /// skips the grid digest handshake.
  void attach_predictor(binary_router router, std::shared_ptr<const multilabel_model> predictor,
                        hybrid_options options);
  void set_retrain_source(std::vector<std::pair<rect, double>> workload, retrain_config cfg);

  mutation_record apply_insert(point p, std::size_t script_line = 0);
  mutation_record apply_delete(std::uint32_t oid, std::size_t script_line = 0);
  std::vector<mutation_record> apply_update(std::uint32_t oid, double x, double y,
                                            std::size_t script_line = 0);
  query_record run_query(const rect& q, std::size_t script_line = 0);
  void run_retrain();

  replay_result replay(const std::vector<script_op>& ops);
  replay_result replay_text(const std::string& script_text);

  rtree& tree() { return *tree_; }
  const rtree& tree() const { return *tree_; }
  hybrid_index* hybrid() { return hybrid_.has_value() ? &*hybrid_ : nullptr; }
  const mutation_log& log() const { return log_; }
  const std::map<std::uint32_t, point>& live_points() const { return live_; }
  const std::vector<retrain_event>& retrain_events() const { return retrain_events_; }
  std::size_t retrain_count() const { return retrains_; }
  std::uint32_t fresh_oid();

 private:
  void maybe_trigger_retrain();

  std::unique_ptr<rtree> tree_;
  mutation_policy policy_;
  std::optional<hybrid_index> hybrid_;
  hybrid_options hybrid_options_;
  std::optional<std::pair<std::vector<std::pair<rect, double>>, retrain_config>> retrain_source_;
  mutation_log log_;
  std::map<std::uint32_t, point> live_;
  std::vector<retrain_event> retrain_events_;
  std::uint32_t next_oid_ = 0;
  std::size_t retrains_ = 0;
};

}  // namespace airtree
