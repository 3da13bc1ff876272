#include "airtree/hybrid.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "airtree/oracle.hpp"

namespace airtree {

std::string query_path_name(query_path p) {
  switch (p) {
    case query_path::rtree: return "rtree";
    case query_path::ai: return "ai";
    case query_path::ai_then_fallback: return "ai_then_fallback";
  }
  return "?";
}

std::vector<point> verify_filter(const std::vector<point>& entries, const rect& q) {
  std::vector<point> out;
  out.reserve(entries.size());
  for (const point& p : entries) {
    if (q.contains(p)) out.push_back(p);
  }
  return out;
}

hybrid_index::hybrid_index(rtree* tree, binary_router router, grid_model_index grid,
                           hybrid_options options)
    : tree_(tree), router_(std::move(router)), grid_(std::move(grid)), options_(options) {
  if (tree_ == nullptr) throw error("hybrid_index: null tree");
  if (!tree_->ids_assigned()) throw error("hybrid_index: tree has no leaf id assignment");
  if (router_.assignment_digest() != tree_->assignment_digest())
    throw error("hybrid_index: router was trained against a different leaf-id assignment");
  if (grid_.assignment_digest() != tree_->assignment_digest())
    throw error("hybrid_index: grid index was trained against a different leaf-id assignment");
}

hybrid_index::hybrid_index(rtree* tree, binary_router router,
                           std::shared_ptr<const multilabel_model> predictor,
                           hybrid_options options)
    : tree_(tree),
      router_(std::move(router)),
      override_predictor_(std::move(predictor)),
      options_(options) {
  if (tree_ == nullptr) throw error("hybrid_index: null tree");
  if (!tree_->ids_assigned()) throw error("hybrid_index: tree has no leaf id assignment");
  if (override_predictor_ == nullptr) throw error("hybrid_index: null predictor");
}

void hybrid_index::note_fallback(bool fell_back) {
  std::lock_guard<std::mutex> lock(window_mutex_);
  window_.push_back(fell_back);
  while (window_.size() > options_.fallback_window) window_.pop_front();
}

double hybrid_index::fallback_fraction() const {
  std::lock_guard<std::mutex> lock(window_mutex_);
  if (window_.empty()) return 0.0;
  std::size_t n = 0;
  for (const bool b : window_)
    if (b) ++n;
  return static_cast<double>(n) / static_cast<double>(window_.size());
}

std::size_t hybrid_index::window_size() const {
  std::lock_guard<std::mutex> lock(window_mutex_);
  return window_.size();
}

void hybrid_index::reset_window() {
  std::lock_guard<std::mutex> lock(window_mutex_);
  window_.clear();
}

query_outcome hybrid_index::query(const rect& q) { return query_impl(q, nullptr); }

routing_trace hybrid_index::explain(const rect& q) {
  routing_trace trace;
  trace.outcome = query_impl(q, &trace);
  return trace;
}

query_outcome hybrid_index::query_impl(const rect& q, routing_trace* trace) {
  const auto t0 = std::chrono::steady_clock::now();
  query_outcome out;

  const bool has_override = override_predictor_ != nullptr;
  const bool in_bounds = has_override || q.intersects(grid_.geometry().bounds);
  bool route_ai = false;
  if (mode_ == routing_mode::force_rtree) {
    route_ai = false;
  } else if (mode_ == routing_mode::force_ai) {
    route_ai = true;
  } else if (!in_bounds) {
    // Outside the trained space: the R-tree handles it unconditionally.
    route_ai = false;
  } else {
    out.router_probability = router_.probability_high(q);
    route_ai = out.router_probability >= router_.decision_cutoff();
  }
  out.routed_high = route_ai;
  if (trace != nullptr) {
    trace->in_bounds = in_bounds;
    trace->mode = mode_;
    trace->routed_high = route_ai;
    trace->router_probability = out.router_probability;
    trace->used_override_predictor = has_override;
  }

  if (!route_ai) {
    const search_trace st = tree_->range_search(q);
    out.path = query_path::rtree;
    out.results = st.results;
    out.leaf_accesses = st.leaf_accesses;
  } else {
    std::vector<std::uint32_t> predicted;
    if (has_override) {
      predicted = override_predictor_->predict(q, options_.prediction_cutoff);
    } else {
      predicted = grid_.predict_aggregate(q, options_.prediction_cutoff);
      if (trace != nullptr) {
        trace->cell_predictions = grid_.predict_detail(q, options_.prediction_cutoff);
      }
    }
    std::sort(predicted.begin(), predicted.end());
    out.predicted_leaf_ids = predicted;
    if (trace != nullptr) trace->aggregated_prediction = predicted;

    // Read each predicted physical leaf once; links may pull in siblings,
    // which then must not be charged again.
    std::set<leaf_id> read_set;
    for (const leaf_id id : predicted) {
      if (id >= tree_->leaf_count()) continue;  // stale or noisy prediction
      if (read_set.count(id)) continue;
      const leaf_read lr = tree_->read_leaf(id);
      for (const auto& part : lr.parts) {
        if (read_set.count(part.id)) continue;
        read_set.insert(part.id);
        ++out.ai_leaf_accesses;
        const auto kept = verify_filter(part.entries, q);
        out.results.insert(out.results.end(), kept.begin(), kept.end());
      }
    }
    out.leaf_accesses = out.ai_leaf_accesses;

    if (out.results.empty() && options_.fallback_enabled) {
      // Either the models mispredicted everything or the answer is truly
      // empty; a full search settles it.
      const search_trace st = tree_->range_search(q);
      out.path = query_path::ai_then_fallback;
      out.results = st.results;
      out.fallback_leaf_accesses = st.leaf_accesses;
      out.leaf_accesses += st.leaf_accesses;
      if (trace != nullptr) trace->fallback_reason = "empty AI result";
    } else {
      out.path = query_path::ai;
    }
  }

  // explain() is read-only end to end; only plain queries feed the
  // retrain-trigger window.
  if (trace == nullptr) note_fallback(out.path == query_path::ai_then_fallback);
  const auto t1 = std::chrono::steady_clock::now();
  out.wall_cpu_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  out.simulated_io_ms = static_cast<double>(out.leaf_accesses) * options_.io_unit_ms;
  return out;
}

// -- oracle / adversarial predictors ------------------------------------------

oracle_model::key oracle_model::key_of(const rect& q) {
  return {std::bit_cast<std::uint64_t>(q.x_min), std::bit_cast<std::uint64_t>(q.y_min),
          std::bit_cast<std::uint64_t>(q.x_max), std::bit_cast<std::uint64_t>(q.y_max)};
}

oracle_model oracle_model::from_profiles(const std::vector<query_profile>& profiles,
                                         std::uint32_t label_count,
                                         std::uint64_t assignment_digest) {
  oracle_model m;
  m.label_count_ = label_count;
  m.assignment_digest = assignment_digest;
  for (const auto& p : profiles) {
    std::vector<std::uint32_t> ids = p.true_leaf_ids;
    std::sort(ids.begin(), ids.end());
    m.truth_[key_of(p.query)] = std::move(ids);
  }
  return m;
}

std::vector<std::uint32_t> oracle_model::predict(const rect& query, double) const {
  const auto it = truth_.find(key_of(query));
  if (it == truth_.end()) return {};
  return it->second;
}

adversarial_model::key adversarial_model::key_of(const rect& q) {
  return {std::bit_cast<std::uint64_t>(q.x_min), std::bit_cast<std::uint64_t>(q.y_min),
          std::bit_cast<std::uint64_t>(q.x_max), std::bit_cast<std::uint64_t>(q.y_max)};
}

adversarial_model adversarial_model::from_profiles(const std::vector<query_profile>& profiles,
                                                   std::uint32_t label_count,
                                                   std::uint64_t assignment_digest) {
  adversarial_model m;
  m.label_count_ = label_count;
  m.assignment_digest = assignment_digest;
  for (const auto& p : profiles) {
    std::vector<std::uint32_t> wrong;
    const std::set<std::uint32_t> truth(p.true_leaf_ids.begin(), p.true_leaf_ids.end());
    for (std::uint32_t id = 0; id < label_count && wrong.empty(); ++id) {
      if (!truth.count(id)) wrong.push_back(id);
    }
    m.wrong_[key_of(p.query)] = std::move(wrong);
  }
  return m;
}

std::vector<std::uint32_t> adversarial_model::predict(const rect& query, double) const {
  const auto it = wrong_.find(key_of(query));
  if (it == wrong_.end()) return {};
  return it->second;
}

}  // namespace airtree
