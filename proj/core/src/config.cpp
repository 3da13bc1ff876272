#include "airtree/config.hpp"

#include <cmath>

#include <json.hpp>

#include "airtree/binary_io.hpp"

namespace airtree {

void experiment_config::validate() const {
  if (leaf_capacity < 2) throw error("config: leaf_capacity must be >= 2");
  if (min_fill_ratio <= 0.0 || min_fill_ratio > 0.5)
    throw error("config: min_fill_ratio must be in (0, 0.5]");
  if (selectivities.empty()) throw error("config: need at least one selectivity");
  for (const double s : selectivities) {
    if (s <= 0.0 || s >= 1.0) throw error("config: selectivities must be in (0, 1)");
  }
  if (alpha_buckets.empty()) throw error("config: need at least one alpha bucket edge");
  double prev = 0.0;
  for (const double e : alpha_buckets) {
    if (e <= prev || e > 1.0) throw error("config: alpha buckets must ascend in (0, 1]");
    prev = e;
  }
  if (tau <= 0.0 || tau >= 1.0) throw error("config: tau must be in (0, 1)");
  if (std::abs(split_ratios[0] + split_ratios[1] + split_ratios[2] - 1.0) > 1e-9)
    throw error("config: split ratios must sum to 1");
  if (queries_per_cell == 0) throw error("config: queries_per_cell must be positive");
  if (model_kinds.empty()) throw error("config: need at least one model kind");
  for (const model_kind k : model_kinds) {
    if (k == model_kind::oracle) throw error("config: oracle is not a trainable model kind");
  }
  if (grid_candidates.empty() || nn_grid_candidates.empty())
    throw error("config: need at least one grid candidate");
  for (const std::uint32_t g : grid_candidates) {
    if (g == 0) throw error("config: grid candidates must be positive");
  }
  for (const std::uint32_t g : nn_grid_candidates) {
    if (g == 0) throw error("config: grid candidates must be positive");
  }
  if (prediction_cutoff < 0.0 || prediction_cutoff > 1.0)
    throw error("config: prediction cutoff must be in [0, 1]");
  if (io_unit_ms < 0.0) throw error("config: io_unit_ms must be non-negative");
  if (csv_path.empty() && synthetic.count == 0)
    throw error("config: synthetic dataset needs a positive count");
  if (out_dir.empty()) throw error("config: out_dir must be set");
}

void experiment_config::apply_paper_scale() {
  leaf_capacity = 1000;
  queries_per_cell = 1000;
  if (csv_path.empty()) synthetic.count = 2000000;
}

namespace {

std::vector<std::string> kinds_to_names(const std::vector<model_kind>& kinds) {
  std::vector<std::string> names;
  names.reserve(kinds.size());
  for (const model_kind k : kinds) names.push_back(model_kind_name(k));
  return names;
}

}  // namespace

std::string experiment_config::to_json() const {
  nlohmann::json j;
  j["dataset"]["csv_path"] = csv_path;
  j["dataset"]["csv_x_column"] = csv_x_column;
  j["dataset"]["csv_y_column"] = csv_y_column;
  j["dataset"]["csv_dedup"] = csv_dedup;
  j["dataset"]["max_rows"] = max_rows;
  j["dataset"]["synthetic"]["count"] = synthetic.count;
  j["dataset"]["synthetic"]["cluster_count"] = synthetic.cluster_count;
  j["dataset"]["synthetic"]["cluster_spread"] = synthetic.cluster_spread;
  j["dataset"]["synthetic"]["seed"] = synthetic.seed;
  j["tree"]["leaf_capacity"] = leaf_capacity;
  j["tree"]["min_fill_ratio"] = min_fill_ratio;
  j["workload"]["selectivities"] = selectivities;
  j["workload"]["alpha_buckets"] = alpha_buckets;
  j["workload"]["queries_per_cell"] = queries_per_cell;
  j["workload"]["oversample"] = workload_oversample;
  j["workload"]["tau"] = tau;
  j["workload"]["split_ratios"] = split_ratios;
  j["models"]["kinds"] = kinds_to_names(model_kinds);
  j["models"]["dct"]["max_depth"] = dct_hyper.max_depth;
  j["models"]["dct"]["min_samples_leaf"] = dct_hyper.min_samples_leaf;
  j["models"]["rf"]["n_estimators"] = rf_hyper.n_estimators;
  j["models"]["rf"]["feature_subsample"] = rf_hyper.feature_subsample;
  j["models"]["rf"]["max_depth"] = rf_hyper.tree.max_depth;
  j["models"]["rf"]["min_samples_leaf"] = rf_hyper.tree.min_samples_leaf;
  j["models"]["router"]["n_estimators"] = router_hyper.n_estimators;
  j["models"]["router"]["feature_subsample"] = router_hyper.feature_subsample;
  j["models"]["router"]["max_depth"] = router_hyper.tree.max_depth;
  j["models"]["router"]["min_samples_leaf"] = router_hyper.tree.min_samples_leaf;
  j["models"]["nn"]["hidden"] = nn.hidden;
  j["models"]["nn"]["learning_rate"] = nn.learning_rate;
  j["models"]["nn"]["epochs"] = nn.epochs;
  j["models"]["nn"]["batch_size"] = nn.batch_size;
  j["models"]["nn"]["full_object_support"] = nn.full_object_support;
  j["models"]["grid_candidates"] = grid_candidates;
  j["models"]["nn_grid_candidates"] = nn_grid_candidates;
  j["models"]["prediction_cutoff"] = prediction_cutoff;
  j["models"]["aggregation"] = aggregation_name(aggregation);
  j["eval"]["io_unit_ms"] = io_unit_ms;
  j["eval"]["fallback_enabled"] = fallback_enabled;
  j["eval"]["oracle_predictor"] = oracle_predictor;
  j["mutation"]["script"] = mutation_script;
  j["mutation"]["strategy"] = insert_strategy_name(strategy);
  j["mutation"]["both_policies"] = mutate_both_policies;
  j["mutation"]["overflow_chain_cap"] = policy.overflow_chain_cap;
  j["mutation"]["threshold_trigger"] = policy.threshold_trigger;
  j["mutation"]["fallback_threshold"] = policy.fallback_threshold;
  j["mutation"]["trigger_min_window"] = policy.trigger_min_window;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  return j.dump(2) + "\n";
}

experiment_config experiment_config::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  experiment_config c;
  const auto get = [](const nlohmann::json& obj, const char* key, auto& field) {
    if (obj.contains(key)) field = obj.at(key).get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    get(d, "csv_path", c.csv_path);
    get(d, "csv_x_column", c.csv_x_column);
    get(d, "csv_y_column", c.csv_y_column);
    get(d, "csv_dedup", c.csv_dedup);
    get(d, "max_rows", c.max_rows);
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      get(s, "count", c.synthetic.count);
      get(s, "cluster_count", c.synthetic.cluster_count);
      get(s, "cluster_spread", c.synthetic.cluster_spread);
      get(s, "seed", c.synthetic.seed);
    }
  }
  if (j.contains("tree")) {
    const auto& t = j.at("tree");
    get(t, "leaf_capacity", c.leaf_capacity);
    get(t, "min_fill_ratio", c.min_fill_ratio);
  }
  if (j.contains("workload")) {
    const auto& w = j.at("workload");
    get(w, "selectivities", c.selectivities);
    get(w, "alpha_buckets", c.alpha_buckets);
    get(w, "queries_per_cell", c.queries_per_cell);
    get(w, "oversample", c.workload_oversample);
    get(w, "tau", c.tau);
    if (w.contains("split_ratios")) {
      const auto r = w.at("split_ratios").get<std::vector<double>>();
      if (r.size() != 3) throw error("config: split_ratios must have 3 entries");
      c.split_ratios = {r[0], r[1], r[2]};
    }
  }
  if (j.contains("models")) {
    const auto& m = j.at("models");
    if (m.contains("kinds")) {
      c.model_kinds.clear();
      for (const auto& name : m.at("kinds")) {
        c.model_kinds.push_back(model_kind_from_name(name.get<std::string>()));
      }
    }
    if (m.contains("dct")) {
      get(m.at("dct"), "max_depth", c.dct_hyper.max_depth);
      get(m.at("dct"), "min_samples_leaf", c.dct_hyper.min_samples_leaf);
    }
    if (m.contains("rf")) {
      get(m.at("rf"), "n_estimators", c.rf_hyper.n_estimators);
      get(m.at("rf"), "feature_subsample", c.rf_hyper.feature_subsample);
      get(m.at("rf"), "max_depth", c.rf_hyper.tree.max_depth);
      get(m.at("rf"), "min_samples_leaf", c.rf_hyper.tree.min_samples_leaf);
    }
    if (m.contains("router")) {
      get(m.at("router"), "n_estimators", c.router_hyper.n_estimators);
      get(m.at("router"), "feature_subsample", c.router_hyper.feature_subsample);
      get(m.at("router"), "max_depth", c.router_hyper.tree.max_depth);
      get(m.at("router"), "min_samples_leaf", c.router_hyper.tree.min_samples_leaf);
    }
    if (m.contains("nn")) {
      const auto& n = m.at("nn");
      get(n, "hidden", c.nn.hidden);
      get(n, "learning_rate", c.nn.learning_rate);
      get(n, "epochs", c.nn.epochs);
      get(n, "batch_size", c.nn.batch_size);
      get(n, "full_object_support", c.nn.full_object_support);
    }
    get(m, "grid_candidates", c.grid_candidates);
    get(m, "nn_grid_candidates", c.nn_grid_candidates);
    get(m, "prediction_cutoff", c.prediction_cutoff);
    if (m.contains("aggregation")) {
      c.aggregation = aggregation_from_name(m.at("aggregation").get<std::string>());
    }
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    get(e, "io_unit_ms", c.io_unit_ms);
    get(e, "fallback_enabled", c.fallback_enabled);
    get(e, "oracle_predictor", c.oracle_predictor);
  }
  if (j.contains("mutation")) {
    const auto& m = j.at("mutation");
    get(m, "script", c.mutation_script);
    if (m.contains("strategy")) {
      c.strategy = insert_strategy_from_name(m.at("strategy").get<std::string>());
    }
    get(m, "both_policies", c.mutate_both_policies);
    get(m, "overflow_chain_cap", c.policy.overflow_chain_cap);
    get(m, "threshold_trigger", c.policy.threshold_trigger);
    get(m, "fallback_threshold", c.policy.fallback_threshold);
    get(m, "trigger_min_window", c.policy.trigger_min_window);
  }
  get(j, "seed", c.seed);
  get(j, "out_dir", c.out_dir);
  c.policy.strategy = c.strategy;
  return c;
}

void experiment_config::save(const std::string& path) const { write_file_text(path, to_json()); }

experiment_config experiment_config::load(const std::string& path) {
  return from_json(read_file_text(path));
}

retrain_config experiment_config::make_retrain_config() const {
  retrain_config r;
  r.tau = tau;
  r.bucket_edges = alpha_buckets;
  r.split_ratios = split_ratios;
  r.kind = model_kinds.front();
  r.grid_candidates = model_kind_is_nn(r.kind) ? nn_grid_candidates : grid_candidates;
  r.dct_hyper = dct_hyper;
  r.rf_hyper = rf_hyper;
  r.router_hyper = router_hyper;
  r.nn = nn;
  r.prediction_cutoff = prediction_cutoff;
  r.seed = rng::derive_seed(seed, 0xfeed);
  return r;
}

}  // namespace airtree
