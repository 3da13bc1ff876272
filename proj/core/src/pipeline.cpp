#include "airtree/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "airtree/binary_io.hpp"
#include "airtree/oracle.hpp"
#include "airtree/trainers.hpp"

namespace airtree {

namespace fs = std::filesystem;

namespace {

nlohmann::json outcome_to_json(const query_outcome& o, const query_profile& truth) {
  nlohmann::json j;
  j["rect"] = {truth.query.x_min, truth.query.y_min, truth.query.x_max, truth.query.y_max};
  j["path"] = query_path_name(o.path);
  j["leaf_accesses"] = o.leaf_accesses;
  j["ai_leaf_accesses"] = o.ai_leaf_accesses;
  j["fallback_leaf_accesses"] = o.fallback_leaf_accesses;
  j["results"] = o.results.size();
  j["predicted_leaves"] = o.predicted_leaf_ids;
  j["routed_high"] = o.routed_high;
  j["io_ms"] = o.simulated_io_ms;
  if (o.recall_vs_truth.has_value()) j["recall"] = *o.recall_vs_truth;
  return j;
}

void write_outcomes(const experiment_config& config, const std::string& model,
                    const std::vector<query_outcome>& outcomes,
                    const std::vector<query_profile>& truths) {
  std::ostringstream out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    out << outcome_to_json(outcomes[i], truths[i]).dump() << '\n';
  }
  write_file_text((fs::path(config.out_dir) / ("outcomes_" + model + ".jsonl")).string(),
                  out.str());
}

std::string path_in(const experiment_config& config, const char* name) {
  return (fs::path(config.out_dir) / name).string();
}

nlohmann::json config_echo(const experiment_config& config) {
  experiment_config echo = config;
  echo.out_dir = "";  // location-independent: digests and numbers match anyway
  return nlohmann::json::parse(echo.to_json());
}

double elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

query_outcome rtree_baseline_outcome(const rtree& tree, const rect& q, double io_unit_ms) {
  const auto t0 = std::chrono::steady_clock::now();
  const search_trace trace = tree.range_search(q);
  query_outcome o;
  o.path = query_path::rtree;
  o.results = trace.results;
  o.leaf_accesses = trace.leaf_accesses;
  o.wall_cpu_ms = elapsed_ms(t0);
  o.simulated_io_ms = static_cast<double>(o.leaf_accesses) * io_unit_ms;
  return o;
}

}  // namespace

std::vector<point> load_dataset(const experiment_config& config) {
  std::vector<point> points;
  if (!config.csv_path.empty()) {
    points = ingest_csv(config.csv_path, config.csv_x_column, config.csv_y_column,
                        config.csv_dedup);
    if (config.max_rows > 0 && points.size() > config.max_rows) points.resize(config.max_rows);
  } else {
    points = synthetic_points(config.synthetic);
  }
  return points;
}

build_summary cmd_build(const experiment_config& config) {
  config.validate();
  fs::create_directories(config.out_dir);
  config.save(path_in(config, artifact::config_file));

  const std::vector<point> points = load_dataset(config);
  rtree tree(config.leaf_capacity, config.min_fill_ratio);
  for (const point& p : points) tree.insert(p);
  tree.assign_leaf_ids();
  tree.check_invariants();
  tree.save(path_in(config, artifact::tree_file));

  build_summary s;
  s.point_count = points.size();
  s.leaf_count = tree.leaf_count();
  s.height = tree.height();
  s.snapshot_digest = tree.digest();
  s.assignment_digest = tree.assignment_digest();
  const auto fills = tree.leaf_fill_histogram();
  s.min_fill = fills.empty() ? 0 : *std::min_element(fills.begin(), fills.end());
  s.max_fill = fills.empty() ? 0 : *std::max_element(fills.begin(), fills.end());
  double sum = 0.0;
  for (const auto f : fills) sum += f;
  s.mean_fill = fills.empty() ? 0.0 : sum / static_cast<double>(fills.size());

  nlohmann::json j;
  j["config"] = config_echo(config);
  j["points"] = s.point_count;
  j["leaf_count"] = s.leaf_count;
  j["height"] = s.height;
  j["snapshot_digest"] = to_hex(s.snapshot_digest);
  j["assignment_digest"] = to_hex(s.assignment_digest);
  j["leaf_fill"] = {{"min", s.min_fill}, {"max", s.max_fill}, {"mean", s.mean_fill}};
  // Fill histogram: leaves bucketed by the tenth of capacity they use.
  std::array<std::uint32_t, 10> hist{};
  for (const auto f : fills) {
    const auto bucket = std::min<std::size_t>(
        9, static_cast<std::size_t>(10.0 * static_cast<double>(f) /
                                    static_cast<double>(config.leaf_capacity)));
    ++hist[bucket];
  }
  j["leaf_fill"]["histogram"] = hist;
  write_file_text(path_in(config, artifact::build_file), j.dump(2) + "\n");
  return s;
}

train_summary cmd_train(const experiment_config& config) {
  config.validate();
  rtree tree = rtree::load(path_in(config, artifact::tree_file));
  const std::vector<point> points = load_dataset(config);

  workload_build_report wreport;
  const std::vector<query_profile> profiles = build_bucketed_workload(
      tree, points, config.selectivities, config.alpha_buckets, config.queries_per_cell,
      rng::derive_seed(config.seed, 100), &wreport, config.workload_oversample);
  const workload_split split = split_workload(profiles, config.split_ratios,
                                              rng::derive_seed(config.seed, 101),
                                              config.alpha_buckets);

  std::vector<corpus_entry> entries(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) entries[i].profile = profiles[i];
  for (const std::size_t i : split.train) entries[i].split = "train";
  for (const std::size_t i : split.validation) entries[i].split = "validation";
  for (const std::size_t i : split.test) entries[i].split = "test";
  save_corpus(path_in(config, artifact::corpus_file), entries);

  std::vector<query_profile> router_profiles;
  router_profiles.reserve(split.train.size() + split.validation.size());
  for (const std::size_t i : split.train) router_profiles.push_back(profiles[i]);
  for (const std::size_t i : split.validation) router_profiles.push_back(profiles[i]);
  const binary_router router =
      binary_router::fit(router_profiles, config.tau, config.router_hyper,
                         rng::derive_seed(config.seed, 102), tree.assignment_digest());
  write_file_bytes(path_in(config, artifact::router_file), router.serialize());

  const std::uint32_t label_count = tree.leaf_count();
  const labeled_corpus train_corpus =
      make_labeled_corpus(profiles, split.train, label_count, tree.assignment_digest());
  const labeled_corpus val_corpus =
      make_labeled_corpus(profiles, split.validation, label_count, tree.assignment_digest());

  bool any_nn = false;
  for (const model_kind k : config.model_kinds) any_nn = any_nn || model_kind_is_nn(k);
  incidence_matrix A;
  if (any_nn) A = build_incidence(tree);

  train_summary s;
  s.router_accuracy = router.test_accuracy();
  s.profile_count = profiles.size();
  s.train_size = split.train.size();
  s.validation_size = split.validation.size();
  s.test_size = split.test.size();
  s.assignment_digest = tree.assignment_digest();
  s.warnings = wreport.warnings;
  s.warnings.insert(s.warnings.end(), split.warnings.begin(), split.warnings.end());

  const std::string models_dir = path_in(config, artifact::models_dir);
  for (std::size_t ki = 0; ki < config.model_kinds.size(); ++ki) {
    const model_kind kind = config.model_kinds[ki];
    const auto trainer =
        make_cell_trainer(kind, config.dct_hyper, config.rf_hyper, &tree,
                          any_nn ? &A : nullptr, config.nn, &val_corpus);
    const std::vector<std::uint32_t>& candidates =
        model_kind_is_nn(kind) ? config.nn_grid_candidates : config.grid_candidates;
    grid_geometry geometry;
    geometry.bounds = tree.bounds();
    grid_model_index grid = tune_grid_size(
        train_corpus, val_corpus, profiles, geometry, candidates, *trainer,
        rng::derive_seed(config.seed, 200 + ki), tree.assignment_digest(),
        config.prediction_cutoff, config.aggregation);
    grid.save(models_dir, model_kind_name(kind));
    if (grid.tuning().has_value()) s.tuning[model_kind_name(kind)] = *grid.tuning();

    if (model_kind_is_nn(kind)) {
      const auto* nn_trainer_ptr = dynamic_cast<const nn_cell_trainer*>(trainer.get());
      nlohmann::json histories = nlohmann::json::array();
      for (const auto& h : nn_trainer_ptr->histories()) {
        histories.push_back(
            {{"train_loss", h.train_loss}, {"validation_loss", h.validation_loss}});
      }
      write_file_text(
          (fs::path(config.out_dir) / ("nn_history_" + model_kind_name(kind) + ".json")).string(),
          histories.dump(2) + "\n");
    }
  }

  nlohmann::json j;
  j["config"] = config_echo(config);
  j["router_accuracy"] = s.router_accuracy;
  j["router_tau"] = config.tau;
  j["profiles"] = s.profile_count;
  j["split"] = {{"train", s.train_size},
                {"validation", s.validation_size},
                {"test", s.test_size}};
  j["assignment_digest"] = to_hex(s.assignment_digest);
  nlohmann::json cells = nlohmann::json::object();
  for (const auto& [key, count] : wreport.cell_counts) {
    cells[std::to_string(key.first) + "/" + std::to_string(key.second)] = count;
  }
  j["workload_cells"] = cells;
  nlohmann::json tuning = nlohmann::json::object();
  for (const auto& [kind, report] : s.tuning) {
    nlohmann::json entries_json = nlohmann::json::array();
    for (const auto& e : report.entries) {
      entries_json.push_back(
          {{"rows", e.rows}, {"cols", e.cols}, {"recall", e.mean_validation_recall}});
    }
    tuning[kind] = {{"chosen", {report.chosen_rows, report.chosen_cols}},
                    {"candidates", entries_json}};
  }
  j["tuning"] = tuning;
  j["warnings"] = s.warnings;
  write_file_text(path_in(config, artifact::train_file), j.dump(2) + "\n");
  return s;
}

eval_summary cmd_eval(const experiment_config& config) {
  config.validate();
  rtree tree = rtree::load(path_in(config, artifact::tree_file));

  const auto train_meta = nlohmann::json::parse(read_file_text(path_in(config, artifact::train_file)));
  const std::uint64_t trained_digest =
      std::stoull(train_meta.at("assignment_digest").get<std::string>(), nullptr, 16);
  if (trained_digest != tree.assignment_digest())
    throw error("eval: artifacts were trained against a different tree snapshot");

  const auto entries = load_corpus(path_in(config, artifact::corpus_file));
  std::vector<query_profile> test_profiles;
  for (const auto& e : entries) {
    if (e.split == "test") test_profiles.push_back(e.profile);
  }
  if (test_profiles.empty()) throw error("eval: corpus has no test split");

  const auto router_bytes = read_file_bytes(path_in(config, artifact::router_file));
  const binary_router router = binary_router::deserialize(router_bytes);
  const cost_model cost{config.io_unit_ms};
  const hybrid_options options{config.fallback_enabled, config.prediction_cutoff,
                               config.io_unit_ms, 1000};

  eval_summary s;
  s.test_queries = test_profiles.size();

  // Plain R-tree baseline.
  {
    std::vector<query_outcome> outcomes;
    outcomes.reserve(test_profiles.size());
    for (const auto& p : test_profiles) {
      outcomes.push_back(rtree_baseline_outcome(tree, p.query, config.io_unit_ms));
    }
    const auto reports =
        aggregate_outcomes(outcomes, test_profiles, "rtree", config.alpha_buckets, cost);
    s.reports.insert(s.reports.end(), reports.begin(), reports.end());
    write_outcomes(config, "rtree", outcomes, test_profiles);
  }

  const std::string models_dir = path_in(config, artifact::models_dir);
  const std::size_t tree_bytes = read_file_bytes(path_in(config, artifact::tree_file)).size();

  for (const model_kind kind : config.model_kinds) {
    grid_model_index grid = grid_model_index::load(models_dir, model_kind_name(kind));
    const std::size_t grid_bytes = grid.serialized_model_bytes();
    hybrid_index hybrid(&tree, router, std::move(grid), options);
    std::vector<query_outcome> outcomes;
    outcomes.reserve(test_profiles.size());
    for (const auto& p : test_profiles) {
      query_outcome o = hybrid.query(p.query);
      o.recall_vs_truth = query_recall(o, p);
      outcomes.push_back(std::move(o));
    }
    const auto reports = aggregate_outcomes(outcomes, test_profiles, model_kind_name(kind),
                                            config.alpha_buckets, cost);
    s.reports.insert(s.reports.end(), reports.begin(), reports.end());
    write_outcomes(config, model_kind_name(kind), outcomes, test_profiles);
    s.footprints[model_kind_name(kind)] = model_footprint(
        {{"router", router_bytes.size()}, {"grid_" + model_kind_name(kind), grid_bytes}},
        tree_bytes);
  }

  if (config.oracle_predictor) {
    auto oracle = std::make_shared<oracle_model>(oracle_model::from_profiles(
        test_profiles, tree.leaf_count(), tree.assignment_digest()));
    hybrid_index hybrid(&tree, router, oracle, options);
    hybrid.set_routing_mode(routing_mode::force_ai);
    std::vector<query_outcome> outcomes;
    for (const auto& p : test_profiles) {
      query_outcome o = hybrid.query(p.query);
      o.recall_vs_truth = query_recall(o, p);
      outcomes.push_back(std::move(o));
    }
    const auto reports =
        aggregate_outcomes(outcomes, test_profiles, "oracle", config.alpha_buckets, cost);
    s.reports.insert(s.reports.end(), reports.begin(), reports.end());
    write_outcomes(config, "oracle", outcomes, test_profiles);
  }

  // Deterministic report: meta line with the resolved config, then one
  // line per bucket, timing excluded. Wall-clock goes to the sidecar.
  nlohmann::json meta;
  meta["meta"] = "airtree-report";
  meta["assignment_digest"] = to_hex(tree.assignment_digest());
  meta["config"] = config_echo(config);
  write_file_text(path_in(config, artifact::report_file),
                  meta.dump() + "\n" + reports_to_jsonl(s.reports, false));
  write_file_text(path_in(config, artifact::timing_file), reports_to_jsonl(s.reports, true));
  write_file_text(path_in(config, artifact::table_file), reports_to_table(s.reports));
  write_file_text(path_in(config, artifact::csv_file), reports_to_csv(s.reports));

  nlohmann::json foot;
  for (const auto& [kind, report] : s.footprints) {
    foot[kind] = nlohmann::json::parse(footprint_to_json(report));
  }
  write_file_text(path_in(config, artifact::footprint_file), foot.dump(2) + "\n");
  return s;
}

mutate_summary cmd_mutate(const experiment_config& config) {
  config.validate();
  if (config.mutation_script.empty()) throw error("mutate: no mutation script configured");
  const std::string script_text = read_file_text(config.mutation_script);

  const auto entries = load_corpus(path_in(config, artifact::corpus_file));
  std::vector<std::pair<rect, double>> workload;
  workload.reserve(entries.size());
  for (const auto& e : entries) workload.emplace_back(e.profile.query, e.profile.selectivity);

  std::vector<insert_strategy> policies;
  if (config.mutate_both_policies) {
    policies = {insert_strategy::in_place, insert_strategy::out_of_place};
  } else {
    policies = {config.strategy};
  }

  const hybrid_options options{config.fallback_enabled, config.prediction_cutoff,
                               config.io_unit_ms, 1000};
  mutate_summary summary;
  nlohmann::json out;
  out["config"] = config_echo(config);
  for (const insert_strategy strategy : policies) {
    rtree tree = rtree::load(path_in(config, artifact::tree_file));
    binary_router router =
        binary_router::deserialize(read_file_bytes(path_in(config, artifact::router_file)));
    grid_model_index grid = grid_model_index::load(path_in(config, artifact::models_dir),
                                                   model_kind_name(config.model_kinds.front()));
    mutation_policy policy = config.policy;
    policy.strategy = strategy;
    mutation_session session(std::move(tree), policy);
    session.attach_models(std::move(router), std::move(grid), options);
    session.set_retrain_source(workload, config.make_retrain_config());
    const replay_result rr = session.replay_text(script_text);

    mutate_policy_summary ps;
    ps.policy = insert_strategy_name(strategy);
    ps.case_histogram = rr.log.case_histogram();
    ps.operations = rr.log.records.size();
    ps.queries = rr.queries.size();
    ps.retrains = rr.retrains;
    ps.final_assignment_digest = session.tree().assignment_digest();

    std::map<std::string, std::pair<double, std::size_t>> recall_acc;
    for (const auto& q : rr.queries) {
      std::ostringstream bucket_label;
      bucket_label << alpha_bucket(q.alpha, config.alpha_buckets);
      const std::string bucket = bucket_label.str();
      auto& [sum, count] = recall_acc[bucket];
      sum += q.recall_vs_live;
      ++count;
    }
    for (const auto& [bucket, acc] : recall_acc) {
      ps.staleness_recall_by_bucket[bucket] = acc.first / static_cast<double>(acc.second);
    }
    summary.policies.push_back(ps);

    write_file_text(
        (fs::path(config.out_dir) / ("mutation_log_" + ps.policy + ".jsonl")).string(),
        rr.log.to_jsonl());

    nlohmann::json pj;
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [case_id, count] : ps.case_histogram) {
      hist["case" + std::to_string(case_id)] = count;
    }
    pj["case_histogram"] = hist;
    pj["operations"] = ps.operations;
    pj["queries"] = ps.queries;
    pj["retrains"] = ps.retrains;
    pj["staleness_recall_by_bucket"] = ps.staleness_recall_by_bucket;
    pj["final_assignment_digest"] = to_hex(ps.final_assignment_digest);
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : rr.retrain_events) {
      events.push_back({{"after_record", ev.after_record},
                        {"old_digest", to_hex(ev.old_assignment_digest)},
                        {"new_digest", to_hex(ev.new_assignment_digest)},
                        {"old_leaf_count", ev.old_leaf_count},
                        {"new_leaf_count", ev.new_leaf_count}});
    }
    pj["retrain_events"] = events;
    out[ps.policy] = pj;
  }
  write_file_text(path_in(config, artifact::mutate_file), out.dump(2) + "\n");
  return summary;
}

void run_all(const experiment_config& config) {
  cmd_build(config);
  cmd_train(config);
  cmd_eval(config);
  if (!config.mutation_script.empty()) cmd_mutate(config);
}

}  // namespace airtree
