#include "airtree/mutation.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "airtree/trainers.hpp"

namespace airtree {

std::string insert_strategy_name(insert_strategy s) {
  return s == insert_strategy::in_place ? "in_place" : "out_of_place";
}

insert_strategy insert_strategy_from_name(const std::string& name) {
  if (name == "in_place") return insert_strategy::in_place;
  if (name == "out_of_place") return insert_strategy::out_of_place;
  throw error("unknown insert strategy: " + name);
}

std::map<int, std::size_t> mutation_log::case_histogram() const {
  std::map<int, std::size_t> hist;
  for (const auto& r : records) {
    if (r.insert_case > 0) ++hist[r.insert_case];
  }
  return hist;
}

std::string mutation_log::to_jsonl() const {
  std::ostringstream out;
  for (const auto& r : records) {
    nlohmann::json j;
    j["kind"] = r.kind;
    j["oid"] = r.oid;
    if (r.pt.has_value()) {
      j["x"] = r.pt->x;
      j["y"] = r.pt->y;
    }
    if (r.affected_leaf != k_no_leaf) j["leaf"] = r.affected_leaf;
    if (r.insert_case > 0) j["case"] = r.insert_case;
    j["split"] = r.split;
    j["overflow_used"] = r.overflow_used;
    j["overflow_created"] = r.overflow_created;
    if (r.new_leaf != k_no_leaf) j["new_leaf"] = r.new_leaf;
    if (r.chain_over_cap) j["chain_over_cap"] = true;
    if (r.script_line > 0) j["line"] = r.script_line;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<script_op> parse_mutation_script(const std::string& text) {
  std::vector<script_op> ops;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string op;
    if (!(ls >> op)) continue;

    const auto fail = [&](const std::string& why) -> void {
      throw error("script line " + std::to_string(line_no) + ": " + why);
    };
    script_op s;
    s.line = line_no;
    if (op == "capacity") {
      s.type = script_op::op_type::set_capacity;
      if (!(ls >> s.capacity) || s.capacity < 2) fail("expected: capacity <M>=2>");
    } else if (op == "insert") {
      s.type = script_op::op_type::insert;
      if (!(ls >> s.x >> s.y)) fail("expected: insert <x> <y> [oid]");
      if (ls >> s.oid) s.has_oid = true;
    } else if (op == "delete") {
      s.type = script_op::op_type::erase;
      if (!(ls >> s.oid)) fail("expected: delete <oid>");
    } else if (op == "update") {
      s.type = script_op::op_type::update;
      if (!(ls >> s.oid >> s.x >> s.y)) fail("expected: update <oid> <x> <y>");
    } else if (op == "query") {
      s.type = script_op::op_type::query;
      if (!(ls >> s.x >> s.y >> s.x2 >> s.y2)) fail("expected: query <xmin> <ymin> <xmax> <ymax>");
      if (s.x > s.x2 || s.y > s.y2) fail("query rectangle is inverted");
    } else if (op == "assign") {
      s.type = script_op::op_type::assign;
    } else if (op == "retrain") {
      s.type = script_op::op_type::retrain;
    } else {
      fail("unknown operation '" + op + "'");
    }
    std::string rest;
    if (ls >> rest) fail("trailing tokens after operation");
    ops.push_back(s);
  }
  return ops;
}

retrain_result retrain_index(const rtree& current,
                             const std::vector<std::pair<rect, double>>& workload,
                             const retrain_config& cfg) {
  retrain_result out{rtree(current), binary_router{}, grid_model_index{}, {}, {}};
  out.tree.compact();
  out.tree.assign_leaf_ids();

  // Group the workload rects by selectivity class and re-profile.
  std::map<double, std::vector<rect>> by_sel;
  for (const auto& [q, sel] : workload) by_sel[sel].push_back(q);
  for (const auto& [sel, rects] : by_sel) {
    const auto profiles = profile_queries(out.tree, rects, sel);
    out.profiles.insert(out.profiles.end(), profiles.begin(), profiles.end());
  }
  if (out.profiles.empty()) throw error("retrain: empty workload");

  out.split = split_workload(out.profiles, cfg.split_ratios, rng::derive_seed(cfg.seed, 11),
                             cfg.bucket_edges);

  std::vector<std::size_t> router_members = out.split.train;
  router_members.insert(router_members.end(), out.split.validation.begin(),
                        out.split.validation.end());
  std::vector<query_profile> router_profiles;
  router_profiles.reserve(router_members.size());
  for (const std::size_t i : router_members) router_profiles.push_back(out.profiles[i]);
  out.router = binary_router::fit(router_profiles, cfg.tau, cfg.router_hyper,
                                  rng::derive_seed(cfg.seed, 13), out.tree.assignment_digest());

  const std::uint32_t label_count = out.tree.leaf_count();
  const labeled_corpus train_corpus = make_labeled_corpus(out.profiles, out.split.train,
                                                          label_count,
                                                          out.tree.assignment_digest());
  const labeled_corpus val_corpus = make_labeled_corpus(out.profiles, out.split.validation,
                                                        label_count, out.tree.assignment_digest());

  incidence_matrix A;
  if (model_kind_is_nn(cfg.kind)) A = build_incidence(out.tree);
  const auto trainer = make_cell_trainer(cfg.kind, cfg.dct_hyper, cfg.rf_hyper, &out.tree,
                                         model_kind_is_nn(cfg.kind) ? &A : nullptr, cfg.nn,
                                         &val_corpus);
  grid_geometry geometry;
  geometry.bounds = out.tree.bounds();
  out.grid = tune_grid_size(train_corpus, val_corpus, out.profiles, geometry,
                            cfg.grid_candidates, *trainer,
                            rng::derive_seed(cfg.seed, 17), out.tree.assignment_digest(),
                            cfg.prediction_cutoff);
  return out;
}

mutation_session::mutation_session(rtree tree, mutation_policy policy)
    : tree_(std::make_unique<rtree>(std::move(tree))), policy_(policy) {
  for (const point& p : tree_->live_points()) {
    live_[p.oid] = p;
    next_oid_ = std::max(next_oid_, p.oid + 1);
  }
}

void mutation_session::attach_models(binary_router router, grid_model_index grid,
                                     hybrid_options options) {
  hybrid_options_ = options;
  hybrid_.emplace(tree_.get(), std::move(router), std::move(grid), options);
}

void mutation_session::attach_predictor(binary_router router,
                                         std::shared_ptr<const multilabel_model> predictor,
                                         hybrid_options options) {
  hybrid_options_ = options;
  hybrid_.emplace(tree_.get(), std::move(router), std::move(predictor), options);
}

void mutation_session::set_retrain_source(std::vector<std::pair<rect, double>> workload,
                                          retrain_config cfg) {
  retrain_source_.emplace(std::move(workload), std::move(cfg));
}

std::uint32_t mutation_session::fresh_oid() { return next_oid_++; }

mutation_record mutation_session::apply_insert(point p, std::size_t script_line) {
  mutation_record rec;
  rec.kind = "insert";
  rec.oid = p.oid;
  rec.pt = p;
  rec.script_line = script_line;

  const bool classified = tree_->ids_assigned();
  bool overlap = false;
  if (classified) {
    const auto preview = tree_->preview_insert(p);
    overlap = tree_->rect_overlaps_other_leaf(preview.post_insert_mbr, preview.target);
    rec.insert_case = 1 + (preview.target_full ? 1 : 0) + (overlap ? 2 : 0);
  }

  const insert_report rep = policy_.strategy == insert_strategy::in_place
                                ? tree_->insert(p)
                                : tree_->insert_overflow(p);
  rec.affected_leaf = rep.target_leaf;
  rec.split = rep.split;
  rec.overflow_used = rep.overflow_used;
  rec.overflow_created = rep.overflow_created;
  rec.new_leaf = rep.new_leaf;
  rec.chain_over_cap = rep.chain_length > policy_.overflow_chain_cap;

  live_[p.oid] = p;
  next_oid_ = std::max(next_oid_, p.oid + 1);
  log_.records.push_back(rec);
  return rec;
}

mutation_record mutation_session::apply_delete(std::uint32_t oid, std::size_t script_line) {
  mutation_record rec;
  rec.kind = "delete";
  rec.oid = oid;
  rec.script_line = script_line;
  rec.affected_leaf = tree_->erase_logical(oid);
  live_.erase(oid);
  log_.records.push_back(rec);
  return rec;
}

std::vector<mutation_record> mutation_session::apply_update(std::uint32_t oid, double x, double y,
                                                            std::size_t script_line) {
  // Delete-then-insert; the session is the single writer, so no reader can
  // observe the intermediate state.
  std::vector<mutation_record> recs;
  recs.push_back(apply_delete(oid, script_line));
  recs.back().kind = "update_delete";
  log_.records.back().kind = "update_delete";
  recs.push_back(apply_insert(point{x, y, oid}, script_line));
  recs.back().kind = "update_insert";
  log_.records.back().kind = "update_insert";
  return recs;
}

query_record mutation_session::run_query(const rect& q, std::size_t script_line) {
  query_record rec;
  rec.script_line = script_line;
  rec.q = q;

  const search_trace trace = tree_->range_search(q);
  rec.visited = trace.visited_leaf_ids;
  rec.result_count = trace.results.size();
  rec.alpha = trace.visited_count() == 0
                  ? 1.0
                  : static_cast<double>(trace.true_count()) /
                        static_cast<double>(trace.visited_count());

  std::size_t live_truth = 0;
  for (const auto& [oid, p] : live_) {
    (void)oid;
    if (q.contains(p)) ++live_truth;
  }

  if (hybrid_.has_value()) {
    rec.hybrid_outcome = hybrid_->query(q);
    rec.recall_vs_live =
        live_truth == 0 ? 1.0
                        : static_cast<double>(rec.hybrid_outcome->results.size()) /
                              static_cast<double>(live_truth);
    maybe_trigger_retrain();
  } else {
    rec.recall_vs_live = live_truth == 0 ? 1.0
                                         : static_cast<double>(rec.result_count) /
                                               static_cast<double>(live_truth);
  }
  return rec;
}

void mutation_session::maybe_trigger_retrain() {
  if (!policy_.threshold_trigger || !hybrid_.has_value() || !retrain_source_.has_value()) return;
  if (hybrid_->window_size() < policy_.trigger_min_window) return;
  if (hybrid_->fallback_fraction() <= policy_.fallback_threshold) return;
  run_retrain();
}

void mutation_session::run_retrain() {
  ++retrains_;
  retrain_event ev;
  ev.after_record = log_.records.size();
  ev.old_assignment_digest = tree_->assignment_digest();
  ev.old_leaf_count = tree_->leaf_count();
  if (!hybrid_.has_value() || !retrain_source_.has_value()) {
    // Tree-only session: compaction plus a fresh id assignment.
    tree_->compact();
    tree_->assign_leaf_ids();
    ev.new_assignment_digest = tree_->assignment_digest();
    ev.new_leaf_count = tree_->leaf_count();
    retrain_events_.push_back(ev);
    return;
  }
  // Old index serves R-tree-only while the replacement is built aside.
  const routing_mode previous = hybrid_->routing();
  hybrid_->set_routing_mode(routing_mode::force_rtree);
  try {
    retrain_result result =
        retrain_index(*tree_, retrain_source_->first, retrain_source_->second);
    *tree_ = std::move(result.tree);
    hybrid_.emplace(tree_.get(), std::move(result.router), std::move(result.grid),
                    hybrid_options_);
    ev.new_assignment_digest = tree_->assignment_digest();
    ev.new_leaf_count = tree_->leaf_count();
    retrain_events_.push_back(ev);
  } catch (...) {
    hybrid_->set_routing_mode(previous);
    throw;
  }
}

replay_result mutation_session::replay(const std::vector<script_op>& ops) {
  replay_result out;
  for (const auto& op : ops) {
    switch (op.type) {
      case script_op::op_type::set_capacity:
        if (tree_->live_size() > 0 || hybrid_.has_value())
          throw error("script line " + std::to_string(op.line) +
                      ": capacity must precede all inserts");
        tree_ = std::make_unique<rtree>(op.capacity);
        live_.clear();
        break;
      case script_op::op_type::insert:
        apply_insert(point{op.x, op.y, op.has_oid ? op.oid : fresh_oid()}, op.line);
        break;
      case script_op::op_type::erase:
        apply_delete(op.oid, op.line);
        break;
      case script_op::op_type::update:
        apply_update(op.oid, op.x, op.y, op.line);
        break;
      case script_op::op_type::query:
        out.queries.push_back(run_query(rect{op.x, op.y, op.x2, op.y2}, op.line));
        break;
      case script_op::op_type::assign:
        tree_->assign_leaf_ids();
        break;
      case script_op::op_type::retrain:
        run_retrain();
        break;
    }
  }
  out.log = log_;
  out.retrain_events = retrain_events_;
  out.retrains = retrains_;
  return out;
}

replay_result mutation_session::replay_text(const std::string& script_text) {
  return replay(parse_mutation_script(script_text));
}

}  // namespace airtree
