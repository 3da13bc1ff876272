#include "airtree/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

namespace airtree {

double predicted_leaf_recall(const std::vector<leaf_id>& predicted_sorted,
                             const query_profile& truth) {
  if (truth.result_count == 0) return 1.0;
  std::uint64_t hit = 0;
  for (const auto& [leaf, hits] : truth.per_leaf_hits) {
    if (std::binary_search(predicted_sorted.begin(), predicted_sorted.end(), leaf)) hit += hits;
  }
  return static_cast<double>(hit) / static_cast<double>(truth.result_count);
}

double query_recall(const query_outcome& outcome, const query_profile& truth) {
  if (truth.result_count == 0) return 1.0;
  return static_cast<double>(outcome.results.size()) / static_cast<double>(truth.result_count);
}

double query_precision(const query_outcome& outcome, const rect& q) {
  if (outcome.results.empty()) return 1.0;
  std::size_t inside = 0;
  for (const point& p : outcome.results)
    if (q.contains(p)) ++inside;
  return static_cast<double>(inside) / static_cast<double>(outcome.results.size());
}

double query_time_ms(const query_outcome& outcome, const cost_model& cost) {
  return outcome.wall_cpu_ms + static_cast<double>(outcome.leaf_accesses) * cost.io_unit_ms;
}

namespace {

struct group_sums {
  std::size_t count = 0;
  double recall = 0.0;
  double accesses = 0.0;
  double cpu_ms = 0.0;
  double fallbacks = 0.0;
  double precision = 0.0;
};

std::string format_double(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

std::vector<bucket_report> aggregate_outcomes(const std::vector<query_outcome>& outcomes,
                                              const std::vector<query_profile>& truths,
                                              const std::string& model_name,
                                              const std::vector<double>& bucket_edges,
                                              const cost_model& cost) {
  if (outcomes.size() != truths.size())
    throw error("aggregate_outcomes: outcome/truth size mismatch");

  // key: (view, selectivity, bucket label)
  std::map<std::tuple<std::string, double, std::string>, group_sums> groups;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    const auto& t = truths[i];
    const double recall = query_recall(o, t);
    const double precision = query_precision(o, t.query);
    const bool fell_back = o.path == query_path::ai_then_fallback;

    const std::string alpha_label = format_double(alpha_bucket(t.alpha, bucket_edges));
    const std::string path_label = query_path_name(o.path);
    for (const auto& [view, bucket] :
         {std::pair<std::string, std::string>{"by_true_alpha", alpha_label},
          std::pair<std::string, std::string>{"by_router", path_label}}) {
      auto& g = groups[{view, t.selectivity, bucket}];
      ++g.count;
      g.recall += recall;
      g.accesses += static_cast<double>(o.leaf_accesses);
      g.cpu_ms += o.wall_cpu_ms;
      g.fallbacks += fell_back ? 1.0 : 0.0;
      g.precision += precision;
    }
  }

  std::vector<bucket_report> reports;
  for (const auto& [key, g] : groups) {
    const auto& [view, selectivity, bucket] = key;
    bucket_report r;
    r.view = view;
    r.model = model_name;
    r.selectivity = selectivity;
    r.bucket = bucket;
    r.query_count = g.count;
    const double n = static_cast<double>(g.count);
    r.mean_recall = g.recall / n;
    r.mean_leaf_accesses = g.accesses / n;
    r.mean_io_ms = r.mean_leaf_accesses * cost.io_unit_ms;
    r.fallback_fraction = g.fallbacks / n;
    r.precision = g.precision / n;
    r.mean_cpu_ms = g.cpu_ms / n;
    r.mean_query_time_ms = r.mean_cpu_ms + r.mean_io_ms;
    reports.push_back(std::move(r));
  }
  return reports;
}

footprint_report model_footprint(const std::vector<footprint_component>& model_components,
                                 std::size_t tree_snapshot_bytes) {
  footprint_report report;
  report.components = model_components;
  for (const auto& c : model_components) report.model_bytes_total += c.bytes;
  report.tree_snapshot_bytes = tree_snapshot_bytes;
  report.overhead_ratio =
      tree_snapshot_bytes == 0
          ? 0.0
          : static_cast<double>(report.model_bytes_total) /
                static_cast<double>(tree_snapshot_bytes);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", report.overhead_ratio * 100.0);
  report.overhead_pct = buf;
  return report;
}

std::string reports_to_jsonl(const std::vector<bucket_report>& reports, bool include_timing) {
  std::ostringstream out;
  for (const auto& r : reports) {
    nlohmann::json j;
    j["view"] = r.view;
    j["model"] = r.model;
    j["selectivity"] = r.selectivity;
    j["bucket"] = r.bucket;
    j["queries"] = r.query_count;
    j["mean_recall"] = r.mean_recall;
    j["mean_leaf_accesses"] = r.mean_leaf_accesses;
    j["mean_io_ms"] = r.mean_io_ms;
    j["fallback_fraction"] = r.fallback_fraction;
    j["precision"] = r.precision;
    if (include_timing) {
      j["mean_cpu_ms"] = r.mean_cpu_ms;
      j["mean_query_time_ms"] = r.mean_query_time_ms;
    }
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<bucket_report> reports_from_jsonl(const std::string& text) {
  std::vector<bucket_report> reports;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (!j.contains("view")) continue;  // meta line
    bucket_report r;
    r.view = j.at("view").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.selectivity = j.at("selectivity").get<double>();
    r.bucket = j.at("bucket").get<std::string>();
    r.query_count = j.at("queries").get<std::size_t>();
    r.mean_recall = j.at("mean_recall").get<double>();
    r.mean_leaf_accesses = j.at("mean_leaf_accesses").get<double>();
    r.mean_io_ms = j.at("mean_io_ms").get<double>();
    r.fallback_fraction = j.at("fallback_fraction").get<double>();
    r.precision = j.at("precision").get<double>();
    if (j.contains("mean_cpu_ms")) r.mean_cpu_ms = j.at("mean_cpu_ms").get<double>();
    if (j.contains("mean_query_time_ms"))
      r.mean_query_time_ms = j.at("mean_query_time_ms").get<double>();
    reports.push_back(std::move(r));
  }
  return reports;
}

std::string reports_to_table(const std::vector<bucket_report>& reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-14s %-10s %-12s %-8s %7s %8s %10s %9s %9s %10s %10s\n",
                "view", "model", "selectivity", "bucket", "count", "recall", "leaf_acc",
                "io_ms", "cpu_ms", "time_ms", "fallback");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line),
                  "%-14s %-10s %-12g %-8s %7zu %8.4f %10.2f %9.3f %9.3f %10.3f %10.3f\n",
                  r.view.c_str(), r.model.c_str(), r.selectivity, r.bucket.c_str(), r.query_count,
                  r.mean_recall, r.mean_leaf_accesses, r.mean_io_ms, r.mean_cpu_ms,
                  r.mean_query_time_ms, r.fallback_fraction);
    out << line;
  }
  return out.str();
}

std::string reports_to_csv(const std::vector<bucket_report>& reports) {
  std::ostringstream out;
  out << "view,model,selectivity,bucket,queries,mean_recall,mean_leaf_accesses,mean_io_ms,"
         "fallback_fraction,precision,mean_cpu_ms,mean_query_time_ms\n";
  for (const auto& r : reports) {
    out << r.view << ',' << r.model << ',' << r.selectivity << ',' << r.bucket << ','
        << r.query_count << ',' << r.mean_recall << ',' << r.mean_leaf_accesses << ','
        << r.mean_io_ms << ',' << r.fallback_fraction << ',' << r.precision << ',' << r.mean_cpu_ms
        << ',' << r.mean_query_time_ms << '\n';
  }
  return out.str();
}

std::string footprint_to_table(const footprint_report& report) {
  std::ostringstream out;
  out << "component                bytes\n";
  char line[128];
  for (const auto& c : report.components) {
    std::snprintf(line, sizeof(line), "%-20s %10zu\n", c.name.c_str(), c.bytes);
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-20s %10zu\n", "models_total", report.model_bytes_total);
  out << line;
  std::snprintf(line, sizeof(line), "%-20s %10zu\n", "tree_snapshot", report.tree_snapshot_bytes);
  out << line;
  out << "overhead: " << report.overhead_pct << "%\n";
  return out.str();
}

std::string footprint_to_json(const footprint_report& report) {
  nlohmann::json j;
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : report.components) comps.push_back({{"name", c.name}, {"bytes", c.bytes}});
  j["components"] = comps;
  j["models_total_bytes"] = report.model_bytes_total;
  j["tree_snapshot_bytes"] = report.tree_snapshot_bytes;
  j["overhead_ratio"] = report.overhead_ratio;
  j["overhead_pct"] = report.overhead_pct;
  return j.dump(2) + "\n";
}

}  // namespace airtree
