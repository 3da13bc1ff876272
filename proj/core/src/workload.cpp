#include "airtree/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "airtree/binary_io.hpp"

namespace airtree {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  for (const char c : line) {
    if (c == delim) {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

bool parse_double(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) return false;
  return std::isfinite(out);
}

}  // namespace

std::vector<point> ingest_csv(const std::string& path, const std::string& x_column,
                              const std::string& y_column, bool dedup) {
  const std::string text = read_file_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw io_error("ingest_csv: empty file: " + path);

  const auto header = split_line(line, ',');
  std::size_t xi = header.size(), yi = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (name == x_column) xi = i;
    if (name == y_column) yi = i;
  }
  if (xi == header.size() || yi == header.size())
    throw io_error("ingest_csv: columns '" + x_column + "'/'" + y_column + "' not found in " +
                   path);

  std::vector<point> points;
  std::map<std::pair<double, double>, bool> seen;
  std::uint32_t oid = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_line(line, ',');
    if (xi >= cells.size() || yi >= cells.size()) continue;
    double x = 0.0, y = 0.0;
    if (!parse_double(cells[xi], x) || !parse_double(cells[yi], y)) continue;
    if (dedup) {
      if (seen.count({x, y})) continue;
      seen[{x, y}] = true;
    }
    points.push_back(point{x, y, oid++});
  }
  if (points.empty()) throw io_error("ingest_csv: no valid rows in " + path);
  return points;
}

std::string export_csv(const std::vector<point>& points, const std::string& x_column,
                       const std::string& y_column) {
  std::ostringstream out;
  out << x_column << ',' << y_column << '\n';
  out.precision(17);
  for (const auto& p : points) out << p.x << ',' << p.y << '\n';
  return out.str();
}

std::vector<point> synthetic_points(const synthetic_spec& spec) {
  if (spec.count == 0) throw error("synthetic_points: count must be positive");
  if (spec.cluster_count == 0) throw error("synthetic_points: need at least one cluster");
  rng r(spec.seed);
  std::vector<std::pair<double, double>> centers;
  centers.reserve(spec.cluster_count);
  for (std::uint32_t c = 0; c < spec.cluster_count; ++c) {
    centers.emplace_back(r.uniform(0.05, 0.95), r.uniform(0.05, 0.95));
  }
  std::vector<point> points;
  points.reserve(spec.count);
  for (std::uint32_t i = 0; i < spec.count; ++i) {
    const auto& [cx, cy] = centers[r.index(centers.size())];
    const double x = std::clamp(cx + r.normal() * spec.cluster_spread, 0.0, 1.0);
    const double y = std::clamp(cy + r.normal() * spec.cluster_spread, 0.0, 1.0);
    points.push_back(point{x, y, i});
  }
  return points;
}

namespace {

/// Exact closed-rectangle counting over a uniform bucket grid; fast enough
/// for the rejection loops in query generation.
class point_counter {
 public:
  explicit point_counter(const std::vector<point>& points) : points_(points) {
    bbox_ = rect::empty();
    for (const auto& p : points) bbox_ = bbox_.united(p);
    const double w = std::max(bbox_.width(), 1e-12);
    const double h = std::max(bbox_.height(), 1e-12);
    cell_w_ = w / k_grid;
    cell_h_ = h / k_grid;
    cells_.resize(k_grid * k_grid);
    for (std::uint32_t i = 0; i < points.size(); ++i) {
      cells_[cell_of(points[i])].push_back(i);
    }
  }

  std::size_t count(const rect& q) const {
    if (points_.empty() || !q.intersects(bbox_)) return 0;
    const auto [cx0, cx1] = axis_range(q.x_min, q.x_max, bbox_.x_min, cell_w_);
    const auto [cy0, cy1] = axis_range(q.y_min, q.y_max, bbox_.y_min, cell_h_);
    std::size_t total = 0;
    for (std::size_t cy = cy0; cy <= cy1; ++cy) {
      for (std::size_t cx = cx0; cx <= cx1; ++cx) {
        const auto& bucket = cells_[cy * k_grid + cx];
        if (bucket.empty()) continue;
        const rect cell{bbox_.x_min + cx * cell_w_, bbox_.y_min + cy * cell_h_,
                        bbox_.x_min + (cx + 1) * cell_w_, bbox_.y_min + (cy + 1) * cell_h_};
        if (q.contains(cell)) {
          total += bucket.size();
        } else {
          for (const std::uint32_t i : bucket) {
            if (q.contains(points_[i])) ++total;
          }
        }
      }
    }
    return total;
  }

 private:
  static constexpr std::size_t k_grid = 128;

  std::size_t cell_of(const point& p) const {
    auto clampi = [](double v) {
      return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(k_grid - 1)));
    };
    const std::size_t cx = clampi(std::floor((p.x - bbox_.x_min) / cell_w_));
    const std::size_t cy = clampi(std::floor((p.y - bbox_.y_min) / cell_h_));
    return cy * k_grid + cx;
  }

  static std::pair<std::size_t, std::size_t> axis_range(double lo, double hi, double origin,
                                                        double cell) {
    const double max_idx = static_cast<double>(k_grid - 1);
    const double a = std::clamp(std::floor((lo - origin) / cell), 0.0, max_idx);
    const double b = std::clamp(std::floor((hi - origin) / cell), 0.0, max_idx);
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
  }

  const std::vector<point>& points_;
  rect bbox_;
  double cell_w_ = 0.0, cell_h_ = 0.0;
  std::vector<std::vector<std::uint32_t>> cells_;
};

rect square_around(double cx, double cy, double half) {
  return rect{cx - half, cy - half, cx + half, cy + half};
}

}  // namespace

std::vector<rect> generate_queries(const std::vector<point>& points, double target_selectivity,
                                   std::size_t count, std::uint64_t seed,
                                   std::size_t max_attempts_per_query) {
  if (points.empty()) throw error("generate_queries: empty point set");
  if (target_selectivity <= 0.0 || target_selectivity >= 1.0)
    throw error("generate_queries: selectivity must be in (0, 1)");

  const point_counter counter(points);
  rng r(seed);
  const auto n = static_cast<double>(points.size());
  const auto target = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(target_selectivity * n)));
  const auto lo = static_cast<std::size_t>(
      std::max<long long>(1, static_cast<long long>(std::ceil(0.8 * target))));
  const auto hi = std::max<std::size_t>(
      lo, static_cast<std::size_t>(std::floor(1.2 * static_cast<double>(target))));

  rect bbox = rect::empty();
  for (const auto& p : points) bbox = bbox.united(p);
  const double span = std::max({bbox.width(), bbox.height(), 1e-9});

  std::vector<rect> out;
  out.reserve(count);
  while (out.size() < count) {
    bool made = false;
    for (std::size_t attempt = 0; attempt < max_attempts_per_query && !made; ++attempt) {
      const point& center = points[r.index(points.size())];
      // Exponential growth until the square reaches the band floor.
      double w = span * 1e-6;
      while (counter.count(square_around(center.x, center.y, w)) < lo && w < 4.0 * span) w *= 2.0;
      if (counter.count(square_around(center.x, center.y, w)) < lo) continue;
      // Binary search for a count inside the band.
      double w_lo = w / 2.0, w_hi = w;
      double accepted = -1.0;
      for (int iter = 0; iter < 64; ++iter) {
        const double mid = 0.5 * (w_lo + w_hi);
        const std::size_t c = counter.count(square_around(center.x, center.y, mid));
        if (c < lo) {
          w_lo = mid;
        } else if (c > hi) {
          w_hi = mid;
        } else {
          accepted = mid;
          break;
        }
      }
      if (accepted < 0.0) continue;
      rect q = square_around(center.x, center.y, accepted);
      // Aspect jitter, kept only when the count stays in band.
      const double f = r.uniform(0.75, 1.25);
      const rect jittered{center.x - accepted * f, center.y - accepted / f,
                          center.x + accepted * f, center.y + accepted / f};
      const std::size_t jc = counter.count(jittered);
      if (jc >= lo && jc <= hi) q = jittered;
      out.push_back(q);
      made = true;
    }
    if (!made) {
      std::ostringstream msg;
      msg << "generate_queries: cannot reach selectivity " << target_selectivity << " (target "
          << target << " objects) after " << max_attempts_per_query << " attempts";
      throw error(msg.str());
    }
  }
  return out;
}

std::vector<query_profile> profile_queries(const rtree& tree, const std::vector<rect>& queries,
                                           double selectivity) {
  std::vector<query_profile> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    const search_trace trace = tree.range_search(q);
    query_profile p;
    p.query = q;
    p.selectivity = selectivity;
    p.result_count = static_cast<std::uint32_t>(trace.results.size());
    p.visited_count = static_cast<std::uint32_t>(trace.visited_count());
    p.true_count = static_cast<std::uint32_t>(trace.true_count());
    p.alpha = p.visited_count == 0
                  ? 1.0
                  : static_cast<double>(p.true_count) / static_cast<double>(p.visited_count);
    p.true_leaf_ids = trace.true_leaf_ids;
    p.per_leaf_hits = trace.per_leaf_hits;
    out.push_back(std::move(p));
  }
  return out;
}

double alpha_bucket(double alpha, const std::vector<double>& edges) {
  if (edges.empty()) throw error("alpha_bucket: no edges");
  for (const double e : edges) {
    if (alpha <= e) return e;
  }
  return edges.back();
}

std::map<double, std::vector<std::size_t>> bucket_by_alpha(
    const std::vector<query_profile>& profiles, const std::vector<double>& edges) {
  std::map<double, std::vector<std::size_t>> buckets;
  for (const double e : edges) buckets[e];
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    buckets[alpha_bucket(profiles[i].alpha, edges)].push_back(i);
  }
  return buckets;
}

workload_split split_workload(const std::vector<query_profile>& profiles,
                              const std::array<double, 3>& ratios, std::uint64_t seed,
                              const std::vector<double>& bucket_edges) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw error("split_workload: ratios must sum to 1");

  std::map<std::pair<double, double>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    strata[{profiles[i].selectivity, alpha_bucket(profiles[i].alpha, bucket_edges)}].push_back(i);
  }

  workload_split split;
  rng r(seed);
  for (auto& [key, members] : strata) {
    if (members.size() < 3) {
      std::ostringstream msg;
      msg << "stratum (selectivity=" << key.first << ", bucket=" << key.second << ") has only "
          << members.size() << " queries; assigned wholly to train";
      split.warnings.push_back(msg.str());
      for (const std::size_t i : members) split.train.push_back(i);
      continue;
    }
    r.shuffle(members);
    const auto n = static_cast<double>(members.size());
    std::array<std::size_t, 3> want{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      const double exact = ratios[static_cast<std::size_t>(k)] * n;
      want[static_cast<std::size_t>(k)] = static_cast<std::size_t>(std::floor(exact));
      frac[static_cast<std::size_t>(k)] = exact - std::floor(exact);
      assigned += want[static_cast<std::size_t>(k)];
    }
    while (assigned < members.size()) {
      int best = 0;
      for (int k = 1; k < 3; ++k) {
        if (frac[static_cast<std::size_t>(k)] > frac[static_cast<std::size_t>(best)]) best = k;
      }
      ++want[static_cast<std::size_t>(best)];
      frac[static_cast<std::size_t>(best)] = -1.0;
      ++assigned;
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < want[0]; ++k) split.train.push_back(members[pos++]);
    for (std::size_t k = 0; k < want[1]; ++k) split.validation.push_back(members[pos++]);
    for (std::size_t k = 0; k < want[2]; ++k) split.test.push_back(members[pos++]);
  }
  return split;
}

std::vector<query_profile> build_bucketed_workload(
    const rtree& tree, const std::vector<point>& points,
    const std::vector<double>& selectivities, const std::vector<double>& bucket_edges,
    std::size_t per_cell_quota, std::uint64_t seed, workload_build_report* report,
    std::size_t oversample_factor) {
  std::vector<query_profile> kept;
  workload_build_report local;
  for (std::size_t si = 0; si < selectivities.size(); ++si) {
    const double sel = selectivities[si];
    std::map<double, std::size_t> cell_fill;
    for (const double e : bucket_edges) cell_fill[e] = 0;
    const std::size_t budget = per_cell_quota * oversample_factor;
    std::size_t generated = 0;
    std::uint64_t batch = 0;
    auto cells_full = [&] {
      for (const auto& [e, c] : cell_fill) {
        (void)e;
        if (c < per_cell_quota) return false;
      }
      return true;
    };
    while (!cells_full() && generated < budget) {
      const std::size_t batch_size = std::min<std::size_t>(per_cell_quota, budget - generated);
      const auto rects = generate_queries(points, sel, batch_size,
                                          rng::derive_seed(seed, si * 10007 + batch));
      const auto profiles = profile_queries(tree, rects, sel);
      for (const auto& p : profiles) {
        const double bucket = alpha_bucket(p.alpha, bucket_edges);
        if (cell_fill[bucket] < per_cell_quota) {
          ++cell_fill[bucket];
          kept.push_back(p);
        }
      }
      generated += batch_size;
      ++batch;
    }
    for (const auto& [edge, filled] : cell_fill) {
      local.cell_counts[{sel, edge}] = filled;
      if (filled < per_cell_quota) {
        std::ostringstream msg;
        msg << "workload cell (selectivity=" << sel << ", bucket=" << edge << ") filled "
            << filled << "/" << per_cell_quota << " before attempt budget ran out";
        local.warnings.push_back(msg.str());
      }
    }
  }
  if (report != nullptr) *report = std::move(local);
  return kept;
}

labeled_corpus make_labeled_corpus(const std::vector<query_profile>& profiles,
                                   const std::vector<std::size_t>& indices,
                                   std::uint32_t label_count, std::uint64_t assignment_digest) {
  labeled_corpus corpus;
  corpus.label_count = label_count;
  fnv1a64 h;
  h.update_value(assignment_digest);
  h.update_value(label_count);
  for (const std::size_t i : indices) {
    const auto& p = profiles[i];
    labeled_example ex;
    ex.features = {p.query.x_min, p.query.y_min, p.query.x_max, p.query.y_max};
    ex.labels = p.true_leaf_ids;
    std::sort(ex.labels.begin(), ex.labels.end());
    ex.profile_index = i;
    for (const double f : ex.features) h.update_value(f);
    for (const auto l : ex.labels) h.update_value(l);
    corpus.examples.push_back(std::move(ex));
  }
  corpus.digest = h.digest();
  return corpus;
}

namespace {

nlohmann::json profile_to_json(const query_profile& p) {
  nlohmann::json j;
  j["rect"] = {p.query.x_min, p.query.y_min, p.query.x_max, p.query.y_max};
  j["sel"] = p.selectivity;
  j["results"] = p.result_count;
  j["vn"] = p.visited_count;
  j["tn"] = p.true_count;
  j["alpha"] = p.alpha;
  j["true_leaves"] = p.true_leaf_ids;
  nlohmann::json hits = nlohmann::json::object();
  for (const auto& [id, n] : p.per_leaf_hits) hits[std::to_string(id)] = n;
  j["hits"] = hits;
  return j;
}

query_profile profile_from_json(const nlohmann::json& j) {
  query_profile p;
  const auto& r = j.at("rect");
  p.query = rect{r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
                 r.at(3).get<double>()};
  p.selectivity = j.at("sel").get<double>();
  p.result_count = j.at("results").get<std::uint32_t>();
  p.visited_count = j.at("vn").get<std::uint32_t>();
  p.true_count = j.at("tn").get<std::uint32_t>();
  p.alpha = j.at("alpha").get<double>();
  p.true_leaf_ids = j.at("true_leaves").get<std::vector<leaf_id>>();
  for (const auto& [key, value] : j.at("hits").items()) {
    p.per_leaf_hits[static_cast<leaf_id>(std::stoul(key))] = value.get<std::uint32_t>();
  }
  return p;
}

}  // namespace

std::string corpus_to_jsonl(const std::vector<corpus_entry>& entries) {
  std::ostringstream out;
  for (const auto& e : entries) {
    nlohmann::json j = profile_to_json(e.profile);
    if (!e.split.empty()) j["split"] = e.split;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<corpus_entry> corpus_from_jsonl(const std::string& text) {
  std::vector<corpus_entry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw io_error("corpus line " + std::to_string(line_no) + ": " + ex.what());
    }
    corpus_entry e;
    e.profile = profile_from_json(j);
    if (j.contains("split")) e.split = j.at("split").get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_corpus(const std::string& path, const std::vector<corpus_entry>& entries) {
  write_file_text(path, corpus_to_jsonl(entries));
}

std::vector<corpus_entry> load_corpus(const std::string& path) {
  return corpus_from_jsonl(read_file_text(path));
}

}  // namespace airtree
