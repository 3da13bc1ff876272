#include "airtree/grid_index.hpp"

#include <algorithm>
#include <filesystem>
#include <future>
#include <set>
#include <thread>

#include <json.hpp>

#include "airtree/binary_io.hpp"
#include "airtree/metrics.hpp"

namespace airtree {

std::string aggregation_name(aggregation_mode m) {
  return m == aggregation_mode::set_union ? "union" : "vote";
}

aggregation_mode aggregation_from_name(const std::string& name) {
  if (name == "union") return aggregation_mode::set_union;
  if (name == "vote") return aggregation_mode::majority_vote;
  throw error("unknown aggregation mode: " + name);
}

rect grid_geometry::cell_rect(std::uint32_t row, std::uint32_t col) const {
  const double w = bounds.width() / static_cast<double>(cols);
  const double h = bounds.height() / static_cast<double>(rows);
  const double x_lo = bounds.x_min + static_cast<double>(col) * w;
  const double y_lo = bounds.y_min + static_cast<double>(row) * h;
  const double x_hi = col + 1 == cols ? bounds.x_max : bounds.x_min + (col + 1.0) * w;
  const double y_hi = row + 1 == rows ? bounds.y_max : bounds.y_min + (row + 1.0) * h;
  return rect{x_lo, y_lo, x_hi, y_hi};
}

grid_model_index grid_model_index::train(const labeled_corpus& corpus,
                                         const grid_geometry& geometry,
                                         const cell_trainer& trainer, std::uint64_t seed,
                                         std::uint64_t assignment_digest,
                                         aggregation_mode aggregation) {
  if (corpus.examples.empty()) throw error("grid train: empty training set");
  if (geometry.rows == 0 || geometry.cols == 0) throw error("grid train: zero-sized grid");

  grid_model_index index;
  index.geom_ = geometry;
  index.kind_ = trainer.kind();
  index.aggregation_ = aggregation;
  index.label_count_ = corpus.label_count;
  index.corpus_digest_ = corpus.digest;
  index.assignment_digest_ = assignment_digest;

  const std::uint32_t cell_count = geometry.cell_count();
  std::vector<std::vector<std::size_t>> members(cell_count);
  for (std::size_t e = 0; e < corpus.examples.size(); ++e) {
    const auto& f = corpus.examples[e].features;
    const rect q{f[0], f[1], f[2], f[3]};
    for (std::uint32_t r = 0; r < geometry.rows; ++r) {
      for (std::uint32_t c = 0; c < geometry.cols; ++c) {
        if (geometry.cell_rect(r, c).intersects(q)) {
          members[geometry.cell_index(r, c)].push_back(e);
        }
      }
    }
  }

  index.histogram_.resize(cell_count);
  for (std::uint32_t i = 0; i < cell_count; ++i) {
    index.histogram_[i] = static_cast<std::uint32_t>(members[i].size());
  }

  index.cells_.resize(cell_count);
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  for (std::uint32_t start = 0; start < cell_count; start += workers) {
    const std::uint32_t end = std::min(cell_count, start + workers);
    std::vector<std::future<std::unique_ptr<multilabel_model>>> batch;
    for (std::uint32_t i = start; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [&, i]() -> std::unique_ptr<multilabel_model> {
        if (members[i].empty()) return nullptr;
        auto model = trainer.train(corpus, members[i], rng::derive_seed(seed, i));
        model->assignment_digest = assignment_digest;
        return model;
      }));
    }
    for (std::uint32_t i = start; i < end; ++i) index.cells_[i] = batch[i - start].get();
  }
  return index;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> grid_model_index::overlapping_cells(
    const rect& q) const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  if (!q.intersects(geom_.bounds)) return out;
  for (std::uint32_t r = 0; r < geom_.rows; ++r) {
    for (std::uint32_t c = 0; c < geom_.cols; ++c) {
      if (geom_.cell_rect(r, c).intersects(q)) out.emplace_back(r, c);
    }
  }
  return out;
}

std::vector<std::uint32_t> grid_model_index::predict_aggregate(const rect& q,
                                                               double cutoff) const {
  const auto cells = overlapping_cells(q);
  std::size_t populated = 0;
  std::map<std::uint32_t, std::size_t> votes;
  for (const auto& [r, c] : cells) {
    const auto* model = cells_[geom_.cell_index(r, c)].get();
    if (model == nullptr) continue;
    ++populated;
    for (const std::uint32_t label : model->predict(q, cutoff)) ++votes[label];
  }
  std::vector<std::uint32_t> out;
  for (const auto& [label, count] : votes) {
    if (aggregation_ == aggregation_mode::set_union || 2 * count > populated) {
      out.push_back(label);
    }
  }
  return out;
}

std::vector<grid_model_index::cell_prediction> grid_model_index::predict_detail(
    const rect& q, double cutoff) const {
  std::vector<cell_prediction> out;
  for (const auto& [r, c] : overlapping_cells(q)) {
    cell_prediction p;
    p.row = r;
    p.col = c;
    const auto* model = cells_[geom_.cell_index(r, c)].get();
    p.populated = model != nullptr;
    if (model != nullptr) p.labels = model->predict(q, cutoff);
    out.push_back(std::move(p));
  }
  return out;
}

std::size_t grid_model_index::populated_cells() const {
  std::size_t n = 0;
  for (const auto& cell : cells_)
    if (cell != nullptr) ++n;
  return n;
}

const multilabel_model* grid_model_index::cell_model(std::uint32_t row, std::uint32_t col) const {
  return cells_[geom_.cell_index(row, col)].get();
}

std::size_t grid_model_index::serialized_model_bytes() const {
  std::size_t total = 0;
  for (const auto& cell : cells_) {
    if (cell != nullptr) total += serialize_model(*cell).size();
  }
  return total;
}

void grid_model_index::save(const std::string& dir, const std::string& prefix) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = model_kind_name(kind_);
  manifest["aggregation"] = aggregation_name(aggregation_);
  manifest["rows"] = geom_.rows;
  manifest["cols"] = geom_.cols;
  manifest["bounds"] = {geom_.bounds.x_min, geom_.bounds.y_min, geom_.bounds.x_max,
                        geom_.bounds.y_max};
  manifest["label_count"] = label_count_;
  manifest["corpus_digest"] = to_hex(corpus_digest_);
  manifest["assignment_digest"] = to_hex(assignment_digest_);
  manifest["histogram"] = histogram_;
  nlohmann::json cells = nlohmann::json::array();
  for (std::uint32_t r = 0; r < geom_.rows; ++r) {
    for (std::uint32_t c = 0; c < geom_.cols; ++c) {
      const auto* model = cells_[geom_.cell_index(r, c)].get();
      if (model == nullptr) continue;
      const std::string file =
          prefix + "_cell_" + std::to_string(r) + "_" + std::to_string(c) + ".bin";
      const auto bytes = serialize_model(*model);
      write_file_bytes((fs::path(dir) / file).string(), bytes);
      nlohmann::json entry;
      entry["row"] = r;
      entry["col"] = c;
      entry["file"] = file;
      entry["bytes"] = bytes.size();
      cells.push_back(entry);
    }
  }
  manifest["cells"] = cells;
  if (tuning_.has_value()) {
    nlohmann::json t;
    t["chosen"] = {tuning_->chosen_rows, tuning_->chosen_cols};
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : tuning_->entries) {
      entries.push_back({{"rows", e.rows}, {"cols", e.cols}, {"recall", e.mean_validation_recall}});
    }
    t["entries"] = entries;
    manifest["tuning"] = t;
  }
  write_file_text((fs::path(dir) / (prefix + "_manifest.json")).string(), manifest.dump(2) + "\n");
}

grid_model_index grid_model_index::load(const std::string& dir, const std::string& prefix) {
  namespace fs = std::filesystem;
  const auto manifest =
      nlohmann::json::parse(read_file_text((fs::path(dir) / (prefix + "_manifest.json")).string()));
  grid_model_index index;
  index.kind_ = model_kind_from_name(manifest.at("kind").get<std::string>());
  index.aggregation_ = aggregation_from_name(manifest.at("aggregation").get<std::string>());
  index.geom_.rows = manifest.at("rows").get<std::uint32_t>();
  index.geom_.cols = manifest.at("cols").get<std::uint32_t>();
  const auto& b = manifest.at("bounds");
  index.geom_.bounds = rect{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                            b.at(3).get<double>()};
  index.label_count_ = manifest.at("label_count").get<std::uint32_t>();
  index.corpus_digest_ = std::stoull(manifest.at("corpus_digest").get<std::string>(), nullptr, 16);
  index.assignment_digest_ =
      std::stoull(manifest.at("assignment_digest").get<std::string>(), nullptr, 16);
  index.histogram_ = manifest.at("histogram").get<std::vector<std::uint32_t>>();
  index.cells_.resize(index.geom_.cell_count());
  for (const auto& entry : manifest.at("cells")) {
    const auto r = entry.at("row").get<std::uint32_t>();
    const auto c = entry.at("col").get<std::uint32_t>();
    const auto file = entry.at("file").get<std::string>();
    auto model = deserialize_model(read_file_bytes((fs::path(dir) / file).string()));
    index.cells_[index.geom_.cell_index(r, c)] = std::move(model);
  }
  if (manifest.contains("tuning")) {
    grid_tuning_report report;
    const auto& t = manifest.at("tuning");
    report.chosen_rows = t.at("chosen").at(0).get<std::uint32_t>();
    report.chosen_cols = t.at("chosen").at(1).get<std::uint32_t>();
    for (const auto& e : t.at("entries")) {
      report.entries.push_back({e.at("rows").get<std::uint32_t>(), e.at("cols").get<std::uint32_t>(),
                                e.at("recall").get<double>()});
    }
    index.tuning_ = std::move(report);
  }
  return index;
}

grid_model_index tune_grid_size(const labeled_corpus& train_corpus,
                                const labeled_corpus& validation_corpus,
                                const std::vector<query_profile>& profiles,
                                const grid_geometry& base_geometry,
                                const std::vector<std::uint32_t>& candidate_sizes,
                                const cell_trainer& trainer, std::uint64_t seed,
                                std::uint64_t assignment_digest, double cutoff,
                                aggregation_mode aggregation) {
  if (candidate_sizes.empty()) throw error("tune_grid_size: no candidates");
  grid_tuning_report report;
  std::optional<grid_model_index> best;
  double best_recall = -1.0;
  for (const std::uint32_t size : candidate_sizes) {
    grid_geometry geometry = base_geometry;
    geometry.rows = size;
    geometry.cols = size;
    grid_model_index candidate =
        grid_model_index::train(train_corpus, geometry, trainer, seed, assignment_digest,
                                aggregation);
    double recall_sum = 0.0;
    for (const auto& ex : validation_corpus.examples) {
      const rect q{ex.features[0], ex.features[1], ex.features[2], ex.features[3]};
      const auto predicted = candidate.predict_aggregate(q, cutoff);
      recall_sum += predicted_leaf_recall(predicted, profiles[ex.profile_index]);
    }
    const double mean_recall =
        validation_corpus.examples.empty()
            ? 0.0
            : recall_sum / static_cast<double>(validation_corpus.examples.size());
    report.entries.push_back({size, size, mean_recall});
    if (mean_recall > best_recall) {
      best_recall = mean_recall;
      best = std::move(candidate);
      report.chosen_rows = size;
      report.chosen_cols = size;
    }
  }
  best->set_tuning(std::move(report));
  return std::move(*best);
}

}  // namespace airtree
