#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "airtree/model.hpp"
#include "airtree/util.hpp"
#include "airtree/workload.hpp"

namespace airtree {

enum class aggregation_mode : std::uint8_t { set_union = 0, majority_vote = 1 };

std::string aggregation_name(aggregation_mode m);
aggregation_mode aggregation_from_name(const std::string& name);

struct grid_geometry {
  rect bounds;
  std::uint32_t rows = 1;
  std::uint32_t cols = 1;

  rect cell_rect(std::uint32_t row, std::uint32_t col) const;
  std::uint32_t cell_index(std::uint32_t row, std::uint32_t col) const { return row * cols + col; }
  std::uint32_t cell_count() const { return rows * cols; }
};

/// Per-kind training callback the grid applies cell by cell.
class cell_trainer {
 public:
  virtual ~cell_trainer() = default;
  virtual model_kind kind() const = 0;
  virtual std::unique_ptr<multilabel_model> train(const labeled_corpus& corpus,
                                                  const std::vector<std::size_t>& example_indices,
                                                  std::uint64_t cell_seed) const = 0;
};

struct grid_tuning_entry {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  double mean_validation_recall = 0.0;
};

struct grid_tuning_report {
  std::vector<grid_tuning_entry> entries;
  std::uint32_t chosen_rows = 0;
  std::uint32_t chosen_cols = 0;
};

/// Coarse uniform grid over the data space; each populated cell owns one
/// multi-label model trained on the training queries overlapping it.
/// Queries aggregate predictions across every overlapping populated cell.
class grid_model_index {
 public:
  grid_model_index() = default;

  static grid_model_index train(const labeled_corpus& corpus, const grid_geometry& geometry,
                                const cell_trainer& trainer, std::uint64_t seed,
                                std::uint64_t assignment_digest,
                                aggregation_mode aggregation = aggregation_mode::set_union);

  /// All cells whose closed area intersects the rect; empty when the rect
  /// lies outside the grid bounds.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> overlapping_cells(const rect& q) const;

  std::vector<std::uint32_t> predict_aggregate(const rect& q, double cutoff) const;

  struct cell_prediction {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    bool populated = false;
    std::vector<std::uint32_t> labels;
  };
  std::vector<cell_prediction> predict_detail(const rect& q, double cutoff) const;

  const grid_geometry& geometry() const { return geom_; }
  model_kind kind() const { return kind_; }
  aggregation_mode aggregation() const { return aggregation_; }
  void set_aggregation(aggregation_mode m) { aggregation_ = m; }
  std::uint32_t label_count() const { return label_count_; }
  std::uint64_t corpus_digest() const { return corpus_digest_; }
  std::uint64_t assignment_digest() const { return assignment_digest_; }
  const std::vector<std::uint32_t>& training_histogram() const { return histogram_; }
  std::size_t populated_cells() const;
  const multilabel_model* cell_model(std::uint32_t row, std::uint32_t col) const;

  /// Sum of the serialized sizes of all cell models; the index's reported
  /// model size.
  std::size_t serialized_model_bytes() const;

  std::optional<grid_tuning_report> tuning() const { return tuning_; }
  void set_tuning(grid_tuning_report report) { tuning_ = std::move(report); }

  /// Writes <prefix>_manifest.json plus one model file per populated cell.
  void save(const std::string& dir, const std::string& prefix) const;
  static grid_model_index load(const std::string& dir, const std::string& prefix);

 private:
  grid_geometry geom_;
  model_kind kind_ = model_kind::dct;
  aggregation_mode aggregation_ = aggregation_mode::set_union;
  std::uint32_t label_count_ = 0;
  std::uint64_t corpus_digest_ = 0;
  std::uint64_t assignment_digest_ = 0;
  std::vector<std::unique_ptr<multilabel_model>> cells_;
  std::vector<std::uint32_t> histogram_;
  std::optional<grid_tuning_report> tuning_;
};

/// Trains one grid per candidate size, scores mean validation leaf recall,
/// and returns the winner (ties favor the smaller grid). The returned index
/// carries the tuning report.
grid_model_index tune_grid_size(const labeled_corpus& train_corpus,
                                const labeled_corpus& validation_corpus,
                                const std::vector<query_profile>& profiles,
                                const grid_geometry& base_geometry,
                                const std::vector<std::uint32_t>& candidate_sizes,
                                const cell_trainer& trainer, std::uint64_t seed,
                                std::uint64_t assignment_digest, double cutoff,
                                aggregation_mode aggregation = aggregation_mode::set_union);

}  // namespace airtree
