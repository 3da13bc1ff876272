#pragma once

#include <cstdint>
#include <vector>

#include "airtree/model.hpp"
#include "airtree/util.hpp"
#include "airtree/workload.hpp"

namespace airtree {

struct tree_hyperparams {
  std::uint32_t max_depth = 0;  ///< 0 = unlimited
  std::uint32_t min_samples_leaf = 1;
};

/// Multi-label CART over the 4 rectangle features. Splits minimize the mean
/// per-label Gini impurity; leaves store the sparse per-label positive
/// fraction of the training examples they hold.
class decision_tree : public multilabel_model {
 public:
  static decision_tree fit(const labeled_corpus& corpus,
                           const std::vector<std::size_t>& example_indices,
                           const tree_hyperparams& hyper, double feature_subsample = 1.0,
                           rng* feature_rng = nullptr);

  model_kind kind() const override { return model_kind::dct; }
  std::uint32_t label_count() const override { return label_count_; }
  std::vector<std::uint32_t> predict(const rect& query, double cutoff) const override;
  void save_body(binary_writer& w) const override;
  static decision_tree load_body(binary_reader& r);

  /// Sparse (label, fraction) distribution at the leaf the query routes to.
  std::vector<std::pair<std::uint32_t, double>> route(const rect& query) const;

  std::size_t node_count() const { return nodes_.size(); }
  std::uint32_t depth() const;
  const tree_hyperparams& hyperparams() const { return hyper_; }

 private:
  struct tnode {
    std::int32_t feature = -1;  ///< -1: leaf
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t dist_begin = 0;
    std::uint32_t dist_count = 0;
  };

  std::uint32_t route_node(const std::array<double, 4>& f) const;

  std::uint32_t label_count_ = 0;
  tree_hyperparams hyper_;
  std::vector<tnode> nodes_;
  std::vector<std::pair<std::uint32_t, double>> dists_;  ///< pooled sparse leaf payloads
};

struct forest_hyperparams {
  std::uint32_t n_estimators = 50;
  double feature_subsample = 1.0;
  tree_hyperparams tree;
};

/// Bagged decision trees; prediction is the mean of the per-tree label
/// distributions.
class random_forest : public multilabel_model {
 public:
  static random_forest fit(const labeled_corpus& corpus,
                           const std::vector<std::size_t>& example_indices,
                           const forest_hyperparams& hyper, std::uint64_t seed);

  model_kind kind() const override { return model_kind::rf; }
  std::uint32_t label_count() const override { return label_count_; }
  std::vector<std::uint32_t> predict(const rect& query, double cutoff) const override;
  void save_body(binary_writer& w) const override;
  static random_forest load_body(binary_reader& r);

  /// Mean positive score per label, sparse, sorted by label.
  std::vector<std::pair<std::uint32_t, double>> scores(const rect& query) const;

  std::size_t tree_count() const { return trees_.size(); }
  const forest_hyperparams& hyperparams() const { return hyper_; }

 private:
  std::uint32_t label_count_ = 0;
  forest_hyperparams hyper_;
  std::vector<decision_tree> trees_;
};

/// The overlap-ratio router: a random forest over the 4 query features that
/// labels a query high-overlap when it predicts alpha <= tau.
class binary_router {
 public:
  binary_router() = default;

  static bool high_overlap_label(double alpha, double tau) { return alpha <= tau; }

  /// Trains on an 80/20 shuffle split of the given profiles and records the
  /// held-out accuracy. Throws when only one class is present.
  static binary_router fit(const std::vector<query_profile>& profiles, double tau,
                           const forest_hyperparams& hyper, std::uint64_t seed,
                           std::uint64_t assignment_digest);

  double probability_high(const rect& query) const;
  bool is_high_overlap(const rect& query) const {
    return probability_high(query) >= decision_cutoff_;
  }

  double tau() const { return tau_; }
  double decision_cutoff() const { return decision_cutoff_; }
  double test_accuracy() const { return test_accuracy_; }
  std::uint64_t assignment_digest() const { return assignment_digest_; }

  std::vector<unsigned char> serialize() const;
  static binary_router deserialize(const std::vector<unsigned char>& bytes);

 private:
  double tau_ = 0.75;
  double decision_cutoff_ = 0.5;
  double test_accuracy_ = 0.0;
  std::uint64_t assignment_digest_ = 0;
  random_forest forest_;
};

}  // namespace airtree
