#pragma once

#include <mutex>

#include "airtree/grid_index.hpp"
#include "airtree/nn.hpp"
#include "airtree/tree_classifiers.hpp"

namespace airtree {

class dct_cell_trainer : public cell_trainer {
 public:
  explicit dct_cell_trainer(tree_hyperparams hyper) : hyper_(hyper) {}

  model_kind kind() const override { return model_kind::dct; }

  std::unique_ptr<multilabel_model> train(const labeled_corpus& corpus,
                                          const std::vector<std::size_t>& example_indices,
                                          std::uint64_t /*cell_seed*/) const override {
    return std::make_unique<decision_tree>(decision_tree::fit(corpus, example_indices, hyper_));
  }

 private:
  tree_hyperparams hyper_;
};

class rf_cell_trainer : public cell_trainer {
 public:
  explicit rf_cell_trainer(forest_hyperparams hyper) : hyper_(hyper) {}

  model_kind kind() const override { return model_kind::rf; }

  std::unique_ptr<multilabel_model> train(const labeled_corpus& corpus,
                                          const std::vector<std::size_t>& example_indices,
                                          std::uint64_t cell_seed) const override {
    return std::make_unique<random_forest>(
        random_forest::fit(corpus, example_indices, hyper_, cell_seed));
  }

 private:
  forest_hyperparams hyper_;
};

/// Trains one feed-forward net per cell. The validation corpus, when given,
/// only feeds the loss-history sidecar. Histories are collected per cell.
class nn_cell_trainer : public cell_trainer {
 public:
  nn_cell_trainer(const rtree* tree, const incidence_matrix* A, nn_config config,
                  const labeled_corpus* validation = nullptr)
      : tree_(tree), A_(A), config_(std::move(config)), validation_(validation) {}

  model_kind kind() const override {
    return config_.objective == nn_objective::custom ? model_kind::nn_custom
                                                     : model_kind::nn_bce;
  }

  std::unique_ptr<multilabel_model> train(const labeled_corpus& corpus,
                                          const std::vector<std::size_t>& example_indices,
                                          std::uint64_t cell_seed) const override;

  std::vector<nn_train_history> histories() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return histories_;
  }

 private:
  const rtree* tree_;
  const incidence_matrix* A_;
  nn_config config_;
  const labeled_corpus* validation_;
  mutable std::mutex mutex_;
  mutable std::vector<nn_train_history> histories_;
};

std::unique_ptr<cell_trainer> make_cell_trainer(model_kind kind, const tree_hyperparams& dct,
                                                const forest_hyperparams& rf, const rtree* tree,
                                                const incidence_matrix* A, const nn_config& nn,
                                                const labeled_corpus* nn_validation = nullptr);

}  // namespace airtree
