#include "airtree/trainers.hpp"

namespace airtree {

std::unique_ptr<multilabel_model> nn_cell_trainer::train(
    const labeled_corpus& corpus, const std::vector<std::size_t>& example_indices,
    std::uint64_t cell_seed) const {
  labeled_corpus sub;
  sub.label_count = corpus.label_count;
  fnv1a64 h;
  h.update_value(corpus.digest);
  for (const std::size_t i : example_indices) {
    sub.examples.push_back(corpus.examples[i]);
    h.update_value(static_cast<std::uint64_t>(i));
  }
  sub.digest = h.digest();

  nn_config cfg = config_;
  cfg.seed = cell_seed;
  const bool custom = cfg.objective == nn_objective::custom;

  std::vector<object_support> supports;
  std::vector<object_support> val_supports;
  if (custom) {
    supports = build_supports(*tree_, *A_, sub, cfg.full_object_support);
    if (validation_ != nullptr) {
      val_supports = build_supports(*tree_, *A_, *validation_, cfg.full_object_support);
    }
  }
  nn_train_result result = train_nn(sub, supports, validation_,
                                    custom && validation_ != nullptr ? &val_supports : nullptr,
                                    A_, cfg);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    histories_.push_back(std::move(result.history));
  }
  return std::make_unique<feed_forward_net>(std::move(result.model));
}

std::unique_ptr<cell_trainer> make_cell_trainer(model_kind kind, const tree_hyperparams& dct,
                                                const forest_hyperparams& rf, const rtree* tree,
                                                const incidence_matrix* A, const nn_config& nn,
                                                const labeled_corpus* nn_validation) {
  switch (kind) {
    case model_kind::dct:
      return std::make_unique<dct_cell_trainer>(dct);
    case model_kind::rf:
      return std::make_unique<rf_cell_trainer>(rf);
    case model_kind::nn_bce: {
      nn_config cfg = nn;
      cfg.objective = nn_objective::bce;
      return std::make_unique<nn_cell_trainer>(tree, A, cfg, nn_validation);
    }
    case model_kind::nn_custom: {
      nn_config cfg = nn;
      cfg.objective = nn_objective::custom;
      return std::make_unique<nn_cell_trainer>(tree, A, cfg, nn_validation);
    }
    case model_kind::oracle:
      break;
  }
  throw error("make_cell_trainer: unsupported model kind");
}

}  // namespace airtree
