#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "airtree/model.hpp"
#include "airtree/rtree.hpp"
#include "airtree/util.hpp"
#include "airtree/workload.hpp"

namespace airtree {

/// Clamp applied inside every log term of both losses.
inline constexpr double k_loss_eps = 1e-7;

/// Sparse m x n object/leaf incidence: row i holds a single 1 in the column
/// of the leaf storing object i. Rows are ordered by oid.
struct incidence_matrix {
  std::uint32_t object_count = 0;  ///< m
  std::uint32_t leaf_count = 0;    ///< n
  std::vector<std::uint32_t> leaf_of_row;
  std::vector<std::uint32_t> oid_of_row;
  std::vector<point> point_of_row;
  std::vector<std::vector<std::uint32_t>> rows_of_leaf;
  std::unordered_map<std::uint32_t, std::uint32_t> row_of_oid;

  /// b = A x: per-object probability that the object's leaf is retrieved.
  std::vector<double> apply(const std::vector<double>& leaf_probs) const;
};

/// Live objects only; logical deletes are excluded.
incidence_matrix build_incidence(const rtree& tree);

/// The object rows a query's custom loss is computed over, with the
/// per-object ground truth (inside the query rectangle or not).
struct object_support {
  std::vector<std::uint32_t> rows;
  std::vector<std::uint8_t> in_query;
};

/// Support = objects living in the leaves the R-tree visits for `q`
/// (the VN set), or all m objects when full_object_support is set.
object_support make_support(const rtree& tree, const incidence_matrix& A, const rect& q,
                            bool full_object_support);

/// Mean over labels of the clamped binary cross entropy.
double loss_bce(const std::vector<double>& predicted, const std::vector<double>& target);

/// dL/dp for loss_bce; zero where the clamp is active.
std::vector<double> loss_bce_grad(const std::vector<double>& predicted,
                                  const std::vector<double>& target);

/// Object-weighted loss: push the prediction through A (b = A x) and take
/// the clamped BCE between b and the object ground truth, averaged over the
/// support rows. Empty support yields zero loss.
double loss_custom(const std::vector<double>& predicted, const object_support& support,
                   const incidence_matrix& A);

/// dL/dx for loss_custom, i.e. A^T applied to the object-level gradient.
std::vector<double> loss_custom_grad(const std::vector<double>& predicted,
                                     const object_support& support, const incidence_matrix& A);

enum class nn_objective : std::uint8_t { bce = 0, custom = 1 };

struct nn_config {
  std::vector<std::uint32_t> hidden{64, 64, 64};
  double learning_rate = 1e-3;
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 32;
  std::uint64_t seed = 1;
  nn_objective objective = nn_objective::bce;
  bool full_object_support = false;
};

/// 4 -> hidden... -> L perceptron, rectifier on hidden layers and sigmoid
/// on the output.
class feed_forward_net : public multilabel_model {
 public:
  feed_forward_net() = default;

  static feed_forward_net make(std::uint32_t input_dim, const std::vector<std::uint32_t>& hidden,
                               std::uint32_t output_dim, std::uint64_t seed);

  model_kind kind() const override {
    return objective_ == nn_objective::custom ? model_kind::nn_custom : model_kind::nn_bce;
  }
  std::uint32_t label_count() const override { return output_dim_; }
  std::vector<std::uint32_t> predict(const rect& query, double cutoff) const override;
  void save_body(binary_writer& w) const override;
  static feed_forward_net load_body(binary_reader& r);

  std::vector<double> forward(const std::array<double, 4>& features) const;

  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& params);
  std::size_t parameter_count() const;

  void set_objective(nn_objective o) { objective_ = o; }
  nn_objective objective() const { return objective_; }
  void set_training_config(const nn_config& c) { config_echo_ = c; }
  const nn_config& training_config() const { return config_echo_; }

 private:
  friend struct nn_trainer;

  struct layer {
    std::uint32_t in = 0;
    std::uint32_t out = 0;
    std::vector<double> weights;  ///< row-major, out x in
    std::vector<double> bias;
  };

  std::uint32_t input_dim_ = 0;
  std::uint32_t output_dim_ = 0;
  nn_objective objective_ = nn_objective::bce;
  std::vector<layer> layers_;
  nn_config config_echo_;
};

struct nn_train_history {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;  ///< empty when no validation set given
};

struct nn_train_result {
  feed_forward_net model;
  nn_train_history history;
};

/// Per-example loss/gradient target: sparse positive labels for the BCE
/// objective, an object support for the custom one.
struct nn_target {
  const std::vector<std::uint32_t>* labels = nullptr;
  const object_support* support = nullptr;
};

/// Mini-batch training with adaptive moment estimation (beta1 0.9,
/// beta2 0.999, eps 1e-8). Deterministic per seed. Throws on divergence,
/// naming the epoch.
nn_train_result train_nn(const labeled_corpus& train,
                         const std::vector<object_support>& train_supports,
                         const labeled_corpus* validation,
                         const std::vector<object_support>* validation_supports,
                         const incidence_matrix* A, const nn_config& config);

std::vector<object_support> build_supports(const rtree& tree, const incidence_matrix& A,
                                           const labeled_corpus& corpus,
                                           bool full_object_support);

/// Test/diagnostic hooks: loss and full parameter gradient of one example.
double nn_example_loss(const feed_forward_net& net, const std::array<double, 4>& features,
                       const nn_target& target, const incidence_matrix* A);
std::vector<double> nn_example_grad(const feed_forward_net& net,
                                    const std::array<double, 4>& features, const nn_target& target,
                                    const incidence_matrix* A);

}  // namespace airtree
