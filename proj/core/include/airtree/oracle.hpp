#pragma once

#include <array>
#include <map>

#include "airtree/model.hpp"
#include "airtree/rtree.hpp"
#include "airtree/workload.hpp"

namespace airtree {

/// Predicts by asking the live tree for the true leaves of the query.
/// Unlike oracle_model it stays exact across mutations, which makes it the
/// instrument for correctness checks of the hybrid machinery itself.
class live_oracle_model : public multilabel_model {
 public:
  explicit live_oracle_model(const rtree* tree) : tree_(tree) {
    if (tree_ == nullptr) throw error("live_oracle_model: null tree");
  }

  model_kind kind() const override { return model_kind::oracle; }
  std::uint32_t label_count() const override { return tree_->leaf_count(); }
  std::vector<std::uint32_t> predict(const rect& query, double) const override {
    return tree_->range_search(query).true_leaf_ids;
  }
  void save_body(binary_writer&) const override {
    throw error("oracle predictors are not persistable");
  }

 private:
  const rtree* tree_;
};

/// Exact-truth predictor: answers profiled query rectangles with their true
/// leaf ids (anything else predicts nothing, which triggers the fallback).
/// Used for the optimality experiments; not persistable.
class oracle_model : public multilabel_model {
 public:
  static oracle_model from_profiles(const std::vector<query_profile>& profiles,
                                    std::uint32_t label_count, std::uint64_t assignment_digest);

  model_kind kind() const override { return model_kind::oracle; }
  std::uint32_t label_count() const override { return label_count_; }
  std::vector<std::uint32_t> predict(const rect& query, double cutoff) const override;
  void save_body(binary_writer&) const override {
    throw error("oracle predictors are not persistable");
  }

 private:
  using key = std::array<std::uint64_t, 4>;
  static key key_of(const rect& q);

  std::uint32_t label_count_ = 0;
  std::map<key, std::vector<std::uint32_t>> truth_;
};

/// Always-wrong predictor: answers every profiled query with a non-empty
/// set of leaves disjoint from its true set (or nothing when every leaf is
/// true). Exercises the fallback-completeness guarantee.
class adversarial_model : public multilabel_model {
 public:
  static adversarial_model from_profiles(const std::vector<query_profile>& profiles,
                                         std::uint32_t label_count,
                                         std::uint64_t assignment_digest);

  model_kind kind() const override { return model_kind::oracle; }
  std::uint32_t label_count() const override { return label_count_; }
  std::vector<std::uint32_t> predict(const rect& query, double cutoff) const override;
  void save_body(binary_writer&) const override {
    throw error("adversarial predictors are not persistable");
  }

 private:
  using key = std::array<std::uint64_t, 4>;
  static key key_of(const rect& q);

  std::uint32_t label_count_ = 0;
  std::map<key, std::vector<std::uint32_t>> wrong_;
};

}  // namespace airtree
