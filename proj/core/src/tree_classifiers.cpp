#include "airtree/tree_classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace airtree {

namespace {

struct split_choice {
  int feature = -1;
  double threshold = 0.0;
  double score = std::numeric_limits<double>::infinity();
};

struct fit_scratch {
  std::vector<std::uint32_t> all_counts;
  std::vector<std::uint32_t> left_counts;
  std::vector<std::uint32_t> touched;
  std::vector<std::size_t> sorted;
};

bool node_is_pure(const labeled_corpus& corpus, const std::vector<std::size_t>& idx) {
  const auto& first = corpus.examples[idx.front()].labels;
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (corpus.examples[idx[i]].labels != first) return false;
  }
  return true;
}

std::vector<int> pick_features(double fraction, rng* r) {
  std::vector<int> all{0, 1, 2, 3};
  if (fraction >= 1.0 || r == nullptr) return all;
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * 4.0)));
  std::vector<int> chosen;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t pick = r->index(all.size());
    chosen.push_back(all[pick]);
    all.erase(all.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

decision_tree decision_tree::fit(const labeled_corpus& corpus,
                                 const std::vector<std::size_t>& example_indices,
                                 const tree_hyperparams& hyper, double feature_subsample,
                                 rng* feature_rng) {
  if (example_indices.empty()) throw error("decision_tree: empty example list");
  decision_tree model;
  model.label_count_ = corpus.label_count;
  model.hyper_ = hyper;
  model.corpus_digest = corpus.digest;

  fit_scratch scratch;
  scratch.all_counts.assign(corpus.label_count, 0);
  scratch.left_counts.assign(corpus.label_count, 0);

  const std::uint32_t msl = std::max<std::uint32_t>(1, hyper.min_samples_leaf);

  const auto emit_leaf = [&](const std::vector<std::size_t>& idx) -> std::uint32_t {
    scratch.touched.clear();
    for (const std::size_t i : idx) {
      for (const std::uint32_t l : corpus.examples[i].labels) {
        if (scratch.all_counts[l]++ == 0) scratch.touched.push_back(l);
      }
    }
    std::sort(scratch.touched.begin(), scratch.touched.end());
    tnode leaf;
    leaf.dist_begin = static_cast<std::uint32_t>(model.dists_.size());
    leaf.dist_count = static_cast<std::uint32_t>(scratch.touched.size());
    const double n = static_cast<double>(idx.size());
    for (const std::uint32_t l : scratch.touched) {
      model.dists_.emplace_back(l, static_cast<double>(scratch.all_counts[l]) / n);
      scratch.all_counts[l] = 0;
    }
    model.nodes_.push_back(leaf);
    return static_cast<std::uint32_t>(model.nodes_.size() - 1);
  };

  const auto find_split = [&](const std::vector<std::size_t>& idx) -> split_choice {
    const std::size_t n = idx.size();
    split_choice best;
    scratch.touched.clear();
    double t1_all = 0.0, t2_all = 0.0;
    for (const std::size_t i : idx) {
      for (const std::uint32_t l : corpus.examples[i].labels) {
        if (scratch.all_counts[l]++ == 0) scratch.touched.push_back(l);
      }
    }
    for (const std::uint32_t l : scratch.touched) {
      const double c = scratch.all_counts[l];
      t1_all += c;
      t2_all += c * c;
    }

    for (const int f : pick_features(feature_subsample, feature_rng)) {
      scratch.sorted = idx;
      std::sort(scratch.sorted.begin(), scratch.sorted.end(),
                [&](std::size_t a, std::size_t b) {
                  const double va = corpus.examples[a].features[static_cast<std::size_t>(f)];
                  const double vb = corpus.examples[b].features[static_cast<std::size_t>(f)];
                  return va != vb ? va < vb : a < b;
                });
      for (const std::uint32_t l : scratch.touched) scratch.left_counts[l] = 0;
      double t1_left = 0.0, t2_left = 0.0, t2_right = t2_all;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto& ex = corpus.examples[scratch.sorted[i]];
        for (const std::uint32_t l : ex.labels) {
          const double cl = scratch.left_counts[l];
          const double cr = static_cast<double>(scratch.all_counts[l]) - cl;
          t2_left += 2.0 * cl + 1.0;
          t2_right += -2.0 * cr + 1.0;
          ++scratch.left_counts[l];
          ++t1_left;
        }
        const double v = ex.features[static_cast<std::size_t>(f)];
        const double v_next =
            corpus.examples[scratch.sorted[i + 1]].features[static_cast<std::size_t>(f)];
        if (v == v_next) continue;
        const std::size_t n_left = i + 1;
        const std::size_t n_right = n - n_left;
        if (n_left < msl || n_right < msl) continue;
        double thr = v + (v_next - v) / 2.0;
        if (!(thr > v)) thr = v_next;
        // Weighted mean per-label Gini, with constant factors dropped.
        const double score = (t1_left - t2_left / static_cast<double>(n_left)) +
                             ((t1_all - t1_left) - t2_right / static_cast<double>(n_right));
        if (score < best.score) {
          best.score = score;
          best.feature = f;
          best.threshold = thr;
        }
      }
    }
    for (const std::uint32_t l : scratch.touched) scratch.all_counts[l] = 0;
    return best;
  };

  const auto build = [&](auto&& self, std::vector<std::size_t>& idx,
                         std::uint32_t depth) -> std::uint32_t {
    const bool depth_capped = hyper.max_depth != 0 && depth >= hyper.max_depth;
    if (idx.size() < 2 * msl || depth_capped || node_is_pure(corpus, idx)) return emit_leaf(idx);
    const split_choice choice = find_split(idx);
    if (choice.feature < 0) return emit_leaf(idx);

    std::vector<std::size_t> left, right;
    for (const std::size_t i : idx) {
      const double v = corpus.examples[i].features[static_cast<std::size_t>(choice.feature)];
      (v < choice.threshold ? left : right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();

    tnode internal;
    internal.feature = choice.feature;
    internal.threshold = choice.threshold;
    model.nodes_.push_back(internal);
    const auto self_id = static_cast<std::uint32_t>(model.nodes_.size() - 1);
    const std::uint32_t l = self(self, left, depth + 1);
    const std::uint32_t r = self(self, right, depth + 1);
    model.nodes_[self_id].left = l;
    model.nodes_[self_id].right = r;
    return self_id;
  };

  std::vector<std::size_t> idx = example_indices;
  build(build, idx, 0);
  return model;
}

std::uint32_t decision_tree::route_node(const std::array<double, 4>& f) const {
  std::uint32_t n = 0;
  while (nodes_[n].feature >= 0) {
    const double v = f[static_cast<std::size_t>(nodes_[n].feature)];
    n = v < nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
  }
  return n;
}

std::vector<std::pair<std::uint32_t, double>> decision_tree::route(const rect& query) const {
  const std::array<double, 4> f{query.x_min, query.y_min, query.x_max, query.y_max};
  const tnode& leaf = nodes_[route_node(f)];
  return {dists_.begin() + leaf.dist_begin, dists_.begin() + leaf.dist_begin + leaf.dist_count};
}

std::vector<std::uint32_t> decision_tree::predict(const rect& query, double cutoff) const {
  std::vector<std::uint32_t> out;
  for (const auto& [label, frac] : route(query)) {
    if (frac > 0.0 && frac >= cutoff) out.push_back(label);
  }
  return out;
}

std::uint32_t decision_tree::depth() const {
  const auto walk = [&](auto&& self, std::uint32_t n) -> std::uint32_t {
    if (nodes_[n].feature < 0) return 0;
    return 1 + std::max(self(self, nodes_[n].left), self(self, nodes_[n].right));
  };
  return nodes_.empty() ? 0 : walk(walk, 0);
}

void decision_tree::save_body(binary_writer& w) const {
  w.u32(label_count_);
  w.u32(hyper_.max_depth);
  w.u32(hyper_.min_samples_leaf);
  w.u32(static_cast<std::uint32_t>(nodes_.size()));
  for (const auto& n : nodes_) {
    w.i32(n.feature);
    w.f64(n.threshold);
    w.u32(n.left);
    w.u32(n.right);
    w.u32(n.dist_begin);
    w.u32(n.dist_count);
  }
  w.u32(static_cast<std::uint32_t>(dists_.size()));
  for (const auto& [label, frac] : dists_) {
    w.u32(label);
    w.f64(frac);
  }
}

decision_tree decision_tree::load_body(binary_reader& r) {
  decision_tree model;
  model.label_count_ = r.u32();
  model.hyper_.max_depth = r.u32();
  model.hyper_.min_samples_leaf = r.u32();
  model.nodes_.resize(r.u32());
  for (auto& n : model.nodes_) {
    n.feature = r.i32();
    n.threshold = r.f64();
    n.left = r.u32();
    n.right = r.u32();
    n.dist_begin = r.u32();
    n.dist_count = r.u32();
  }
  model.dists_.resize(r.u32());
  for (auto& [label, frac] : model.dists_) {
    label = r.u32();
    frac = r.f64();
  }
  return model;
}

random_forest random_forest::fit(const labeled_corpus& corpus,
                                 const std::vector<std::size_t>& example_indices,
                                 const forest_hyperparams& hyper, std::uint64_t seed) {
  if (example_indices.empty()) throw error("random_forest: empty example list");
  if (hyper.n_estimators == 0) throw error("random_forest: need at least one estimator");
  random_forest model;
  model.label_count_ = corpus.label_count;
  model.hyper_ = hyper;
  model.corpus_digest = corpus.digest;
  const std::size_t n = example_indices.size();
  for (std::uint32_t t = 0; t < hyper.n_estimators; ++t) {
    rng tree_rng(rng::derive_seed(seed, t));
    std::vector<std::size_t> bootstrap(n);
    for (auto& i : bootstrap) i = example_indices[tree_rng.index(n)];
    model.trees_.push_back(
        decision_tree::fit(corpus, bootstrap, hyper.tree, hyper.feature_subsample, &tree_rng));
  }
  return model;
}

std::vector<std::pair<std::uint32_t, double>> random_forest::scores(const rect& query) const {
  std::map<std::uint32_t, double> sums;
  for (const auto& tree : trees_) {
    for (const auto& [label, frac] : tree.route(query)) sums[label] += frac;
  }
  std::vector<std::pair<std::uint32_t, double>> out;
  out.reserve(sums.size());
  const double k = static_cast<double>(trees_.size());
  for (const auto& [label, sum] : sums) out.emplace_back(label, sum / k);
  return out;
}

std::vector<std::uint32_t> random_forest::predict(const rect& query, double cutoff) const {
  std::vector<std::uint32_t> out;
  for (const auto& [label, score] : scores(query)) {
    if (score > 0.0 && score >= cutoff) out.push_back(label);
  }
  return out;
}

void random_forest::save_body(binary_writer& w) const {
  if (trees_.empty()) throw error("serialize: empty forest");
  w.u32(label_count_);
  w.u32(hyper_.n_estimators);
  w.f64(hyper_.feature_subsample);
  w.u32(hyper_.tree.max_depth);
  w.u32(hyper_.tree.min_samples_leaf);
  w.u32(static_cast<std::uint32_t>(trees_.size()));
  for (const auto& tree : trees_) tree.save_body(w);
}

random_forest random_forest::load_body(binary_reader& r) {
  random_forest model;
  model.label_count_ = r.u32();
  model.hyper_.n_estimators = r.u32();
  model.hyper_.feature_subsample = r.f64();
  model.hyper_.tree.max_depth = r.u32();
  model.hyper_.tree.min_samples_leaf = r.u32();
  const std::uint32_t count = r.u32();
  model.trees_.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) model.trees_.push_back(decision_tree::load_body(r));
  return model;
}

namespace {

labeled_corpus router_corpus(const std::vector<query_profile>& profiles,
                             const std::vector<std::size_t>& indices, double tau,
                             std::uint64_t assignment_digest) {
  labeled_corpus corpus;
  corpus.label_count = 1;
  fnv1a64 h;
  h.update_value(assignment_digest);
  h.update_value(tau);
  for (const std::size_t i : indices) {
    const auto& p = profiles[i];
    labeled_example ex;
    ex.features = {p.query.x_min, p.query.y_min, p.query.x_max, p.query.y_max};
    if (binary_router::high_overlap_label(p.alpha, tau)) ex.labels = {0};
    ex.profile_index = i;
    for (const double f : ex.features) h.update_value(f);
    h.update_value(static_cast<std::uint8_t>(ex.labels.empty() ? 0 : 1));
    corpus.examples.push_back(std::move(ex));
  }
  corpus.digest = h.digest();
  return corpus;
}

}  // namespace

binary_router binary_router::fit(const std::vector<query_profile>& profiles, double tau,
                                 const forest_hyperparams& hyper, std::uint64_t seed,
                                 std::uint64_t assignment_digest) {
  if (tau <= 0.0 || tau >= 1.0) throw error("binary_router: tau must be in (0, 1)");
  std::size_t high = 0, low = 0;
  for (const auto& p : profiles) (high_overlap_label(p.alpha, tau) ? high : low)++;
  if (high == 0 || low == 0)
    throw error("binary_router: training corpus contains a single class; widen the workload so "
                "both high- and low-overlap queries are present");

  std::vector<std::size_t> order(profiles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng r(seed);
  r.shuffle(order);
  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(order.size()))), 1,
      order.size() - 1);
  const std::vector<std::size_t> train(order.begin(),
                                       order.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                                      order.end());

  binary_router router;
  router.tau_ = tau;
  router.assignment_digest_ = assignment_digest;
  const labeled_corpus corpus = router_corpus(profiles, train, tau, assignment_digest);
  std::vector<std::size_t> all(corpus.examples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  router.forest_ = random_forest::fit(corpus, all, hyper, rng::derive_seed(seed, 0x5eed));
  router.forest_.assignment_digest = assignment_digest;

  std::size_t correct = 0;
  for (const std::size_t i : test) {
    const bool truth = high_overlap_label(profiles[i].alpha, tau);
    if (router.is_high_overlap(profiles[i].query) == truth) ++correct;
  }
  router.test_accuracy_ =
      test.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(test.size());
  return router;
}

double binary_router::probability_high(const rect& query) const {
  for (const auto& [label, score] : forest_.scores(query)) {
    if (label == 0) return score;
  }
  return 0.0;
}

std::vector<unsigned char> binary_router::serialize() const {
  binary_writer w;
  w.str("airtree-router");
  w.u32(1);
  w.f64(tau_);
  w.f64(decision_cutoff_);
  w.f64(test_accuracy_);
  w.u64(assignment_digest_);
  const auto forest_bytes = serialize_model(forest_);
  w.u32(static_cast<std::uint32_t>(forest_bytes.size()));
  for (const unsigned char b : forest_bytes) w.u8(b);
  return w.take();
}

binary_router binary_router::deserialize(const std::vector<unsigned char>& bytes) {
  binary_reader r(bytes);
  if (r.str() != "airtree-router") throw io_error("router file: bad magic");
  if (r.u32() != 1) throw io_error("router file: unsupported version");
  binary_router router;
  router.tau_ = r.f64();
  router.decision_cutoff_ = r.f64();
  router.test_accuracy_ = r.f64();
  router.assignment_digest_ = r.u64();
  std::vector<unsigned char> forest_bytes(r.u32());
  for (auto& b : forest_bytes) b = r.u8();
  auto model = deserialize_model(forest_bytes);
  auto* forest = dynamic_cast<random_forest*>(model.get());
  if (forest == nullptr) throw io_error("router file: embedded model is not a forest");
  router.forest_ = std::move(*forest);
  return router;
}

}  // namespace airtree
