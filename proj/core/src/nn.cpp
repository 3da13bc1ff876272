#include "airtree/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace airtree {

std::vector<double> incidence_matrix::apply(const std::vector<double>& leaf_probs) const {
  if (leaf_probs.size() != leaf_count)
    throw error("incidence apply: vector length does not match leaf count");
  std::vector<double> b(object_count);
  for (std::uint32_t row = 0; row < object_count; ++row) b[row] = leaf_probs[leaf_of_row[row]];
  return b;
}

incidence_matrix build_incidence(const rtree& tree) {
  if (!tree.ids_assigned()) throw error("build_incidence: leaf ids not assigned");
  incidence_matrix A;
  A.leaf_count = tree.leaf_count();
  A.rows_of_leaf.resize(A.leaf_count);

  std::vector<std::pair<std::uint32_t, std::pair<point, leaf_id>>> items;
  for (leaf_id id = 0; id < A.leaf_count; ++id) {
    for (const point& p : tree.leaf_own_entries(id)) {
      items.emplace_back(p.oid, std::make_pair(p, id));
    }
  }
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  A.object_count = static_cast<std::uint32_t>(items.size());
  A.leaf_of_row.reserve(items.size());
  A.oid_of_row.reserve(items.size());
  A.point_of_row.reserve(items.size());
  for (std::uint32_t row = 0; row < items.size(); ++row) {
    const auto& [oid, rest] = items[row];
    A.oid_of_row.push_back(oid);
    A.point_of_row.push_back(rest.first);
    A.leaf_of_row.push_back(rest.second);
    A.rows_of_leaf[rest.second].push_back(row);
    A.row_of_oid[oid] = row;
  }
  return A;
}

object_support make_support(const rtree& tree, const incidence_matrix& A, const rect& q,
                            bool full_object_support) {
  object_support s;
  if (full_object_support) {
    s.rows.resize(A.object_count);
    for (std::uint32_t row = 0; row < A.object_count; ++row) s.rows[row] = row;
  } else {
    const search_trace trace = tree.range_search(q);
    for (const leaf_id id : trace.visited_leaf_ids) {
      if (id >= A.leaf_count) continue;
      for (const std::uint32_t row : A.rows_of_leaf[id]) s.rows.push_back(row);
    }
    std::sort(s.rows.begin(), s.rows.end());
  }
  s.in_query.reserve(s.rows.size());
  for (const std::uint32_t row : s.rows) {
    s.in_query.push_back(q.contains(A.point_of_row[row]) ? 1 : 0);
  }
  return s;
}

namespace {

double clamp_prob(double p) { return std::clamp(p, k_loss_eps, 1.0 - k_loss_eps); }

double bce_term(double p, double t) {
  const double pc = clamp_prob(p);
  return -(t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc));
}

/// Derivative of bce_term with respect to the raw probability; zero inside
/// the clamped region so it matches what finite differences see.
double bce_term_grad(double p, double t) {
  if (p <= k_loss_eps || p >= 1.0 - k_loss_eps) return 0.0;
  return -t / p + (1.0 - t) / (1.0 - p);
}

}  // namespace

double loss_bce(const std::vector<double>& predicted, const std::vector<double>& target) {
  if (predicted.size() != target.size()) throw error("loss_bce: dimension mismatch");
  if (predicted.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += bce_term(predicted[i], target[i]);
  return sum / static_cast<double>(predicted.size());
}

std::vector<double> loss_bce_grad(const std::vector<double>& predicted,
                                  const std::vector<double>& target) {
  if (predicted.size() != target.size()) throw error("loss_bce: dimension mismatch");
  std::vector<double> grad(predicted.size(), 0.0);
  const double inv = predicted.empty() ? 0.0 : 1.0 / static_cast<double>(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    grad[i] = inv * bce_term_grad(predicted[i], target[i]);
  }
  return grad;
}

double loss_custom(const std::vector<double>& predicted, const object_support& support,
                   const incidence_matrix& A) {
  if (predicted.size() != A.leaf_count) throw error("loss_custom: prediction length != n");
  if (support.rows.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < support.rows.size(); ++k) {
    const std::uint32_t row = support.rows[k];
    const double b = predicted[A.leaf_of_row[row]];
    sum += bce_term(b, static_cast<double>(support.in_query[k]));
  }
  return sum / static_cast<double>(support.rows.size());
}

std::vector<double> loss_custom_grad(const std::vector<double>& predicted,
                                     const object_support& support, const incidence_matrix& A) {
  if (predicted.size() != A.leaf_count) throw error("loss_custom: prediction length != n");
  std::vector<double> grad(predicted.size(), 0.0);
  if (support.rows.empty()) return grad;
  const double inv = 1.0 / static_cast<double>(support.rows.size());
  for (std::size_t k = 0; k < support.rows.size(); ++k) {
    const std::uint32_t row = support.rows[k];
    const std::uint32_t leaf = A.leaf_of_row[row];
    const double b = predicted[leaf];
    grad[leaf] += inv * bce_term_grad(b, static_cast<double>(support.in_query[k]));
  }
  return grad;
}

feed_forward_net feed_forward_net::make(std::uint32_t input_dim,
                                        const std::vector<std::uint32_t>& hidden,
                                        std::uint32_t output_dim, std::uint64_t seed) {
  feed_forward_net net;
  net.input_dim_ = input_dim;
  net.output_dim_ = output_dim;
  rng r(seed);
  std::uint32_t prev = input_dim;
  std::vector<std::uint32_t> dims = hidden;
  dims.push_back(output_dim);
  for (const std::uint32_t width : dims) {
    layer l;
    l.in = prev;
    l.out = width;
    const double scale = 1.0 / std::sqrt(static_cast<double>(prev));
    l.weights.resize(static_cast<std::size_t>(width) * prev);
    l.bias.resize(width);
    for (auto& w : l.weights) w = r.uniform(-scale, scale);
    for (auto& b : l.bias) b = r.uniform(-scale, scale);
    net.layers_.push_back(std::move(l));
    prev = width;
  }
  return net;
}

std::vector<double> feed_forward_net::forward(const std::array<double, 4>& features) const {
  std::vector<double> a(features.begin(), features.end());
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const layer& l = layers_[k];
    std::vector<double> z(l.out);
    for (std::uint32_t o = 0; o < l.out; ++o) {
      double acc = l.bias[o];
      const double* w = l.weights.data() + static_cast<std::size_t>(o) * l.in;
      for (std::uint32_t i = 0; i < l.in; ++i) acc += w[i] * a[i];
      z[o] = acc;
    }
    const bool last = k + 1 == layers_.size();
    for (std::uint32_t o = 0; o < l.out; ++o) {
      z[o] = last ? 1.0 / (1.0 + std::exp(-z[o])) : std::max(0.0, z[o]);
    }
    a = std::move(z);
  }
  return a;
}

std::vector<std::uint32_t> feed_forward_net::predict(const rect& query, double cutoff) const {
  const std::array<double, 4> f{query.x_min, query.y_min, query.x_max, query.y_max};
  const std::vector<double> probs = forward(f);
  std::vector<std::uint32_t> out;
  for (std::uint32_t j = 0; j < probs.size(); ++j) {
    if (probs[j] >= cutoff) out.push_back(j);
  }
  return out;
}

std::vector<double> feed_forward_net::parameters() const {
  std::vector<double> out;
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void feed_forward_net::set_parameters(const std::vector<double>& params) {
  if (params.size() != parameter_count()) throw error("set_parameters: size mismatch");
  std::size_t pos = 0;
  for (auto& l : layers_) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), l.weights.size(),
                l.weights.begin());
    pos += l.weights.size();
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
}

std::size_t feed_forward_net::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

void feed_forward_net::save_body(binary_writer& w) const {
  w.u8(static_cast<std::uint8_t>(objective_));
  w.u32(input_dim_);
  w.u32(output_dim_);
  w.u32(static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    w.u32(l.in);
    w.u32(l.out);
    for (const double v : l.weights) w.f64(v);
    for (const double v : l.bias) w.f64(v);
  }
  // Training-config echo.
  w.f64(config_echo_.learning_rate);
  w.u32(config_echo_.epochs);
  w.u32(config_echo_.batch_size);
  w.u64(config_echo_.seed);
  w.u8(config_echo_.full_object_support ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(config_echo_.hidden.size()));
  for (const std::uint32_t h : config_echo_.hidden) w.u32(h);
}

feed_forward_net feed_forward_net::load_body(binary_reader& r) {
  feed_forward_net net;
  net.objective_ = static_cast<nn_objective>(r.u8());
  net.input_dim_ = r.u32();
  net.output_dim_ = r.u32();
  net.layers_.resize(r.u32());
  for (auto& l : net.layers_) {
    l.in = r.u32();
    l.out = r.u32();
    l.weights.resize(static_cast<std::size_t>(l.in) * l.out);
    l.bias.resize(l.out);
    for (auto& v : l.weights) v = r.f64();
    for (auto& v : l.bias) v = r.f64();
  }
  net.config_echo_.learning_rate = r.f64();
  net.config_echo_.epochs = r.u32();
  net.config_echo_.batch_size = r.u32();
  net.config_echo_.seed = r.u64();
  net.config_echo_.full_object_support = r.u8() != 0;
  net.config_echo_.hidden.resize(r.u32());
  for (auto& h : net.config_echo_.hidden) h = r.u32();
  net.config_echo_.objective = net.objective_;
  return net;
}

struct nn_trainer {
  feed_forward_net& net;

  struct cache {
    std::vector<std::vector<double>> pre;   ///< pre-activation per layer
    std::vector<std::vector<double>> post;  ///< post-activation per layer
  };

  std::vector<double> forward_cached(const std::array<double, 4>& features, cache& c) const {
    std::vector<double> a(features.begin(), features.end());
    c.pre.clear();
    c.post.clear();
    c.post.push_back(a);
    for (std::size_t k = 0; k < net.layers_.size(); ++k) {
      const auto& l = net.layers_[k];
      std::vector<double> z(l.out);
      for (std::uint32_t o = 0; o < l.out; ++o) {
        double acc = l.bias[o];
        const double* w = l.weights.data() + static_cast<std::size_t>(o) * l.in;
        for (std::uint32_t i = 0; i < l.in; ++i) acc += w[i] * a[i];
        z[o] = acc;
      }
      c.pre.push_back(z);
      const bool last = k + 1 == net.layers_.size();
      for (auto& v : z) v = last ? 1.0 / (1.0 + std::exp(-v)) : std::max(0.0, v);
      c.post.push_back(z);
      a = c.post.back();
    }
    return a;
  }

  double loss_of(const std::vector<double>& probs, const nn_target& target,
                 const incidence_matrix* A) const {
    if (target.support != nullptr) {
      return loss_custom(probs, *target.support, *A);
    }
    std::vector<double> dense(probs.size(), 0.0);
    for (const std::uint32_t l : *target.labels) dense[l] = 1.0;
    return loss_bce(probs, dense);
  }

  /// Backpropagates one example; adds parameter gradients into `grad`
  /// (layout matches feed_forward_net::parameters). Returns the loss.
  double accumulate(const std::array<double, 4>& features, const nn_target& target,
                    const incidence_matrix* A, std::vector<double>& grad) const {
    cache c;
    const std::vector<double> probs = forward_cached(features, c);
    const double loss = loss_of(probs, target, A);

    std::vector<double> dprob;
    if (target.support != nullptr) {
      dprob = loss_custom_grad(probs, *target.support, *A);
    } else {
      std::vector<double> dense(probs.size(), 0.0);
      for (const std::uint32_t l : *target.labels) dense[l] = 1.0;
      dprob = loss_bce_grad(probs, dense);
    }

    // Output layer: d/dz = d/dp * sigma'(z).
    std::vector<double> delta(dprob.size());
    for (std::size_t j = 0; j < dprob.size(); ++j) {
      const double p = probs[j];
      delta[j] = dprob[j] * p * (1.0 - p);
    }

    // Walk the layers backwards, accumulating gradients.
    std::vector<std::size_t> offsets(net.layers_.size());
    std::size_t pos = 0;
    for (std::size_t k = 0; k < net.layers_.size(); ++k) {
      offsets[k] = pos;
      pos += net.layers_[k].weights.size() + net.layers_[k].bias.size();
    }

    for (std::size_t k = net.layers_.size(); k-- > 0;) {
      const auto& l = net.layers_[k];
      const auto& input = c.post[k];
      double* gw = grad.data() + offsets[k];
      double* gb = gw + l.weights.size();
      for (std::uint32_t o = 0; o < l.out; ++o) {
        const double d = delta[o];
        double* row = gw + static_cast<std::size_t>(o) * l.in;
        for (std::uint32_t i = 0; i < l.in; ++i) row[i] += d * input[i];
        gb[o] += d;
      }
      if (k == 0) break;
      std::vector<double> prev_delta(l.in, 0.0);
      for (std::uint32_t o = 0; o < l.out; ++o) {
        const double d = delta[o];
        const double* row = l.weights.data() + static_cast<std::size_t>(o) * l.in;
        for (std::uint32_t i = 0; i < l.in; ++i) prev_delta[i] += d * row[i];
      }
      // Rectifier derivative on the previous layer's pre-activations.
      const auto& pre_prev = c.pre[k - 1];
      for (std::uint32_t i = 0; i < l.in; ++i) {
        if (pre_prev[i] <= 0.0) prev_delta[i] = 0.0;
      }
      delta = std::move(prev_delta);
    }
    return loss;
  }
};

double nn_example_loss(const feed_forward_net& net, const std::array<double, 4>& features,
                       const nn_target& target, const incidence_matrix* A) {
  nn_trainer t{const_cast<feed_forward_net&>(net)};
  nn_trainer::cache c;
  const auto probs = t.forward_cached(features, c);
  return t.loss_of(probs, target, A);
}

std::vector<double> nn_example_grad(const feed_forward_net& net,
                                    const std::array<double, 4>& features, const nn_target& target,
                                    const incidence_matrix* A) {
  nn_trainer t{const_cast<feed_forward_net&>(net)};
  std::vector<double> grad(net.parameter_count(), 0.0);
  t.accumulate(features, target, A, grad);
  return grad;
}

std::vector<object_support> build_supports(const rtree& tree, const incidence_matrix& A,
                                           const labeled_corpus& corpus,
                                           bool full_object_support) {
  std::vector<object_support> out;
  out.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) {
    const rect q{ex.features[0], ex.features[1], ex.features[2], ex.features[3]};
    out.push_back(make_support(tree, A, q, full_object_support));
  }
  return out;
}

nn_train_result train_nn(const labeled_corpus& train,
                         const std::vector<object_support>& train_supports,
                         const labeled_corpus* validation,
                         const std::vector<object_support>* validation_supports,
                         const incidence_matrix* A, const nn_config& config) {
  if (train.examples.empty()) throw error("train_nn: empty training set");
  const bool custom = config.objective == nn_objective::custom;
  if (custom && A == nullptr) throw error("train_nn: custom objective requires the incidence matrix");
  if (custom && train_supports.size() != train.examples.size())
    throw error("train_nn: missing object supports for the custom objective");

  nn_train_result result;
  result.model =
      feed_forward_net::make(4, config.hidden, train.label_count, config.seed);
  result.model.set_objective(config.objective);
  result.model.set_training_config(config);
  result.model.corpus_digest = train.digest;

  feed_forward_net& net = result.model;
  nn_trainer trainer{net};

  const std::size_t param_count = net.parameter_count();
  std::vector<double> params = net.parameters();
  std::vector<double> grad(param_count, 0.0);
  std::vector<double> m(param_count, 0.0);
  std::vector<double> v(param_count, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double beta1_t = 1.0, beta2_t = 1.0;

  const std::size_t n = train.examples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng shuffle_rng(rng::derive_seed(config.seed, 0x0bf));
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);

  const auto target_of = [&](const labeled_corpus& corpus,
                             const std::vector<object_support>* supports,
                             std::size_t i) -> nn_target {
    nn_target t;
    if (custom) {
      t.support = &(*supports)[i];
    } else {
      t.labels = &corpus.examples[i].labels;
    }
    return t;
  };

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        epoch_loss += trainer.accumulate(train.examples[i].features,
                                         target_of(train, &train_supports, i), A, grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      beta1_t *= beta1;
      beta2_t *= beta2;
      for (std::size_t p = 0; p < param_count; ++p) {
        const double g = grad[p] * inv;
        m[p] = beta1 * m[p] + (1.0 - beta1) * g;
        v[p] = beta2 * v[p] + (1.0 - beta2) * g * g;
        const double m_hat = m[p] / (1.0 - beta1_t);
        const double v_hat = v[p] / (1.0 - beta2_t);
        params[p] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + adam_eps);
      }
      net.set_parameters(params);
    }
    const double mean_loss = epoch_loss / static_cast<double>(n);
    bool params_finite = true;
    for (const double p : params) params_finite = params_finite && std::isfinite(p);
    if (!std::isfinite(mean_loss) || !params_finite) {
      std::ostringstream msg;
      msg << "train_nn: training diverged (non-finite "
          << (params_finite ? "loss" : "parameters") << ") at epoch " << epoch;
      throw error(msg.str());
    }
    result.history.train_loss.push_back(mean_loss);

    if (validation != nullptr && !validation->examples.empty()) {
      double val_loss = 0.0;
      for (std::size_t i = 0; i < validation->examples.size(); ++i) {
        val_loss += nn_example_loss(net, validation->examples[i].features,
                                    target_of(*validation, validation_supports, i), A);
      }
      result.history.validation_loss.push_back(
          val_loss / static_cast<double>(validation->examples.size()));
    }
  }
  return result;
}

}  // namespace airtree
