#include "airtree/model.hpp"

#include "airtree/nn.hpp"
#include "airtree/tree_classifiers.hpp"
#include "airtree/util.hpp"

namespace airtree {

namespace {
constexpr std::string_view k_model_magic = "airtree-model";
constexpr std::uint32_t k_model_version = 1;
}  // namespace

std::string model_kind_name(model_kind k) {
  switch (k) {
    case model_kind::dct: return "dct";
    case model_kind::rf: return "rf";
    case model_kind::nn_bce: return "nn_bce";
    case model_kind::nn_custom: return "nn_custom";
    case model_kind::oracle: return "oracle";
  }
  throw error("unknown model kind");
}

model_kind model_kind_from_name(const std::string& name) {
  if (name == "dct") return model_kind::dct;
  if (name == "rf") return model_kind::rf;
  if (name == "nn_bce") return model_kind::nn_bce;
  if (name == "nn_custom") return model_kind::nn_custom;
  if (name == "oracle") return model_kind::oracle;
  throw error("unknown model kind: " + name);
}

bool model_kind_is_nn(model_kind k) {
  return k == model_kind::nn_bce || k == model_kind::nn_custom;
}

std::vector<unsigned char> serialize_model(const multilabel_model& model) {
  binary_writer w;
  w.str(std::string(k_model_magic));
  w.u32(k_model_version);
  w.u8(static_cast<std::uint8_t>(model.kind()));
  w.u32(4);  // feature dimension
  w.u32(model.label_count());
  w.u64(model.corpus_digest);
  w.u64(model.assignment_digest);
  model.save_body(w);
  return w.take();
}

std::unique_ptr<multilabel_model> deserialize_model(const std::vector<unsigned char>& bytes) {
  binary_reader r(bytes);
  if (r.str() != k_model_magic) throw io_error("model file: bad magic");
  if (r.u32() != k_model_version) throw io_error("model file: unsupported version");
  const auto kind = static_cast<model_kind>(r.u8());
  const std::uint32_t feature_dim = r.u32();
  if (feature_dim != 4) throw io_error("model file: unexpected feature dimension");
  const std::uint32_t label_count = r.u32();
  const std::uint64_t corpus_digest = r.u64();
  const std::uint64_t assignment_digest = r.u64();

  std::unique_ptr<multilabel_model> model;
  switch (kind) {
    case model_kind::dct: {
      auto m = std::make_unique<decision_tree>(decision_tree::load_body(r));
      model = std::move(m);
      break;
    }
    case model_kind::rf: {
      auto m = std::make_unique<random_forest>(random_forest::load_body(r));
      model = std::move(m);
      break;
    }
    case model_kind::nn_bce:
    case model_kind::nn_custom: {
      auto m = std::make_unique<feed_forward_net>(feed_forward_net::load_body(r));
      model = std::move(m);
      break;
    }
    case model_kind::oracle:
      throw io_error("model file: oracle predictors are not persistable");
  }
  model->corpus_digest = corpus_digest;
  model->assignment_digest = assignment_digest;
  if (model->label_count() != label_count) throw io_error("model file: label count mismatch");
  return model;
}

}  // namespace airtree
