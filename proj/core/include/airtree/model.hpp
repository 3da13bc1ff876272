#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "airtree/binary_io.hpp"
#include "airtree/geometry.hpp"

namespace airtree {

enum class model_kind : std::uint8_t {
  dct = 0,
  rf = 1,
  nn_bce = 2,
  nn_custom = 3,
  oracle = 4,
};

std::string model_kind_name(model_kind k);
model_kind model_kind_from_name(const std::string& name);
bool model_kind_is_nn(model_kind k);

/// Anything that maps a query rectangle to a set of predicted leaf ids.
class multilabel_model {
 public:
  virtual ~multilabel_model() = default;

  virtual model_kind kind() const = 0;
  virtual std::uint32_t label_count() const = 0;

  /// Labels whose (averaged) positive score reaches the cutoff. A score of
  /// zero never qualifies, so cutoff 0 yields exactly the labels the model
  /// has ever seen positive on the reached region.
  virtual std::vector<std::uint32_t> predict(const rect& query, double cutoff) const = 0;

  virtual void save_body(binary_writer& w) const = 0;

  std::uint64_t corpus_digest = 0;
  std::uint64_t assignment_digest = 0;
};

/// Full model file: versioned header (kind, feature dim, label count,
/// training digests) followed by the kind-specific body.
std::vector<unsigned char> serialize_model(const multilabel_model& model);
std::unique_ptr<multilabel_model> deserialize_model(const std::vector<unsigned char>& bytes);

}  // namespace airtree
