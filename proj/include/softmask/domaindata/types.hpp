#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace softmask::domaindata {

/// One image of the multi-domain corpus.
///
/// `image` is a float32 [3, H, W] tensor with values in [-1, 1]; `mask`,
/// when present, is a float32 [H, W] tensor with values in [0, 1]. Samples
/// are treated as immutable once placed in a Corpus.
struct ImageSample {
  torch::Tensor image;
  int identity = 0;
  int camera = 0;
  int domain = 0;
  int sequence = 0;
  std::optional<torch::Tensor> mask;

  std::int64_t height() const { return image.size(1); }
  std::int64_t width() const { return image.size(2); }
  /// `<id>_c<camera>_d<domain>_<seq>` with four-digit id and sequence.
  std::string stem() const;
};

/// Target of a generator call: translate to domain k, or produce a soft-mask image.
struct IndicatorTarget {
  enum class Kind { kOneHot, kUniform };

  Kind kind = Kind::kUniform;
  int domain = -1;

  static IndicatorTarget one_hot(int k) { return {Kind::kOneHot, k}; }
  static IndicatorTarget uniform() { return {Kind::kUniform, -1}; }

  bool is_uniform() const { return kind == Kind::kUniform; }
  bool operator==(const IndicatorTarget&) const = default;
};

std::string to_string(const IndicatorTarget& target);

/// K-channel conditioning tensor concatenated to generator inputs.
struct DomainIndicator {
  torch::Tensor tensor;  // [K, H, W]
  IndicatorTarget target;

  int num_domains() const { return static_cast<int>(tensor.size(0)); }
};

/// Ordered, immutable collection of samples over K domains with lookup
/// tables by domain and identity.
class Corpus {
 public:
  Corpus() = default;
  /// Validates that every sample has the same H x W, masks match their
  /// images, domains lie in [0, K), and every domain is populated.
  Corpus(std::vector<ImageSample> samples, int num_domains);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  int num_domains() const { return num_domains_; }
  const ImageSample& operator[](std::size_t i) const { return samples_.at(i); }
  const std::vector<ImageSample>& samples() const { return samples_; }

  const std::vector<std::size_t>& domain_indices(int domain) const;
  const std::vector<std::size_t>& identity_indices(int identity) const;
  std::vector<int> identities() const;
  bool all_masked() const;

  std::int64_t height() const { return samples_.empty() ? 0 : samples_.front().height(); }
  std::int64_t width() const { return samples_.empty() ? 0 : samples_.front().width(); }

 private:
  std::vector<ImageSample> samples_;
  int num_domains_ = 0;
  std::vector<std::vector<std::size_t>> by_domain_;
  std::map<int, std::vector<std::size_t>> by_identity_;
};

/// Stacks images of the selected samples into [B, 3, H, W].
torch::Tensor stack_images(const Corpus& corpus, std::span<const std::size_t> indices);
/// Stacks masks into [B, H, W]; throws DataError when a sample has none.
torch::Tensor stack_masks(const Corpus& corpus, std::span<const std::size_t> indices);
/// Domain labels as an int64 tensor [B].
torch::Tensor stack_domains(const Corpus& corpus, std::span<const std::size_t> indices);

}  // namespace softmask::domaindata
