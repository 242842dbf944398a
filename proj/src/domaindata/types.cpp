#include "softmask/domaindata/types.hpp"

#include <cstdio>

#include "softmask/common/errors.hpp"

namespace softmask::domaindata {

std::string ImageSample::stem() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%04d_c%d_d%d_%04d", identity, camera, domain, sequence);
  return buf;
}

std::string to_string(const IndicatorTarget& target) {
  return target.is_uniform() ? std::string("uniform") : "one-hot(" + std::to_string(target.domain) + ")";
}

Corpus::Corpus(std::vector<ImageSample> samples, int num_domains)
    : samples_(std::move(samples)), num_domains_(num_domains) {
  if (num_domains_ < 1) throw ArgumentError("corpus: K must be >= 1");
  by_domain_.assign(num_domains_, {});
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (!s.image.defined() || s.image.dim() != 3 || s.image.size(0) != 3)
      throw DataError("corpus: sample " + s.stem() + " is not a [3, H, W] image");
    if (s.image.size(1) != samples_.front().height() || s.image.size(2) != samples_.front().width())
      throw DataError("corpus: sample " + s.stem() + " differs in size from the first sample");
    if (s.mask && (s.mask->dim() != 2 || s.mask->size(0) != s.height() || s.mask->size(1) != s.width()))
      throw DataError("corpus: mask of " + s.stem() + " does not match its image");
    if (s.domain < 0 || s.domain >= num_domains_)
      throw DataError("corpus: sample " + s.stem() + " has domain outside [0, " + std::to_string(num_domains_) + ")");
    if (s.identity < 0 || s.camera < 0) throw DataError("corpus: negative label on " + s.stem());
    by_domain_[s.domain].push_back(i);
    by_identity_[s.identity].push_back(i);
  }
  for (int d = 0; d < num_domains_; ++d)
    if (by_domain_[d].empty()) throw DataError("corpus: domain " + std::to_string(d) + " has no samples");
}

const std::vector<std::size_t>& Corpus::domain_indices(int domain) const {
  if (domain < 0 || domain >= num_domains_) throw ArgumentError("corpus: domain out of range");
  return by_domain_[domain];
}

const std::vector<std::size_t>& Corpus::identity_indices(int identity) const {
  auto it = by_identity_.find(identity);
  if (it == by_identity_.end()) throw ArgumentError("corpus: unknown identity " + std::to_string(identity));
  return it->second;
}

std::vector<int> Corpus::identities() const {
  std::vector<int> out;
  out.reserve(by_identity_.size());
  for (const auto& [id, idx] : by_identity_) out.push_back(id);
  return out;
}

bool Corpus::all_masked() const {
  for (const auto& s : samples_)
    if (!s.mask) return false;
  return true;
}

torch::Tensor stack_images(const Corpus& corpus, std::span<const std::size_t> indices) {
  std::vector<torch::Tensor> parts;
  parts.reserve(indices.size());
  for (auto i : indices) parts.push_back(corpus[i].image);
  return torch::stack(parts);
}

torch::Tensor stack_masks(const Corpus& corpus, std::span<const std::size_t> indices) {
  std::vector<torch::Tensor> parts;
  parts.reserve(indices.size());
  for (auto i : indices) {
    const auto& s = corpus[i];
    if (!s.mask) throw DataError("sample " + s.stem() + " has no foreground mask");
    parts.push_back(*s.mask);
  }
  return torch::stack(parts);
}

torch::Tensor stack_domains(const Corpus& corpus, std::span<const std::size_t> indices) {
  std::vector<std::int64_t> d;
  d.reserve(indices.size());
  for (auto i : indices) d.push_back(corpus[i].domain);
  return torch::tensor(d, torch::kInt64);
}

}  // namespace softmask::domaindata
