#include "softmask/domaindata/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "softmask/common/errors.hpp"

namespace softmask::domaindata {

DomainIndicator build_indicator(int num_domains, IndicatorTarget target, std::int64_t height, std::int64_t width) {
  if (num_domains < 1) throw ArgumentError("build_indicator: K must be >= 1");
  if (height <= 0 || width <= 0) throw ArgumentError("build_indicator: H and W must be positive");
  DomainIndicator ind;
  ind.target = target;
  if (target.is_uniform()) {
    ind.tensor = torch::full({num_domains, height, width}, 1.0f / static_cast<float>(num_domains));
  } else {
    if (target.domain < 0 || target.domain >= num_domains)
      throw ArgumentError("build_indicator: domain " + std::to_string(target.domain) + " outside [0, " +
                          std::to_string(num_domains) + ")");
    ind.tensor = torch::zeros({num_domains, height, width});
    ind.tensor[target.domain].fill_(1.0f);
  }
  return ind;
}

torch::Tensor indicator_batch(int num_domains, std::span<const IndicatorTarget> targets, std::int64_t height,
                              std::int64_t width) {
  std::vector<torch::Tensor> parts;
  parts.reserve(targets.size());
  for (const auto& t : targets) parts.push_back(build_indicator(num_domains, t, height, width).tensor);
  return torch::stack(parts);
}

torch::Tensor apply_mask(const torch::Tensor& image, const torch::Tensor& mask) {
  if (image.dim() == 3 && mask.dim() == 2) {
    if (image.size(1) != mask.size(0) || image.size(2) != mask.size(1))
      throw ArgumentError("apply_mask: mask " + std::to_string(mask.size(0)) + "x" + std::to_string(mask.size(1)) +
                          " does not match image " + std::to_string(image.size(1)) + "x" +
                          std::to_string(image.size(2)));
    return image * mask.unsqueeze(0);
  }
  if (image.dim() == 4 && mask.dim() == 3) {
    if (image.size(0) != mask.size(0) || image.size(2) != mask.size(1) || image.size(3) != mask.size(2))
      throw ArgumentError("apply_mask: batched mask shape does not match images");
    return image * mask.unsqueeze(1);
  }
  throw ArgumentError("apply_mask: expected [C,H,W]x[H,W] or [B,C,H,W]x[B,H,W]");
}

torch::Tensor augment(const torch::Tensor& image, bool flip,
                      std::optional<std::pair<std::int64_t, std::int64_t>> size) {
  if (image.dim() != 2 && image.dim() != 3) throw ArgumentError("augment: expected [C,H,W] or [H,W]");
  torch::Tensor out = image;
  if (size && (size->first != image.size(-2) || size->second != image.size(-1))) {
    auto batched = image.dim() == 3 ? image.unsqueeze(0) : image.unsqueeze(0).unsqueeze(0);
    batched = torch::nn::functional::interpolate(
        batched, torch::nn::functional::InterpolateFuncOptions()
                     .size(std::vector<std::int64_t>{size->first, size->second})
                     .mode(torch::kBilinear)
                     .align_corners(false));
    out = image.dim() == 3 ? batched.squeeze(0) : batched.squeeze(0).squeeze(0);
  }
  if (flip) out = out.flip({-1});
  return out;
}

std::size_t special_count(std::size_t batch_size, int num_domains) {
  if (batch_size == 0) throw ArgumentError("special_count: batch_size must be >= 1");
  const double raw = static_cast<double>(batch_size) * (num_domains + 1) / 16.0;
  const auto rounded = static_cast<std::size_t>(std::llround(raw));
  return std::clamp<std::size_t>(rounded, 1, batch_size);
}

GanBatchPlan compose_gan_batch(const Corpus& corpus, std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size == 0) throw ArgumentError("compose_gan_batch: batch_size must be >= 1");
  if (corpus.empty()) throw ArgumentError("compose_gan_batch: corpus is empty");
  std::vector<std::size_t> members;
  members.reserve(batch_size);
  std::vector<std::size_t> pool(corpus.size());
  while (members.size() < batch_size) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto take = std::min(pool.size(), batch_size - members.size());
    members.insert(members.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return plan_gan_batch(corpus, members, rng);
}

GanBatchPlan plan_gan_batch(const Corpus& corpus, std::span<const std::size_t> members, std::mt19937_64& rng) {
  if (members.empty()) throw ArgumentError("plan_gan_batch: empty batch");
  const int K = corpus.num_domains();
  if (K < 2) throw ArgumentError("plan_gan_batch: style transfer needs K >= 2 domains");

  GanBatchPlan plan;
  plan.members.assign(members.begin(), members.end());
  const std::size_t n_special = special_count(members.size(), K);

  std::vector<std::size_t> slots(members.size());
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::shuffle(slots.begin(), slots.end(), rng);
  std::vector<bool> is_special(members.size(), false);
  for (std::size_t i = 0; i < n_special; ++i) is_special[slots[i]] = true;

  plan.targets.resize(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    const int own = corpus[members[i]].domain;
    auto& t = plan.targets[i];
    if (is_special[i]) {
      plan.special.push_back(i);
      t.push_back(IndicatorTarget::uniform());
      for (int k = 0; k < K; ++k)
        if (k != own) t.push_back(IndicatorTarget::one_hot(k));
    } else {
      plan.general.push_back(i);
      std::uniform_int_distribution<int> pick(0, K - 2);
      int k = pick(rng);
      if (k >= own) ++k;
      t.push_back(IndicatorTarget::one_hot(k));
    }
  }
  return plan;
}

}  // namespace softmask::domaindata
