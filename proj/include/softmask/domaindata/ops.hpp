#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "softmask/domaindata/types.hpp"

namespace softmask::domaindata {

/// Builds D_k (channel k all ones, all others zero) or the soft-mask
/// indicator (every entry 1/K).
DomainIndicator build_indicator(int num_domains, IndicatorTarget target, std::int64_t height, std::int64_t width);

/// Per-sample indicators stacked into [B, K, H, W].
torch::Tensor indicator_batch(int num_domains, std::span<const IndicatorTarget> targets, std::int64_t height,
                              std::int64_t width);

/// image ⊙ mask with the mask broadcast over channels. Accepts an image
/// [C, H, W] with mask [H, W], or a batch [B, C, H, W] with masks [B, H, W].
torch::Tensor apply_mask(const torch::Tensor& image, const torch::Tensor& mask);

/// Horizontal mirror when `flip`; optional bilinear resize to `size` (H, W).
/// Works on [C, H, W] images and [H, W] masks.
torch::Tensor augment(const torch::Tensor& image, bool flip,
                      std::optional<std::pair<std::int64_t, std::int64_t>> size = std::nullopt);

/// Split of one generator mini-batch.
///
/// `special` members produce a soft-mask image plus one style-transferred
/// image for every foreign domain; `general` members produce one
/// style-transferred image toward a random foreign domain.
struct GanBatchPlan {
  std::vector<std::size_t> members;  // corpus indices in batch order
  std::vector<std::size_t> special;  // positions into members, ascending
  std::vector<std::size_t> general;  // positions into members, ascending
  /// targets[i] lists the generation targets of members[i].
  std::vector<std::vector<IndicatorTarget>> targets;

  std::size_t batch_size() const { return members.size(); }
};

/// round(batch_size * (K + 1) / 16), clamped to [1, batch_size].
std::size_t special_count(std::size_t batch_size, int num_domains);

/// Draws `batch_size` corpus indices (without replacement while the
/// corpus allows) and partitions them.
GanBatchPlan compose_gan_batch(const Corpus& corpus, std::size_t batch_size, std::mt19937_64& rng);

/// Partitions a given list of corpus indices.
GanBatchPlan plan_gan_batch(const Corpus& corpus, std::span<const std::size_t> members, std::mt19937_64& rng);

}  // namespace softmask::domaindata
