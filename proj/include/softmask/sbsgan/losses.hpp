#pragma once

#include <torch/torch.h>

#include <functional>
#include <span>
#include <vector>

#include "softmask/domaindata/types.hpp"

namespace softmask::sbsgan {

using domaindata::IndicatorTarget;

/// Anything that maps (images [B,3,H,W], one target per image) to images.
using GeneratorFn = std::function<torch::Tensor(const torch::Tensor&, std::span<const IndicatorTarget>)>;
/// Patch critic: images -> [B, 1, h, w] (or any [B, ...] score map).
using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;
/// Domain classifier: images -> [B, K] logits.
using ClassifierFn = std::function<torch::Tensor(const torch::Tensor&)>;

enum class NormReduction { kL2, kMse };
enum class AdversarialVariant { kWassersteinGp, kCrossEntropy };
enum class Side { kGenerator, kDiscriminator };

// Term functions over precomputed tensors.

torch::Tensor mean_abs(const torch::Tensor& a, const torch::Tensor& b);

/// Per-sample Euclidean norm of (I*M - soft) batch-averaged, or the MSE.
torch::Tensor bgs_term(const torch::Tensor& images, const torch::Tensor& masks, const torch::Tensor& soft,
                       NormReduction reduction = NormReduction::kL2);

/// `styled_foreign[j]` is the j-th foreign-domain translation of `images`.
torch::Tensor sc_term(const torch::Tensor& soft, const torch::Tensor& images, const torch::Tensor& masks,
                      const std::vector<torch::Tensor>& styled_foreign);

/// Row-wise target distributions [B, K].
torch::Tensor target_distribution(int num_domains, std::span<const IndicatorTarget> targets);

/// Soft-label cross-entropy, batch mean.
torch::Tensor domain_cls_term(const torch::Tensor& logits, std::span<const IndicatorTarget> targets);

torch::Tensor wasserstein_gap(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

/// mean over the batch of (||grad_x sum critic(x)|| - 1)^2 at
/// x = alpha*real + (1-alpha)*fake. `alpha` is [B]; an undefined tensor
/// draws it from the global torch generator.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               torch::Tensor alpha = {});

// Operation-level losses.

/// One foreign one-hot target per image.
torch::Tensor loss_idc(const GeneratorFn& g, const torch::Tensor& images, std::span<const IndicatorTarget> targets);

/// Cycle back to each image's own domain after translation toward `targets`.
torch::Tensor loss_rec(const GeneratorFn& g, const torch::Tensor& images, std::span<const IndicatorTarget> targets,
                       std::span<const int> source_domains);

/// Throws DataError when `masks` is undefined.
torch::Tensor loss_bgs(const GeneratorFn& g, const torch::Tensor& images, const torch::Tensor& masks,
                       NormReduction reduction = NormReduction::kL2);

torch::Tensor loss_sc(const GeneratorFn& g, const torch::Tensor& images, const torch::Tensor& masks,
                      std::span<const int> source_domains, int num_domains);

struct AdversarialOptions {
  AdversarialVariant variant = AdversarialVariant::kWassersteinGp;
  double gp_weight = 10.0;
};

/// Generator side ignores `real`. `alpha` as in gradient_penalty.
torch::Tensor loss_adv(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake, Side side,
                       const AdversarialOptions& options = {}, torch::Tensor alpha = {});

torch::Tensor loss_domain_cls(const ClassifierFn& classifier, const torch::Tensor& images,
                              std::span<const IndicatorTarget> targets);

/// Throws NumericError naming `term` and `step` unless `value` is finite.
void require_finite(const torch::Tensor& value, const std::string& term, std::int64_t step);

}  // namespace softmask::sbsgan
