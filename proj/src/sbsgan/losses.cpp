#include "softmask/sbsgan/losses.hpp"

#include "softmask/common/errors.hpp"
#include "softmask/domaindata/ops.hpp"

namespace F = torch::nn::functional;

namespace softmask::sbsgan {
namespace {

void require_masks(const torch::Tensor& masks, const char* op) {
  if (!masks.defined()) throw DataError(std::string(op) + ": foreground masks are required");
}

std::vector<IndicatorTarget> own_targets(std::span<const int> domains) {
  std::vector<IndicatorTarget> out;
  out.reserve(domains.size());
  for (int d : domains) out.push_back(IndicatorTarget::one_hot(d));
  return out;
}

}  // namespace

torch::Tensor mean_abs(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

torch::Tensor bgs_term(const torch::Tensor& images, const torch::Tensor& masks, const torch::Tensor& soft,
                       NormReduction reduction) {
  require_masks(masks, "loss_bgs");
  auto residual = domaindata::apply_mask(images, masks) - soft;
  if (reduction == NormReduction::kMse) return residual.pow(2).mean();
  return residual.flatten(1).norm(2, {1}).mean();
}

torch::Tensor sc_term(const torch::Tensor& soft, const torch::Tensor& images, const torch::Tensor& masks,
                      const std::vector<torch::Tensor>& styled_foreign) {
  require_masks(masks, "loss_sc");
  auto total = mean_abs(soft, domaindata::apply_mask(images, masks));
  for (const auto& styled : styled_foreign) total = total + mean_abs(soft, domaindata::apply_mask(styled, masks));
  return total;
}

torch::Tensor target_distribution(int num_domains, std::span<const IndicatorTarget> targets) {
  auto out = torch::zeros({static_cast<std::int64_t>(targets.size()), num_domains});
  auto acc = out.accessor<float, 2>();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].is_uniform()) {
      for (int k = 0; k < num_domains; ++k) acc[static_cast<std::int64_t>(i)][k] = 1.0f / static_cast<float>(num_domains);
    } else {
      if (targets[i].domain < 0 || targets[i].domain >= num_domains)
        throw ArgumentError("target domain " + std::to_string(targets[i].domain) + " outside [0, K)");
      acc[static_cast<std::int64_t>(i)][targets[i].domain] = 1.0f;
    }
  }
  return out;
}

torch::Tensor domain_cls_term(const torch::Tensor& logits, std::span<const IndicatorTarget> targets) {
  if (logits.dim() != 2 || logits.size(0) != static_cast<std::int64_t>(targets.size()))
    throw ArgumentError("domain classification: logits must be [B, K] with one target per row");
  auto p = target_distribution(static_cast<int>(logits.size(1)), targets).to(logits.dtype());
  return -(p * F::log_softmax(logits, F::LogSoftmaxFuncOptions(1))).sum(1).mean();
}

torch::Tensor wasserstein_gap(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  return fake_scores.mean() - real_scores.mean();
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               torch::Tensor alpha) {
  if (real.sizes() != fake.sizes()) throw ArgumentError("gradient_penalty: real and fake shapes differ");
  const auto B = real.size(0);
  if (!alpha.defined()) alpha = torch::rand({B}, real.options());
  std::vector<std::int64_t> shape(static_cast<std::size_t>(real.dim()), 1);
  shape[0] = B;
  auto a = alpha.to(real.dtype()).view(shape);
  auto x = (a * real.detach() + (1 - a) * fake.detach()).requires_grad_(true);
  auto scores = critic(x);
  auto grads = torch::autograd::grad({scores.sum()}, {x}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                     /*create_graph=*/true, /*allow_unused=*/true);
  auto g = grads[0].defined() ? grads[0] : torch::zeros_like(x);
  return (g.flatten(1).norm(2, {1}) - 1).pow(2).mean();
}

torch::Tensor loss_idc(const GeneratorFn& g, const torch::Tensor& images, std::span<const IndicatorTarget> targets) {
  return mean_abs(g(images, targets), images);
}

torch::Tensor loss_rec(const GeneratorFn& g, const torch::Tensor& images, std::span<const IndicatorTarget> targets,
                       std::span<const int> source_domains) {
  auto translated = g(images, targets);
  const auto back = own_targets(source_domains);
  return mean_abs(g(translated, back), images);
}

torch::Tensor loss_bgs(const GeneratorFn& g, const torch::Tensor& images, const torch::Tensor& masks,
                       NormReduction reduction) {
  require_masks(masks, "loss_bgs");
  std::vector<IndicatorTarget> uniform(static_cast<std::size_t>(images.size(0)), IndicatorTarget::uniform());
  return bgs_term(images, masks, g(images, uniform), reduction);
}

torch::Tensor loss_sc(const GeneratorFn& g, const torch::Tensor& images, const torch::Tensor& masks,
                      std::span<const int> source_domains, int num_domains) {
  require_masks(masks, "loss_sc");
  if (num_domains < 2) throw ArgumentError("loss_sc: K must be >= 2");
  const auto B = static_cast<std::size_t>(images.size(0));
  if (source_domains.size() != B) throw ArgumentError("loss_sc: one source domain per image required");
  std::vector<IndicatorTarget> uniform(B, IndicatorTarget::uniform());
  auto soft = g(images, uniform);
  std::vector<torch::Tensor> styled;
  for (int j = 0; j < num_domains - 1; ++j) {
    std::vector<IndicatorTarget> targets;
    for (int s : source_domains) targets.push_back(IndicatorTarget::one_hot(j < s ? j : j + 1));
    styled.push_back(g(images, targets));
  }
  return sc_term(soft, images, masks, styled);
}

torch::Tensor loss_adv(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake, Side side,
                       const AdversarialOptions& options, torch::Tensor alpha) {
  if (side == Side::kGenerator) {
    auto fake_scores = critic(fake);
    if (options.variant == AdversarialVariant::kCrossEntropy)
      return F::binary_cross_entropy_with_logits(fake_scores, torch::ones_like(fake_scores));
    return -fake_scores.mean();
  }
  if (real.size(-1) != fake.size(-1) || real.size(-2) != fake.size(-2))
    throw ArgumentError("loss_adv: real and fake spatial sizes differ");
  auto real_scores = critic(real);
  auto fake_scores = critic(fake.detach());
  if (options.variant == AdversarialVariant::kCrossEntropy)
    return F::binary_cross_entropy_with_logits(real_scores, torch::ones_like(real_scores)) +
           F::binary_cross_entropy_with_logits(fake_scores, torch::zeros_like(fake_scores));
  return wasserstein_gap(real_scores, fake_scores) +
         options.gp_weight * gradient_penalty(critic, real, fake, std::move(alpha));
}

torch::Tensor loss_domain_cls(const ClassifierFn& classifier, const torch::Tensor& images,
                              std::span<const IndicatorTarget> targets) {
  return domain_cls_term(classifier(images), targets);
}

void require_finite(const torch::Tensor& value, const std::string& term, std::int64_t step) {
  if (!torch::isfinite(value).all().item<bool>())
    throw NumericError("non-finite value in " + term + " at step " + std::to_string(step));
}

}  // namespace softmask::sbsgan
