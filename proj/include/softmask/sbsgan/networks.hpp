#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <span>

#include "softmask/domaindata/types.hpp"

namespace softmask::sbsgan {

using domaindata::DomainIndicator;
using domaindata::IndicatorTarget;

struct GeneratorOptions {
  int num_domains = 2;
  // Width of the stem; the trunk doubles it at each down-sampling layer.
  int base_channels = 32;
  int residual_blocks = 6;
};

struct DiscriminatorOptions {
  int num_domains = 2;
  int base_channels = 32;
  // Stride-2 4x4 convolutions in the patch trunk.
  int layers = 3;
  std::int64_t height = 64;
  std::int64_t width = 32;
};

enum class Branch { kSoft, kStyle };

/// conv3x3-IN-ReLU-conv3x3-IN with an additive skip.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Two-branch generator: a shared trunk (stem, two stride-2 convolutions,
/// residual blocks) feeding a soft-mask branch and a style-transfer branch
/// that share no parameters. Each branch up-samples twice with stride-2
/// transposed convolutions and ends in a tanh output convolution.
///
/// Input is the image concatenated with a K-channel indicator, so the
/// trunk sees 3 + K channels. H and W must be multiples of 4.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorOptions options);

  /// `input` is [B, 3 + K, H, W].
  torch::Tensor forward(const torch::Tensor& input, Branch branch);

  /// Soft-mask images: concatenates the uniform indicator, runs branch_soft.
  torch::Tensor soft(const torch::Tensor& images);
  /// Style transfer of images[i] toward domain target_domains[i].
  torch::Tensor style(const torch::Tensor& images, std::span<const int> target_domains);
  /// Mixed targets; uniform rows go through branch_soft, one-hot rows
  /// through branch_style. Output rows follow input order.
  torch::Tensor generate(const torch::Tensor& images, std::span<const IndicatorTarget> targets);

  int num_domains() const { return options_.num_domains; }
  const GeneratorOptions& options() const { return options_; }

  torch::nn::Sequential trunk{nullptr};
  torch::nn::Sequential branch_soft{nullptr};
  torch::nn::Sequential branch_style{nullptr};

 private:
  torch::nn::Sequential make_branch() const;
  void check_images(const torch::Tensor& images) const;

  GeneratorOptions options_;
};
TORCH_MODULE(Generator);

/// PatchGAN critic with an auxiliary domain classifier.
///
/// The trunk is `layers` stride-2 4x4 convolutions with LeakyReLU and no
/// normalization. head_adv maps the trunk output to a one-channel patch
/// map (linear, no sigmoid); head_dom is a convolution spanning the whole
/// trunk output producing K domain logits.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorOptions options);

  struct Output {
    torch::Tensor patches;        // [B, 1, h, w]
    torch::Tensor domain_logits;  // [B, K]
  };

  Output forward(const torch::Tensor& images);
  torch::Tensor critic(const torch::Tensor& images);
  torch::Tensor classify(const torch::Tensor& images);

  /// Spatial size of the patch map, H / 2^layers by W / 2^layers.
  std::array<std::int64_t, 2> patch_shape() const;
  const DiscriminatorOptions& options() const { return options_; }

  torch::nn::Sequential trunk{nullptr};
  torch::nn::Conv2d head_adv{nullptr};
  torch::nn::Conv2d head_dom{nullptr};

 private:
  DiscriminatorOptions options_;
};
TORCH_MODULE(Discriminator);

/// N(0, 0.02) for every convolution weight, zero biases; norm affine
/// parameters reset to scale 1, shift 0.
void init_gan_weights(torch::nn::Module& module);

/// Routes a single image [3, H, W] or batch [B, 3, H, W] through the branch
/// selected by the indicator kind.
torch::Tensor generate(Generator& generator, const torch::Tensor& images, const DomainIndicator& indicator);

/// Soft-mask inference: uniform indicator, inference mode, no gradients.
torch::Tensor infer_softmask(Generator& generator, const torch::Tensor& images);

/// Inference-mode style transfer toward `target_domain`.
torch::Tensor infer_style(Generator& generator, const torch::Tensor& images, int target_domain);

/// Sets requires_grad(false) on every parameter of a module for its lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(torch::nn::Module& module);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<torch::Tensor, bool>> saved_;
};

}  // namespace softmask::sbsgan
