#pragma once

#include <torch/torch.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "softmask/da2s/backbone.hpp"

namespace softmask::da2s {

/// BN-ReLU-1x1 (bottleneck) then BN-ReLU-3x3 (growth); output is the
/// input with the new features appended.
class DenseLayerImpl : public torch::nn::Module {
 public:
  DenseLayerImpl(int in_channels, int growth_rate, int bottleneck_factor);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::BatchNorm2d norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(DenseLayer);

/// BN-ReLU-1x1 conv halving channels, then 2x2 average pooling.
class TransitionImpl : public torch::nn::Module {
 public:
  TransitionImpl(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::BatchNorm2d norm{nullptr};
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(Transition);

/// Densely connected backbone returning its five taps.
class DenseStreamImpl : public torch::nn::Module {
 public:
  explicit DenseStreamImpl(const BackboneConfig& cfg);
  /// pool, block1..block3 (post-transition), final.
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

  torch::nn::Sequential stem{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::ModuleList transitions{nullptr};
  torch::nn::BatchNorm2d norm5{nullptr};
};
TORCH_MODULE(DenseStream);

/// Squeeze-and-excitation: GAP -> FC(C/r) -> ReLU -> FC(C) -> sigmoid.
class SEBlockImpl : public torch::nn::Module {
 public:
  SEBlockImpl(std::int64_t channels, int reduction);
  torch::Tensor forward(const torch::Tensor& x);
  /// Per-channel scales [B, C].
  torch::Tensor excitation(const torch::Tensor& x);
  /// Replaces the computed excitation with a constant (test seam).
  void force_excitation(std::optional<double> value) { forced_ = value; }

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  std::optional<double> forced_;
};
TORCH_MODULE(SEBlock);

/// One ISDC module: 3x3 conv (pad 1) -> BN -> ReLU, optionally followed by SE.
class IsdcModuleImpl : public torch::nn::Module {
 public:
  IsdcModuleImpl(const IsdcShape& shape, bool with_se, int se_reduction);
  torch::Tensor forward(const torch::Tensor& x);
  const IsdcShape& shape() const { return shape_; }

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};
  SEBlock se{nullptr};

 private:
  IsdcShape shape_;
};
TORCH_MODULE(IsdcModule);

class IsdcStackImpl : public torch::nn::Module {
 public:
  IsdcStackImpl(const WiringTable& table, bool with_se, int se_reduction);
  /// Module n, 1-based; registered under the name "n".
  IsdcModule& at(int n);

 private:
  std::vector<IsdcModule> items_;
};
TORCH_MODULE(IsdcStack);

/// Runs ISDC module n (1-based) on y*O_prev + concat(tap1, tap2).
/// O_prev must be absent for n = 1 (ArgumentError) and present for n >= 2;
/// shapes are checked against the module's wiring (WiringError).
torch::Tensor isdc_forward(IsdcStack& stack, int n, const std::optional<torch::Tensor>& prev,
                           const torch::Tensor& tap1, const torch::Tensor& tap2);

/// Scales x [B, C, H, W] by the block's excitation. WiringError when
/// C does not match the block.
torch::Tensor se_reweight(SEBlock& block, const torch::Tensor& x);

struct Da2sOptions {
  BackboneConfig backbone;
  int num_ids = 2;
  bool use_isdc = true;
  bool use_se = true;
  // SE after each ISDC ReLU.
  bool isdc_se = false;
  int se_reduction = 16;
  int fc1_units = 512;
  double dropout = 0.5;
};

/// Two unshared dense streams fused by the ISDC chain and an SE block
/// over the concatenated final taps, then GAP and a two-layer head.
class Da2sModelImpl : public torch::nn::Module {
 public:
  explicit Da2sModelImpl(Da2sOptions options);

  /// Post-GAP fused vector [B, feature_dim].
  torch::Tensor features(const torch::Tensor& soft, const torch::Tensor& context);
  /// Identity logits [B, num_ids].
  torch::Tensor forward(const torch::Tensor& soft, const torch::Tensor& context);
  torch::Tensor head(const torch::Tensor& features);

  const WiringTable& wiring() const { return wiring_; }
  const Da2sOptions& options() const { return options_; }
  std::int64_t feature_dim() const { return wiring_.feature_dim(); }

  DenseStream stream1{nullptr}, stream2{nullptr};
  IsdcStack isdc{nullptr};
  SEBlock se{nullptr};
  torch::nn::Linear fc1{nullptr};
  torch::nn::BatchNorm1d bn_fc{nullptr};
  torch::nn::Dropout dropout{nullptr};
  torch::nn::Linear fc2{nullptr};

 private:
  Da2sOptions options_;
  WiringTable wiring_;
};
TORCH_MODULE(Da2sModel);

/// Validates the wiring (ConfigError / WiringError) and num_ids >= 2.
Da2sModel build_model(const Da2sOptions& options);

/// Inference-mode features; restores the previous training flag.
torch::Tensor extract_features(Da2sModel& model, const torch::Tensor& soft, const torch::Tensor& context);

/// Copies named tensors into the model (pre-trained weight hook). Names
/// follow named_parameters()/named_buffers(); unknown names are an error
/// unless `strict` is false. Returns the number of tensors copied.
std::size_t load_named_weights(Da2sModel& model, const std::map<std::string, torch::Tensor>& weights,
                               bool strict = true);

}  // namespace softmask::da2s
