#include "softmask/da2s/model.hpp"

#include "softmask/common/errors.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace softmask::da2s {
namespace {

std::string shape_text(const torch::Tensor& t) {
  std::string s;
  for (auto d : t.sizes()) s += (s.empty() ? "" : "x") + std::to_string(d);
  return s;
}

void init_backbone(nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
      nn::init::ones_(bn->weight);
      nn::init::zeros_(bn->bias);
    }
  }
}

}  // namespace

DenseLayerImpl::DenseLayerImpl(int in_channels, int growth_rate, int bottleneck_factor) {
  const int mid = bottleneck_factor * growth_rate;
  norm1 = register_module("norm1", nn::BatchNorm2d(in_channels));
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, mid, 1).bias(false)));
  norm2 = register_module("norm2", nn::BatchNorm2d(mid));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(mid, growth_rate, 3).padding(1).bias(false)));
}

torch::Tensor DenseLayerImpl::forward(const torch::Tensor& x) {
  auto h = conv1->forward(torch::relu(norm1->forward(x)));
  h = conv2->forward(torch::relu(norm2->forward(h)));
  return torch::cat({x, h}, 1);
}

TransitionImpl::TransitionImpl(int in_channels, int out_channels) {
  norm = register_module("norm", nn::BatchNorm2d(in_channels));
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).bias(false)));
}

torch::Tensor TransitionImpl::forward(const torch::Tensor& x) {
  return F::avg_pool2d(conv->forward(torch::relu(norm->forward(x))), F::AvgPool2dFuncOptions(2).stride(2));
}

DenseStreamImpl::DenseStreamImpl(const BackboneConfig& cfg) {
  int c = cfg.init_channels;
  stem = register_module(
      "stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, c, 7).stride(2).padding(3).bias(false)),
                             nn::BatchNorm2d(c), nn::ReLU(),
                             nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1))));
  blocks = register_module("blocks", nn::ModuleList());
  transitions = register_module("transitions", nn::ModuleList());
  for (int b = 0; b < 4; ++b) {
    nn::Sequential block;
    for (int l = 0; l < cfg.block_layers[static_cast<std::size_t>(b)]; ++l) {
      block->push_back(DenseLayer(c, cfg.growth_rate, cfg.bottleneck_factor));
      c += cfg.growth_rate;
    }
    blocks->push_back(block);
    if (b < 3) {
      transitions->push_back(Transition(c, c / 2));
      c /= 2;
    }
  }
  norm5 = register_module("norm5", nn::BatchNorm2d(c));
  init_backbone(*this);
}

std::vector<torch::Tensor> DenseStreamImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> taps;
  auto h = stem->forward(x);
  taps.push_back(h);
  for (std::size_t b = 0; b < 4; ++b) {
    h = blocks->ptr<nn::SequentialImpl>(b)->forward(h);
    if (b < 3) {
      h = transitions->ptr<TransitionImpl>(b)->forward(h);
      taps.push_back(h);
    }
  }
  taps.push_back(torch::relu(norm5->forward(h)));
  return taps;
}

SEBlockImpl::SEBlockImpl(std::int64_t channels, int reduction) {
  if (reduction < 1 || channels % reduction != 0)
    throw ConfigError("SE block: " + std::to_string(channels) + " channels not divisible by reduction " +
                      std::to_string(reduction));
  fc1 = register_module("fc1", nn::Linear(channels, channels / reduction));
  fc2 = register_module("fc2", nn::Linear(channels / reduction, channels));
}

torch::Tensor SEBlockImpl::excitation(const torch::Tensor& x) {
  if (forced_) return torch::full({x.size(0), x.size(1)}, *forced_, x.options());
  auto s = x.mean({2, 3});
  return torch::sigmoid(fc2->forward(torch::relu(fc1->forward(s))));
}

torch::Tensor SEBlockImpl::forward(const torch::Tensor& x) {
  return x * excitation(x).unsqueeze(2).unsqueeze(3);
}

IsdcModuleImpl::IsdcModuleImpl(const IsdcShape& shape, bool with_se, int se_reduction) : shape_(shape) {
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(shape.in_channels, shape.out_channels, 3)
                                                .stride(shape.stride)
                                                .padding(1)
                                                .bias(false)));
  norm = register_module("norm", nn::BatchNorm2d(shape.out_channels));
  if (with_se) se = register_module("se", SEBlock(shape.out_channels, se_reduction));
  init_backbone(*this);
}

torch::Tensor IsdcModuleImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(norm->forward(conv->forward(x)));
  return se ? se->forward(out) : out;
}

IsdcStackImpl::IsdcStackImpl(const WiringTable& table, bool with_se, int se_reduction) {
  for (const auto& shape : table.isdc)
    items_.push_back(register_module(std::to_string(shape.index), IsdcModule(shape, with_se, se_reduction)));
}

IsdcModule& IsdcStackImpl::at(int n) {
  if (n < 1 || n > static_cast<int>(items_.size()))
    throw ArgumentError("ISDC module index " + std::to_string(n) + " outside [1, 4]");
  return items_[static_cast<std::size_t>(n - 1)];
}

torch::Tensor isdc_forward(IsdcStack& stack, int n, const std::optional<torch::Tensor>& prev,
                           const torch::Tensor& tap1, const torch::Tensor& tap2) {
  auto& module = stack->at(n);
  if (n == 1 && prev) throw ArgumentError("ISDC 1 takes no previous output (y = 0)");
  if (n >= 2 && !prev) throw ArgumentError("ISDC " + std::to_string(n) + " requires the previous module output");
  if (tap1.sizes() != tap2.sizes())
    throw WiringError("ISDC " + std::to_string(n) + ": stream taps differ (" + shape_text(tap1) + " vs " +
                      shape_text(tap2) + ")");
  const auto& s = module->shape();
  auto x = torch::cat({tap1, tap2}, 1);
  if (x.dim() != 4 || x.size(1) != s.in_channels || x.size(2) != s.in_height || x.size(3) != s.in_width)
    throw WiringError("ISDC " + std::to_string(n) + ": concatenated tap is " + shape_text(x) + ", expected " +
                      std::to_string(s.in_channels) + "x" + std::to_string(s.in_height) + "x" +
                      std::to_string(s.in_width));
  if (prev) {
    if (prev->sizes() != x.sizes())
      throw WiringError("ISDC " + std::to_string(n) + ": previous output " + shape_text(*prev) +
                        " does not match the concatenated tap " + shape_text(x));
    x = x + *prev;
  }
  return module->forward(x);
}

torch::Tensor se_reweight(SEBlock& block, const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != block->fc2->options.out_features())
    throw WiringError("SE block expects " + std::to_string(block->fc2->options.out_features()) +
                      " channels, got " + shape_text(x));
  return block->forward(x);
}

Da2sModelImpl::Da2sModelImpl(Da2sOptions options) : options_(std::move(options)) {
  if (options_.num_ids < 2) throw ConfigError("DA-2S needs at least 2 identities");
  wiring_ = options_.use_isdc ? checked_wiring(options_.backbone) : compute_wiring(options_.backbone);
  for (const auto& tap : wiring_.taps)
    if (tap.height < 1 || tap.width < 1) throw WiringError("tap '" + tap.name + "' has an empty spatial size");
  stream1 = register_module("stream1", DenseStream(options_.backbone));
  stream2 = register_module("stream2", DenseStream(options_.backbone));
  if (options_.use_isdc) isdc = register_module("isdc", IsdcStack(wiring_, options_.isdc_se, options_.se_reduction));
  if (options_.use_se) se = register_module("se", SEBlock(wiring_.feature_dim(), options_.se_reduction));
  fc1 = register_module("fc1", nn::Linear(wiring_.feature_dim(), options_.fc1_units));
  bn_fc = register_module("bn_fc", nn::BatchNorm1d(options_.fc1_units));
  dropout = register_module("dropout", nn::Dropout(options_.dropout));
  fc2 = register_module("fc2", nn::Linear(options_.fc1_units, options_.num_ids));
  torch::NoGradGuard no_grad;
  nn::init::kaiming_normal_(fc1->weight, 0.0, torch::kFanOut);
  nn::init::zeros_(fc1->bias);
  nn::init::normal_(fc2->weight, 0.0, 0.001);
  nn::init::zeros_(fc2->bias);
}

torch::Tensor Da2sModelImpl::features(const torch::Tensor& soft, const torch::Tensor& context) {
  const auto& b = options_.backbone;
  for (const auto* t : {&soft, &context})
    if (t->dim() != 4 || t->size(1) != 3 || t->size(2) != b.input_height || t->size(3) != b.input_width)
      throw ArgumentError("DA-2S expects [B, 3, " + std::to_string(b.input_height) + ", " +
                          std::to_string(b.input_width) + "] inputs, got " + shape_text(*t));
  if (soft.size(0) != context.size(0)) throw ArgumentError("DA-2S: soft and context batches differ in size");
  auto t1 = stream1->forward(soft);
  auto t2 = stream2->forward(context);
  auto fused = torch::cat({t1[4], t2[4]}, 1);
  if (se) fused = se_reweight(se, fused);
  if (isdc) {
    std::optional<torch::Tensor> prev;
    for (int n = 1; n <= 4; ++n)
      prev = isdc_forward(isdc, n, prev, t1[static_cast<std::size_t>(n - 1)], t2[static_cast<std::size_t>(n - 1)]);
    fused = fused + *prev;
  }
  return fused.mean({2, 3});
}

torch::Tensor Da2sModelImpl::head(const torch::Tensor& f) {
  return fc2->forward(dropout->forward(torch::relu(bn_fc->forward(fc1->forward(f)))));
}

torch::Tensor Da2sModelImpl::forward(const torch::Tensor& soft, const torch::Tensor& context) {
  return head(features(soft, context));
}

Da2sModel build_model(const Da2sOptions& options) { return Da2sModel(options); }

torch::Tensor extract_features(Da2sModel& model, const torch::Tensor& soft, const torch::Tensor& context) {
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  auto f = model->features(soft, context);
  model->train(was_training);
  return f;
}

std::size_t load_named_weights(Da2sModel& model, const std::map<std::string, torch::Tensor>& weights, bool strict) {
  torch::NoGradGuard no_grad;
  auto params = model->named_parameters(true);
  auto buffers = model->named_buffers(true);
  std::size_t copied = 0;
  for (const auto& [name, value] : weights) {
    torch::Tensor* target = params.find(name);
    if (!target) target = buffers.find(name);
    if (!target) {
      if (strict) throw ConfigError("pre-trained weight '" + name + "' has no counterpart in the model");
      continue;
    }
    if (target->sizes() != value.sizes())
      throw ConfigError("pre-trained weight '" + name + "' has shape " + shape_text(value) + ", model expects " +
                        shape_text(*target));
    target->copy_(value);
    ++copied;
  }
  return copied;
}

}  // namespace softmask::da2s
