#include "softmask/sbsgan/networks.hpp"

#include "softmask/common/errors.hpp"
#include "softmask/domaindata/ops.hpp"

namespace nn = torch::nn;

namespace softmask::sbsgan {
namespace {

nn::InstanceNorm2d instance_norm(int channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true).track_running_stats(false));
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  body_ = register_module(
      "body", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).bias(false)),
                             instance_norm(channels), nn::ReLU(),
                             nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).bias(false)),
                             instance_norm(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

GeneratorImpl::GeneratorImpl(GeneratorOptions options) : options_(options) {
  if (options_.num_domains < 1 || options_.base_channels < 1 || options_.residual_blocks < 0)
    throw ArgumentError("generator: invalid options");
  const int c = options_.base_channels;
  nn::Sequential t;
  t->push_back(nn::Conv2d(nn::Conv2dOptions(3 + options_.num_domains, c, 7).padding(3).bias(false)));
  t->push_back(instance_norm(c));
  t->push_back(nn::ReLU());
  int width = c;
  for (int i = 0; i < 2; ++i) {
    t->push_back(nn::Conv2d(nn::Conv2dOptions(width, width * 2, 4).stride(2).padding(1).bias(false)));
    t->push_back(instance_norm(width * 2));
    t->push_back(nn::ReLU());
    width *= 2;
  }
  for (int i = 0; i < options_.residual_blocks; ++i) t->push_back(ResidualBlock(width));
  trunk = register_module("trunk", t);
  branch_soft = register_module("branch_soft", make_branch());
  branch_style = register_module("branch_style", make_branch());
  init_gan_weights(*this);
}

nn::Sequential GeneratorImpl::make_branch() const {
  int width = options_.base_channels * 4;
  nn::Sequential b;
  for (int i = 0; i < 2; ++i) {
    b->push_back(
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width, width / 2, 4).stride(2).padding(1).bias(false)));
    b->push_back(instance_norm(width / 2));
    b->push_back(nn::ReLU());
    width /= 2;
  }
  b->push_back(nn::Conv2d(nn::Conv2dOptions(width, 3, 7).padding(3).bias(false)));
  b->push_back(nn::Tanh());
  return b;
}

void GeneratorImpl::check_images(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) throw ArgumentError("generator: expected images [B, 3, H, W]");
  if (images.size(2) % 4 != 0 || images.size(3) % 4 != 0)
    throw ArgumentError("generator: H and W must be multiples of 4");
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& input, Branch branch) {
  if (input.dim() != 4 || input.size(1) != 3 + options_.num_domains)
    throw ArgumentError("generator: expected input with 3 + K = " + std::to_string(3 + options_.num_domains) +
                        " channels");
  auto features = trunk->forward(input);
  return branch == Branch::kSoft ? branch_soft->forward(features) : branch_style->forward(features);
}

torch::Tensor GeneratorImpl::soft(const torch::Tensor& images) {
  check_images(images);
  const int K = options_.num_domains;
  auto ind = torch::full({images.size(0), K, images.size(2), images.size(3)}, 1.0f / static_cast<float>(K),
                         images.options());
  return forward(torch::cat({images, ind}, 1), Branch::kSoft);
}

torch::Tensor GeneratorImpl::style(const torch::Tensor& images, std::span<const int> target_domains) {
  check_images(images);
  if (static_cast<std::int64_t>(target_domains.size()) != images.size(0))
    throw ArgumentError("generator: one target domain per image required");
  const int K = options_.num_domains;
  std::vector<std::int64_t> idx(target_domains.begin(), target_domains.end());
  for (auto k : idx)
    if (k < 0 || k >= K) throw ArgumentError("generator: target domain " + std::to_string(k) + " outside [0, K)");
  auto onehot = torch::one_hot(torch::tensor(idx, torch::kInt64), K).to(images.dtype());
  auto ind = onehot.view({images.size(0), K, 1, 1}).expand({images.size(0), K, images.size(2), images.size(3)});
  return forward(torch::cat({images, ind}, 1), Branch::kStyle);
}

torch::Tensor GeneratorImpl::generate(const torch::Tensor& images, std::span<const IndicatorTarget> targets) {
  check_images(images);
  if (static_cast<std::int64_t>(targets.size()) != images.size(0))
    throw ArgumentError("generator: one target per image required");
  std::vector<std::int64_t> soft_rows, style_rows;
  std::vector<int> style_domains;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].is_uniform()) {
      soft_rows.push_back(static_cast<std::int64_t>(i));
    } else {
      style_rows.push_back(static_cast<std::int64_t>(i));
      style_domains.push_back(targets[i].domain);
    }
  }
  if (style_rows.empty()) return soft(images);
  if (soft_rows.empty()) return style(images, style_domains);
  auto soft_idx = torch::tensor(soft_rows, torch::kInt64);
  auto style_idx = torch::tensor(style_rows, torch::kInt64);
  auto soft_out = soft(images.index_select(0, soft_idx));
  auto style_out = style(images.index_select(0, style_idx), style_domains);
  auto out = torch::empty({images.size(0), 3, images.size(2), images.size(3)}, soft_out.options());
  // index_put keeps the autograd graph of both branches.
  out = out.index_put({soft_idx}, soft_out);
  out = out.index_put({style_idx}, style_out);
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorOptions options) : options_(options) {
  if (options_.layers < 1) throw ArgumentError("discriminator: layers must be >= 1");
  const std::int64_t div = std::int64_t{1} << options_.layers;
  if (options_.height % div != 0 || options_.width % div != 0)
    throw ArgumentError("discriminator: image size must be divisible by 2^layers = " + std::to_string(div));
  nn::Sequential t;
  int in = 3;
  int out = options_.base_channels;
  for (int i = 0; i < options_.layers; ++i) {
    t->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    t->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.01)));
    in = out;
    out *= 2;
  }
  trunk = register_module("trunk", t);
  const auto [ph, pw] = patch_shape();
  head_adv = register_module("head_adv", nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1).bias(false)));
  head_dom = register_module(
      "head_dom", nn::Conv2d(nn::Conv2dOptions(in, options_.num_domains, {ph, pw}).bias(false)));
  init_gan_weights(*this);
}

std::array<std::int64_t, 2> DiscriminatorImpl::patch_shape() const {
  const std::int64_t div = std::int64_t{1} << options_.layers;
  return {options_.height / div, options_.width / div};
}

DiscriminatorImpl::Output DiscriminatorImpl::forward(const torch::Tensor& images) {
  auto h = trunk->forward(images);
  return {head_adv->forward(h), head_dom->forward(h).flatten(1)};
}

torch::Tensor DiscriminatorImpl::critic(const torch::Tensor& images) { return head_adv->forward(trunk->forward(images)); }

torch::Tensor DiscriminatorImpl::classify(const torch::Tensor& images) {
  return head_dom->forward(trunk->forward(images)).flatten(1);
}

void init_gan_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::normal_(conv->weight, 0.0, 0.02);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* deconv = m->as<nn::ConvTranspose2d>()) {
      nn::init::normal_(deconv->weight, 0.0, 0.02);
      if (deconv->bias.defined()) nn::init::zeros_(deconv->bias);
    } else if (auto* norm = m->as<nn::InstanceNorm2d>()) {
      if (norm->weight.defined()) nn::init::ones_(norm->weight);
      if (norm->bias.defined()) nn::init::zeros_(norm->bias);
    }
  }
}

torch::Tensor generate(Generator& generator, const torch::Tensor& images, const DomainIndicator& indicator) {
  if (indicator.num_domains() != generator->num_domains())
    throw ArgumentError("generate: indicator has K = " + std::to_string(indicator.num_domains()) +
                        " but the generator was built for K = " + std::to_string(generator->num_domains()));
  const bool single = images.dim() == 3;
  auto batch = single ? images.unsqueeze(0) : images;
  if (batch.dim() != 4 || batch.size(2) != indicator.tensor.size(1) || batch.size(3) != indicator.tensor.size(2))
    throw ArgumentError("generate: indicator spatial size does not match the image");
  auto ind = indicator.tensor.to(batch.dtype()).unsqueeze(0).expand({batch.size(0), -1, -1, -1});
  auto out = generator->forward(torch::cat({batch, ind}, 1),
                                indicator.target.is_uniform() ? Branch::kSoft : Branch::kStyle);
  return single ? out.squeeze(0) : out;
}

torch::Tensor infer_softmask(Generator& generator, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  const bool was_training = generator->is_training();
  generator->eval();
  const bool single = images.dim() == 3;
  auto out = generator->soft(single ? images.unsqueeze(0) : images);
  generator->train(was_training);
  return single ? out.squeeze(0) : out;
}

torch::Tensor infer_style(Generator& generator, const torch::Tensor& images, int target_domain) {
  torch::NoGradGuard no_grad;
  const bool was_training = generator->is_training();
  generator->eval();
  const bool single = images.dim() == 3;
  auto batch = single ? images.unsqueeze(0) : images;
  std::vector<int> targets(static_cast<std::size_t>(batch.size(0)), target_domain);
  auto out = generator->style(batch, targets);
  generator->train(was_training);
  return single ? out.squeeze(0) : out;
}

FreezeGuard::FreezeGuard(torch::nn::Module& module) {
  for (auto& p : module.parameters()) {
    saved_.emplace_back(p, p.requires_grad());
    p.set_requires_grad(false);
  }
}

FreezeGuard::~FreezeGuard() {
  for (auto& [p, flag] : saved_) p.set_requires_grad(flag);
}

}  // namespace softmask::sbsgan
