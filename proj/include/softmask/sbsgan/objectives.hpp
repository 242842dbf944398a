#pragma once

#include <torch/torch.h>

#include "softmask/domaindata/ops.hpp"
#include "softmask/sbsgan/losses.hpp"
#include "softmask/sbsgan/networks.hpp"

namespace softmask::sbsgan {

struct LossWeights {
  double rec = 10.0;
  double idc = 5.0;
  double bgs = 5.0;
  double sc = 5.0;
};

struct ObjectiveOptions {
  LossWeights weights;
  AdversarialOptions adversarial;
  NormReduction bgs_reduction = NormReduction::kL2;
};

struct GeneratorTerms {
  torch::Tensor adv, cls, rec, idc, bgs, sc;
  torch::Tensor total;
};

struct DiscriminatorTerms {
  torch::Tensor adv, cls;
  torch::Tensor total;
};

/// adv + cls + rec*w.rec + idc*w.idc + bgs*w.bgs + sc*w.sc
torch::Tensor weighted_generator_objective(const GeneratorTerms& terms, const LossWeights& weights);
torch::Tensor discriminator_objective(const DiscriminatorTerms& terms);

/// Tensors of one planned batch, rows in plan.members order.
struct GanBatch {
  domaindata::GanBatchPlan plan;
  torch::Tensor images;  // [B, 3, H, W]
  torch::Tensor masks;   // [B, H, W]
  std::vector<int> domains;
  int num_domains = 0;
};

GanBatch make_gan_batch(const domaindata::Corpus& corpus, domaindata::GanBatchPlan plan);

/// Adversarial (WGAN-GP by default) plus real-image domain classification.
/// Fakes are generated without gradient: soft-mask images for special
/// members, the planned style transfer for general members.
DiscriminatorTerms objective_d(Generator& g, Discriminator& d, const GanBatch& batch,
                               const ObjectiveOptions& options, torch::Tensor alpha = {});

/// Generator objective with D frozen. IDC, BGS and SC use the special
/// partition; REC, adversarial and fake classification use every output.
GeneratorTerms objective_g(Generator& g, Discriminator& d, const GanBatch& batch, const ObjectiveOptions& options);

}  // namespace softmask::sbsgan
