#include "softmask/sbsgan/objectives.hpp"

#include "softmask/common/errors.hpp"

namespace softmask::sbsgan {
namespace {

torch::Tensor positions(const std::vector<std::size_t>& p) {
  std::vector<std::int64_t> v(p.begin(), p.end());
  return torch::tensor(v, torch::kInt64);
}

}  // namespace

torch::Tensor weighted_generator_objective(const GeneratorTerms& t, const LossWeights& w) {
  return t.adv + t.cls + w.rec * t.rec + w.idc * t.idc + w.bgs * t.bgs + w.sc * t.sc;
}

torch::Tensor discriminator_objective(const DiscriminatorTerms& t) { return t.adv + t.cls; }

GanBatch make_gan_batch(const domaindata::Corpus& corpus, domaindata::GanBatchPlan plan) {
  GanBatch b;
  b.images = domaindata::stack_images(corpus, plan.members);
  b.masks = domaindata::stack_masks(corpus, plan.members);
  for (auto m : plan.members) b.domains.push_back(corpus[m].domain);
  b.num_domains = corpus.num_domains();
  b.plan = std::move(plan);
  return b;
}

DiscriminatorTerms objective_d(Generator& g, Discriminator& d, const GanBatch& batch,
                               const ObjectiveOptions& options, torch::Tensor alpha) {
  std::vector<IndicatorTarget> first;
  for (const auto& t : batch.plan.targets) first.push_back(t.front());
  torch::Tensor fakes;
  {
    torch::NoGradGuard no_grad;
    fakes = g->generate(batch.images, first);
  }
  DiscriminatorTerms terms;
  const CriticFn critic = [&](const torch::Tensor& x) { return d->critic(x); };
  if (options.adversarial.variant == AdversarialVariant::kWassersteinGp) {
    auto real_out = d->forward(batch.images);
    auto fake_scores = d->critic(fakes);
    terms.adv = wasserstein_gap(real_out.patches, fake_scores) +
                options.adversarial.gp_weight * gradient_penalty(critic, batch.images, fakes, std::move(alpha));
    std::vector<IndicatorTarget> own;
    for (int k : batch.domains) own.push_back(IndicatorTarget::one_hot(k));
    terms.cls = domain_cls_term(real_out.domain_logits, own);
  } else {
    terms.adv = loss_adv(critic, batch.images, fakes, Side::kDiscriminator, options.adversarial);
    std::vector<IndicatorTarget> own;
    for (int k : batch.domains) own.push_back(IndicatorTarget::one_hot(k));
    terms.cls = domain_cls_term(d->classify(batch.images), own);
  }
  terms.total = discriminator_objective(terms);
  return terms;
}

GeneratorTerms objective_g(Generator& g, Discriminator& d, const GanBatch& batch, const ObjectiveOptions& options) {
  const auto& plan = batch.plan;
  const int K = batch.num_domains;
  if (plan.special.empty()) throw ArgumentError("objective_g: batch has no special members");
  FreezeGuard frozen(*d);

  // Special partition: soft-mask image and every foreign translation.
  auto xs = batch.images.index_select(0, positions(plan.special));
  auto ms = batch.masks.index_select(0, positions(plan.special));
  const auto n_special = static_cast<std::int64_t>(plan.special.size());
  std::vector<std::int64_t> rep_rows;
  std::vector<int> special_targets, special_own;
  for (std::size_t i = 0; i < plan.special.size(); ++i) {
    const auto& targets = plan.targets[plan.special[i]];
    special_own.push_back(batch.domains[plan.special[i]]);
    for (std::size_t j = 1; j < targets.size(); ++j) {
      rep_rows.push_back(static_cast<std::int64_t>(i));
      special_targets.push_back(targets[j].domain);
    }
  }
  auto xs_rep = xs.index_select(0, torch::tensor(rep_rows, torch::kInt64));
  auto soft = g->soft(xs);
  auto styled_special = g->style(xs_rep, special_targets);

  // General partition: one random foreign translation each.
  std::vector<int> general_targets, general_own;
  for (auto p : plan.general) {
    general_targets.push_back(plan.targets[p].front().domain);
    general_own.push_back(batch.domains[p]);
  }
  torch::Tensor xr, styled_general;
  if (!plan.general.empty()) {
    xr = batch.images.index_select(0, positions(plan.general));
    styled_general = g->style(xr, general_targets);
  }

  std::vector<torch::Tensor> fake_parts{soft, styled_special};
  std::vector<torch::Tensor> source_parts{xs, xs_rep};
  std::vector<int> own;
  std::vector<IndicatorTarget> fake_targets;
  own.insert(own.end(), special_own.begin(), special_own.end());
  for (std::int64_t i = 0; i < n_special; ++i) fake_targets.push_back(IndicatorTarget::uniform());
  for (auto r : rep_rows) own.push_back(special_own[static_cast<std::size_t>(r)]);
  for (int k : special_targets) fake_targets.push_back(IndicatorTarget::one_hot(k));
  if (!plan.general.empty()) {
    fake_parts.push_back(styled_general);
    source_parts.push_back(xr);
    own.insert(own.end(), general_own.begin(), general_own.end());
    for (int k : general_targets) fake_targets.push_back(IndicatorTarget::one_hot(k));
  }
  auto fakes = torch::cat(fake_parts);
  auto sources = torch::cat(source_parts);

  GeneratorTerms terms;
  terms.rec = mean_abs(g->style(fakes, own), sources);
  terms.idc = mean_abs(styled_special, xs_rep);
  terms.bgs = bgs_term(xs, ms, soft, options.bgs_reduction);
  // styled_special rows are sample-major: [n_special, K-1, ...]
  auto grouped = styled_special.view({n_special, K - 1, 3, xs.size(2), xs.size(3)});
  std::vector<torch::Tensor> foreign;
  for (int j = 0; j < K - 1; ++j) foreign.push_back(grouped.select(1, j));
  terms.sc = sc_term(soft, xs, ms, foreign);

  auto out = d->forward(fakes);
  if (options.adversarial.variant == AdversarialVariant::kWassersteinGp) {
    terms.adv = -out.patches.mean();
  } else {
    terms.adv = torch::nn::functional::binary_cross_entropy_with_logits(out.patches, torch::ones_like(out.patches));
  }
  terms.cls = domain_cls_term(out.domain_logits, fake_targets);
  terms.total = weighted_generator_objective(terms, options.weights);
  return terms;
}

}  // namespace softmask::sbsgan
