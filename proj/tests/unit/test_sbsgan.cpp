#include <cmath>
#include <fstream>
#include <set>

#include "criteria.hpp"
#include "oracles.hpp"
#include "softmask/common/errors.hpp"
#include "softmask/domaindata/ops.hpp"
#include "softmask/sbsgan/losses.hpp"
#include "softmask/sbsgan/objectives.hpp"
#include "softmask/sbsgan/trainer.hpp"
#include "test_util.hpp"

#undef CHECK
#include <doctest.h>

using namespace softmask;
using namespace softmask::sbsgan;
using domaindata::IndicatorTarget;

namespace {

void require_all(const criteria::Report& r) {
  for (const auto& c : r.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.detail);
  CHECK(!r.checks.empty());
}

GanBatch micro_batch(const domaindata::Corpus& corpus, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return make_gan_batch(corpus, domaindata::compose_gan_batch(corpus, n, rng));
}

SbsganConfig tiny_config() {
  SbsganConfig c;
  c.base_channels = 4;
  c.residual_blocks = 1;
  c.disc_channels = 4;
  c.disc_layers = 2;
  c.batch_size = 4;
  c.critic_steps = 5;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_SUITE("sbsgan") {

TEST_CASE("loss terms against hand and element-loop oracles") {
  criteria::Report r;
  criteria::loss_oracles(r);
  require_all(r);
}

TEST_CASE("analytic gradients match finite differences") {
  criteria::Report r;
  criteria::gradient_checks(r, 3);
  require_all(r);
}

TEST_CASE("generator contract: shape, range, determinism") {
  torch::manual_seed(1);
  Generator g(GeneratorOptions{2, 4, 1});
  init_gan_weights(*g);
  auto x = torch::rand({1, 3, 256, 128}) * 2 - 1;
  auto a = infer_softmask(g, x);
  auto b = infer_softmask(g, x);
  CHECK(a.sizes() == torch::IntArrayRef({1, 3, 256, 128}));
  CHECK(a.min().item<float>() >= -1.0f);
  CHECK(a.max().item<float>() <= 1.0f);
  CHECK(torch::equal(a, b));
  auto s = infer_style(g, x, 1);
  CHECK(s.sizes() == x.sizes());
  CHECK(!torch::equal(s, a));

  auto ind3 = domaindata::build_indicator(3, IndicatorTarget::uniform(), 256, 128);
  CHECK_THROWS_AS(generate(g, x, ind3), ArgumentError);
  auto ind_small = domaindata::build_indicator(2, IndicatorTarget::uniform(), 64, 32);
  CHECK_THROWS_AS(generate(g, x, ind_small), ArgumentError);
  CHECK_THROWS_AS(g->generate(torch::rand({1, 3, 30, 16}), std::vector<IndicatorTarget>{IndicatorTarget::uniform()}),
                  ArgumentError);
}

TEST_CASE("generator input channels and unshared branches") {
  Generator g(GeneratorOptions{3, 4, 2});
  auto first = g->trunk->children().front()->as<torch::nn::Conv2d>();
  REQUIRE(first != nullptr);
  CHECK(first->weight.size(1) == 3 + 3);
  std::set<const void*> soft;
  for (const auto& p : g->branch_soft->parameters()) soft.insert(p.data_ptr());
  for (const auto& p : g->branch_style->parameters()) CHECK(!soft.count(p.data_ptr()));
  CHECK(g->branch_soft->parameters().size() == g->branch_style->parameters().size());
}

TEST_CASE("generate routes by indicator kind") {
  torch::manual_seed(2);
  Generator g(GeneratorOptions{2, 4, 1});
  init_gan_weights(*g);
  g->eval();
  torch::NoGradGuard ng;
  auto x = torch::rand({2, 3, 16, 8});
  auto mixed = g->generate(x, std::vector<IndicatorTarget>{IndicatorTarget::uniform(), IndicatorTarget::one_hot(0)});
  CHECK((mixed[0] - g->soft(x)[0]).abs().max().item<double>() < 1e-5);
  CHECK((mixed[1] - g->style(x, std::vector<int>{0, 0})[1]).abs().max().item<double>() < 1e-5);
}

TEST_CASE("branch isolation") {
  torch::manual_seed(3);
  Generator g(GeneratorOptions{2, 4, 1});
  init_gan_weights(*g);
  auto x = torch::rand({2, 3, 16, 8}) * 2 - 1;
  auto masks = torch::rand({2, 16, 8});
  auto snapshot = [](torch::nn::Sequential& s) {
    std::vector<torch::Tensor> out;
    for (const auto& p : s->parameters()) out.push_back(p.detach().clone());
    return out;
  };
  auto same = [](const std::vector<torch::Tensor>& a, torch::nn::Sequential& s) {
    auto now = s->parameters();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!torch::equal(a[i], now[i])) return false;
    return true;
  };

  torch::optim::Adam opt(g->parameters(), torch::optim::AdamOptions(1e-2));
  auto style_before = snapshot(g->branch_style);
  auto soft_before = snapshot(g->branch_soft);
  opt.zero_grad();
  bgs_term(x, masks, g->soft(x)).backward();
  opt.step();
  CHECK(same(style_before, g->branch_style));
  CHECK(!same(soft_before, g->branch_soft));

  style_before = snapshot(g->branch_style);
  soft_before = snapshot(g->branch_soft);
  opt.zero_grad();
  mean_abs(g->style(x, std::vector<int>{1, 0}), x).backward();
  opt.step();
  CHECK(same(soft_before, g->branch_soft));
  CHECK(!same(style_before, g->branch_style));
}

TEST_CASE("PatchGAN output shape table") {
  for (auto [h, w] : {std::pair<int, int>{64, 32}, {256, 128}, {32, 16}})
    for (int layers = 1; layers <= 4; ++layers) {
      if (h % (1 << layers) || w % (1 << layers)) continue;
      Discriminator d(DiscriminatorOptions{3, 4, layers, h, w});
      std::int64_t ph = h, pw = w;
      for (int l = 0; l < layers; ++l) ph = oracle::slide(ph, 4, 2, 1), pw = oracle::slide(pw, 4, 2, 1);
      ph = oracle::slide(ph, 3, 1, 1);
      pw = oracle::slide(pw, 3, 1, 1);
      auto out = d->forward(torch::rand({2, 3, h, w}));
      CAPTURE(h);
      CAPTURE(layers);
      CHECK(out.patches.sizes() == torch::IntArrayRef({2, 1, ph, pw}));
      CHECK(d->patch_shape()[0] == ph);
      CHECK(d->patch_shape()[1] == pw);
      CHECK(out.domain_logits.sizes() == torch::IntArrayRef({2, 3}));
    }
  CHECK_THROWS_AS(Discriminator(DiscriminatorOptions{2, 4, 3, 20, 8}), ArgumentError);
}

TEST_CASE("objective_D leaves G without gradient, objective_G leaves D without gradient") {
  torch::manual_seed(4);
  auto corpus = test_util::tiny_corpus(2, 2, 4);
  Generator g(GeneratorOptions{2, 4, 1});
  Discriminator d(DiscriminatorOptions{2, 4, 2, 16, 8});
  init_gan_weights(*g);
  init_gan_weights(*d);
  auto batch = micro_batch(corpus, 8, 5);

  objective_d(g, d, batch, {}).total.backward();
  for (const auto& p : g->parameters()) CHECK((!p.grad().defined() || p.grad().abs().sum().item<double>() == 0.0));
  bool d_moved = false;
  for (const auto& p : d->parameters()) d_moved = d_moved || (p.grad().defined() && p.grad().abs().sum().item<double>() > 0);
  CHECK(d_moved);

  for (auto& p : d->parameters()) p.mutable_grad() = torch::Tensor();
  auto terms = objective_g(g, d, batch, {});
  terms.total.backward();
  for (const auto& p : d->parameters()) CHECK((!p.grad().defined() || p.grad().abs().sum().item<double>() == 0.0));
  for (const auto& p : d->parameters()) CHECK(p.requires_grad());
}

TEST_CASE("lambda_sc = 0 drops the style-consistency term") {
  GeneratorTerms t;
  t.adv = torch::tensor(0.1);
  t.cls = torch::tensor(0.2);
  t.rec = torch::tensor(0.3);
  t.idc = torch::tensor(0.4);
  t.bgs = torch::tensor(0.5);
  t.sc = torch::tensor(100.0);
  LossWeights w;
  w.sc = 0;
  CHECK(weighted_generator_objective(t, w).item<double>() == doctest::Approx(0.1 + 0.2 + 3.0 + 2.0 + 2.5));
  LossWeights defaults;
  CHECK(defaults.rec == 10);
  CHECK(defaults.idc == 5);
  CHECK(defaults.bgs == 5);
  CHECK(defaults.sc == 5);
}

TEST_CASE("missing masks and non-finite values") {
  const GeneratorFn id = [](const torch::Tensor& x, auto) { return x; };
  auto x = torch::rand({1, 3, 4, 4});
  CHECK_THROWS_AS(loss_bgs(id, x, torch::Tensor()), DataError);
  CHECK_THROWS_AS(loss_sc(id, x, torch::Tensor(), std::vector<int>{0}, 2), DataError);
  CHECK_THROWS_WITH_AS(require_finite(torch::tensor(std::nan("")), "loss_bgs", 42),
                       doctest::Contains("loss_bgs at step 42"), NumericError);
  CHECK_NOTHROW(require_finite(torch::tensor(1.0), "loss_bgs", 1));
}

TEST_CASE("loss log rows round-trip") {
  LossRow d;
  d.step = 3;
  d.adv_d = -0.125;
  d.cls_r = 0.6931471805599453;
  const auto text = format_loss_row(d);
  CHECK(text == "3,-0.125,,0.6931471805599453,,,,,");
  test_util::TempDir dir;
  LossRow g;
  g.step = 4;
  g.generator = true;
  g.adv_g = 1.5;
  g.cls_f = 0.25;
  g.rec = 0.1;
  g.idc = 0.2;
  g.bgs = 0.3;
  g.sc = 0.4;
  {
    std::ofstream out(dir.path / "losses.csv");
    out << kLossCsvHeader << "\n" << format_loss_row(d) << "\n" << format_loss_row(g) << "\n";
  }
  auto rows = read_loss_log(dir.path / "losses.csv");
  REQUIRE(rows.size() == 2);
  CHECK(!rows[0].generator);
  CHECK(rows[0].cls_r == d.cls_r);
  CHECK(rows[1].generator);
  CHECK(rows[1].sc == 0.4);
  CHECK(generator_total(rows[1], {}) == doctest::Approx(1.5 + 0.25 + 1.0 + 1.0 + 1.5 + 2.0));
}

TEST_CASE("trainer: 5:1 schedule, checkpoint restore continues identically") {
  auto corpus = test_util::tiny_corpus(2, 2, 4);
  auto cfg = tiny_config();
  SbsganTrainer a(corpus, cfg);
  CHECK(a.generator_steps_per_epoch() == 4);
  auto rows1 = a.run_epoch();
  std::size_t g = 0;
  for (const auto& r : rows1) g += r.generator ? 1 : 0;
  CHECK(g == 4);
  CHECK(rows1.size() == 24);
  auto ckpt = a.checkpoint();
  auto rows2 = a.run_epoch();

  SbsganTrainer b(corpus, cfg);
  b.restore(ckpt);
  CHECK(b.epochs_done() == 1);
  CHECK(b.step() == 24);
  auto again = b.run_epoch();
  REQUIRE(again.size() == rows2.size());
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(format_loss_row(again[i]) == format_loss_row(rows2[i]));

  auto other = cfg;
  other.base_channels = 8;
  SbsganTrainer c(corpus, other);
  CHECK_THROWS_AS(c.restore(ckpt), ConfigError);
}

TEST_CASE("trainer preconditions") {
  auto cfg = tiny_config();
  auto one = test_util::tiny_corpus(1, 2, 2);
  CHECK_THROWS_AS(SbsganTrainer(one, cfg), ConfigError);
  std::vector<domaindata::ImageSample> s(2);
  for (int i = 0; i < 2; ++i) {
    s[static_cast<std::size_t>(i)].image = torch::zeros({3, 16, 8});
    s[static_cast<std::size_t>(i)].domain = i;
  }
  domaindata::Corpus unmasked(s, 2);
  CHECK_THROWS_AS(SbsganTrainer(unmasked, cfg), DataError);
}

TEST_CASE("train_sbsgan writes checkpoints and a loss log; generator reloads") {
  test_util::TempDir dir;
  auto corpus = test_util::tiny_corpus(2, 2, 2);
  auto cfg = tiny_config();
  cfg.epochs = 2;
  auto run = train_sbsgan(corpus, cfg, dir.path);
  CHECK(run.checkpoints.size() == 2);
  CHECK(std::filesystem::exists(dir.path / "checkpoints" / "epoch_0002.ckpt"));
  auto latest = latest_checkpoint(dir.path);
  REQUIRE(latest);
  CHECK(latest->filename() == "epoch_0002.ckpt");
  auto rows = read_loss_log(run.loss_log);
  CHECK(rows.size() == 2 * 2 * 6);
  auto g = load_generator(*latest);
  auto x = torch::rand({1, 3, 16, 8});
  CHECK(infer_softmask(g, x).sizes() == x.sizes());
  auto archive = TensorArchive::load(*latest);
  CHECK(archive.schema() == "sbsgan");
  CHECK(archive.get_int("K") == 2);
  CHECK(archive.get_double("lambda_rec") == 10.0);
  CHECK(archive.get_int("step") == 24);
}

}
