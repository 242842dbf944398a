#include <cmath>

#include "criteria.hpp"
#include "oracles.hpp"
#include "softmask/common/errors.hpp"
#include "softmask/da2s/model.hpp"
#include "softmask/da2s/trainer.hpp"
#include "softmask/reideval/eval.hpp"
#include "test_util.hpp"

#undef CHECK
#include <doctest.h>

using namespace softmask;
using namespace softmask::da2s;

namespace {

void require_all(const criteria::Report& r) {
  for (const auto& c : r.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.detail);
  CHECK(!r.checks.empty());
}

Da2sOptions small_options(int ids = 3) {
  Da2sOptions o;
  o.num_ids = ids;
  o.fc1_units = 32;
  return o;
}

}  // namespace

TEST_SUITE("da2s") {

TEST_CASE("window arithmetic") {
  CHECK(window_out(32, 3, 2, 1) == 16);
  CHECK(window_out(16, 3, 2, 1) == 8);
  CHECK(window_out(7, 3, 1, 1) == 7);
  CHECK(window_out(1, 2, 2, 0) == 0);
  for (int in = 0; in < 40; ++in)
    for (int k : {2, 3, 7})
      for (int s : {1, 2})
        for (int p : {0, 1, 3}) CHECK(window_out(in, k, s, p) == oracle::slide(in, k, s, p));
}

TEST_CASE("full and mini tap tables, random configs against the oracle") {
  criteria::Report r;
  criteria::wiring(r, 10, false);
  require_all(r);
}

TEST_CASE("mini wiring example: 2-2-2-2 blocks do not type-check") {
  BackboneConfig cfg = BackboneConfig::mini();
  cfg.block_layers = {2, 2, 2, 2};
  const auto o = oracle::propagate({8, {2, 2, 2, 2}, 8, 64, 32});
  CHECK(!o.valid);
  CHECK(o.first_bad_tap == 1);
  CHECK_THROWS_WITH_AS(checked_wiring(cfg), doctest::Contains("tap 'block1'"), WiringError);
  auto opts = small_options();
  opts.backbone = cfg;
  CHECK_THROWS_AS(build_model(opts), ConfigError);

  const auto mini = checked_wiring(BackboneConfig::mini());
  CHECK(mini.taps[4].channels == 128);
  CHECK(mini.feature_dim() == 2 * mini.taps[4].channels);
}

TEST_CASE("build_model preconditions") {
  auto o = small_options(1);
  CHECK_THROWS_AS(build_model(o), ConfigError);
  CHECK_THROWS_AS(parse_variant("resnet"), ConfigError);
  CHECK(parse_variant("full") == Variant::kFull);
}

TEST_CASE("isdc_forward examples") {
  torch::manual_seed(1);
  WiringTable t;
  t.taps[0] = {"a", 32, 16, 4};
  t.isdc[0] = {1, 2, 8, 16, 32, 16, 16, 8};
  t.isdc[1] = {2, 2, 16, 32, 16, 8, 8, 4};
  t.isdc[2] = {3, 1, 4, 4, 1, 1, 1, 1};
  t.isdc[3] = {4, 1, 4, 4, 1, 1, 1, 1};
  IsdcStack stack(t, false, 16);
  auto a = torch::rand({2, 4, 32, 16});
  auto b = torch::rand({2, 4, 32, 16});
  auto o1 = isdc_forward(stack, 1, std::nullopt, a, b);
  CHECK(o1.sizes() == torch::IntArrayRef({2, 16, 16, 8}));
  CHECK_THROWS_AS(isdc_forward(stack, 1, o1, a, b), ArgumentError);
  auto c = torch::rand({2, 8, 16, 8});
  CHECK_THROWS_AS(isdc_forward(stack, 2, std::nullopt, c, c), ArgumentError);
  CHECK(isdc_forward(stack, 2, o1, c, c).sizes() == torch::IntArrayRef({2, 32, 8, 4}));
  CHECK_THROWS_AS(isdc_forward(stack, 2, o1, torch::rand({2, 8, 15, 8}), torch::rand({2, 8, 15, 8})), WiringError);
  CHECK_THROWS_AS(isdc_forward(stack, 2, torch::rand({2, 16, 8, 4}), c, c), WiringError);
  CHECK_THROWS_AS(isdc_forward(stack, 5, std::nullopt, a, b), ArgumentError);

  // y = 1 adds the previous output before the convolution.
  {
    torch::NoGradGuard ng;
    auto& m = stack->at(2);
    m->eval();
    auto with = isdc_forward(stack, 2, o1, c, c);
    auto x = torch::cat({c, c}, 1) + o1;
    auto manual = torch::relu(m->norm->forward(m->conv->forward(x)));
    CHECK(torch::allclose(with, manual));
    m->train();
  }

  {
    torch::NoGradGuard ng;
    auto& m = stack->at(1);
    m->conv->weight.zero_();
    m->norm->bias.zero_();
  }
  CHECK(isdc_forward(stack, 1, std::nullopt, a, b).abs().max().item<float>() == 0.0f);
}

TEST_CASE("ISDC stack gradient check") {
  criteria::Report r;
  criteria::isdc_gradient_checks(r, 2);
  require_all(r);
}

TEST_CASE("SE block examples") {
  torch::manual_seed(2);
  SEBlock se(32, 16);
  auto x = torch::rand({2, 32, 4, 2});
  se->force_excitation(1.0);
  CHECK(torch::equal(se_reweight(se, x), x));
  se->force_excitation(0.0);
  CHECK(se_reweight(se, x).abs().max().item<float>() == 0.0f);
  se->force_excitation(std::nullopt);
  CHECK_THROWS_AS(se_reweight(se, torch::rand({2, 16, 4, 2})), WiringError);
  CHECK_THROWS_AS(SEBlock(30, 16), ConfigError);

  SEBlock one(1, 1);
  {
    torch::NoGradGuard ng;
    one->fc1->weight.fill_(0.7);
    one->fc1->bias.zero_();
    one->fc2->weight.fill_(-1.3);
    one->fc2->bias.zero_();
  }
  const double c = 0.4;
  auto y = one->forward(torch::full({1, 1, 3, 3}, c));
  const double want = c / (1.0 + std::exp(1.3 * std::max(0.0, 0.7 * c)));
  CHECK(y[0][0][1][1].item<double>() == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("forward: logits shape, zeroed fusion path, unshared streams") {
  torch::manual_seed(3);
  auto model = build_model(small_options(5));
  auto soft = torch::rand({2, 3, 64, 32});
  auto ctx = torch::rand({2, 3, 64, 32});
  model->eval();
  torch::NoGradGuard ng;
  CHECK(model->forward(soft, ctx).sizes() == torch::IntArrayRef({2, 5}));
  CHECK(!torch::allclose(model->forward(soft, ctx), model->forward(ctx, soft)));

  for (int n = 1; n <= 4; ++n) {
    auto& m = model->isdc->at(n);
    m->conv->weight.zero_();
    m->norm->weight.zero_();
    m->norm->bias.zero_();
  }
  model->se->force_excitation(0.0);
  CHECK(model->features(soft, ctx).abs().max().item<float>() == 0.0f);
  auto logits = model->forward(soft, ctx);
  auto from_bias = model->head(torch::zeros({2, model->feature_dim()}));
  CHECK(torch::allclose(logits, from_bias));
  CHECK(torch::allclose(logits[0], logits[1]));
}

TEST_CASE("feature extraction is deterministic and restores the training flag") {
  torch::manual_seed(4);
  auto model = build_model(small_options());
  auto x = torch::rand({3, 3, 64, 32});
  model->train();
  auto a = extract_features(model, x, x);
  auto b = extract_features(model, x, x);
  CHECK(torch::equal(a, b));
  CHECK(a.size(1) == 256);
  CHECK(model->is_training());
  CHECK_THROWS_AS(model->features(torch::rand({1, 3, 32, 32}), torch::rand({1, 3, 32, 32})), ArgumentError);
}

TEST_CASE("every ISDC convolution and both stream stems receive gradient") {
  torch::manual_seed(5);
  auto model = build_model(small_options());
  model->train();
  auto loss = torch::nn::functional::cross_entropy(
      model->forward(torch::rand({4, 3, 64, 32}), torch::rand({4, 3, 64, 32})), torch::tensor({0, 1, 2, 0}));
  loss.backward();
  for (const auto& p : model->named_parameters()) {
    const auto& k = p.key();
    const bool watched = (k.rfind("isdc.", 0) == 0 && k.find(".conv.weight") != std::string::npos) ||
                         k == "stream1.stem.0.weight" || k == "stream2.stem.0.weight";
    if (!watched) continue;
    CAPTURE(k);
    REQUIRE(p.value().grad().defined());
    CHECK(p.value().grad().abs().sum().item<double>() > 0);
  }
}

TEST_CASE("ablation parameter groups") {
  criteria::Report r;
  criteria::ablation(r);
  require_all(r);
}

TEST_CASE("learning-rate schedule") {
  Da2sTrainConfig c;
  for (int e = 1; e <= 40; ++e) CHECK(learning_rate_for_epoch(c, e) == 0.1);
  for (int e = 41; e <= 60; ++e) CHECK(learning_rate_for_epoch(c, e) == 0.01);
  CHECK(c.momentum == 0.9);
  CHECK(c.batch_size == 50);
  CHECK(c.epochs == 60);
}

TEST_CASE("labels and training preconditions") {
  int n = 0;
  auto labels = contiguous_labels({7, 3, 7, 11}, &n);
  CHECK(n == 3);
  CHECK((labels == std::vector<std::int64_t>{1, 0, 1, 2}));

  PairSet pairs;
  pairs.soft = torch::rand({4, 3, 64, 32});
  pairs.context = torch::rand({4, 3, 64, 32});
  pairs.labels = {0, 1, 2, 3};
  CHECK_THROWS_AS(Da2sTrainer(build_model(small_options(3)), pairs, {}), DataError);
  Da2sTrainConfig tc;
  tc.batch_size = 1;
  CHECK_THROWS_AS(Da2sTrainer(build_model(small_options(4)), pairs, tc), ConfigError);
}

TEST_CASE("initial loss is close to ln N and a few epochs fit a tiny set") {
  torch::manual_seed(6);
  PairSet pairs;
  pairs.soft = torch::rand({8, 3, 64, 32}) * 2 - 1;
  pairs.context = torch::rand({8, 3, 64, 32}) * 2 - 1;
  pairs.labels = {0, 1, 2, 3, 0, 1, 2, 3};
  Da2sTrainConfig tc;
  tc.batch_size = 8;
  tc.flip = false;
  Da2sTrainer trainer(build_model(small_options(4)), pairs, tc);
  CHECK(std::fabs(trainer.initial_loss() - std::log(4.0)) < 0.1 * std::log(4.0));
  auto first = trainer.run_epoch();
  CHECK(first.epoch == 1);
  CHECK(first.lr == 0.1);
  CHECK(std::isfinite(first.loss));
}

TEST_CASE("checkpoint round trip and feature dump") {
  test_util::TempDir dir;
  torch::manual_seed(7);
  PairSet pairs;
  pairs.soft = torch::rand({4, 3, 64, 32});
  pairs.context = torch::rand({4, 3, 64, 32});
  pairs.labels = {0, 1, 0, 1};
  Da2sTrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  auto run = train_da2s(build_model(small_options(2)), pairs, tc, dir.path, 1);
  REQUIRE(run.checkpoints.size() == 1);
  auto loaded = load_model(run.checkpoints.front());
  CHECK(!loaded->is_training());
  CHECK(TensorArchive::load(run.checkpoints.front()).schema() == "da2s");
  auto f = extract_features(loaded, pairs.soft, pairs.context);
  CHECK(f.size(1) == 256);

  write_feature_dump(dir.path / "f.bin", dir.path / "f.csv", f, {5, 6, 5, 6}, {1, 2, 1, 2}, {0, 0, 1, 1});
  auto back = reideval::read_feature_dump(dir.path / "f.bin", dir.path / "f.csv");
  CHECK(back.size() == 4);
  CHECK((back.identities == std::vector<int>{5, 6, 5, 6}));
  CHECK((back.domains == std::vector<int>{0, 0, 1, 1}));
  CHECK(std::fabs(back.features(2, 7) - f[2][7].item<double>()) == 0.0);
}

TEST_CASE("pre-trained weight hook") {
  auto model = build_model(small_options());
  std::map<std::string, torch::Tensor> w;
  w["stream1.stem.0.weight"] = torch::ones({8, 3, 7, 7});
  CHECK(load_named_weights(model, w) == 1);
  CHECK(model->stream1->stem->parameters()[0].eq(1).all().item<bool>());
  w["nope"] = torch::ones({1});
  CHECK_THROWS_AS(load_named_weights(model, w), ConfigError);
  CHECK(load_named_weights(model, w, false) == 1);
  w.erase("nope");
  w["stream1.stem.0.weight"] = torch::ones({8, 3, 5, 5});
  CHECK_THROWS_AS(load_named_weights(model, w), ConfigError);
}

}
