#include "softmask/sbsgan/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "softmask/common/errors.hpp"
#include "softmask/common/seeding.hpp"

namespace fs = std::filesystem;

namespace softmask::sbsgan {
namespace {

constexpr const char* kSchema = "sbsgan";

std::string number(double v) {
  if (std::isnan(v)) return {};
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_field(const std::string& s) {
  if (s.empty()) return std::nan("");
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("bad loss log field '" + s + "'");
  return v;
}

const char* variant_name(AdversarialVariant v) { return v == AdversarialVariant::kWassersteinGp ? "wgan-gp" : "ce"; }
const char* reduction_name(NormReduction r) { return r == NormReduction::kL2 ? "l2" : "mse"; }

void check_header(const TensorArchive& a, const std::string& key, std::int64_t expected) {
  if (!a.has(key) || a.get_int(key) != expected)
    throw ConfigError("checkpoint " + key + " = " + (a.has(key) ? a.get(key) : std::string("<missing>")) +
                      " does not match the configured " + std::to_string(expected));
}

}  // namespace

std::string format_loss_row(const LossRow& r) {
  std::string out = std::to_string(r.step);
  for (double v : {r.adv_d, r.adv_g, r.cls_r, r.cls_f, r.rec, r.idc, r.bgs, r.sc}) out += "," + number(v);
  return out;
}

std::vector<LossRow> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read loss log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kLossCsvHeader) throw ParseError("unexpected loss log header in " + path.string());
  std::vector<LossRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    while (f.size() < 9) f.emplace_back();
    if (f.size() != 9) throw ParseError("loss log row has " + std::to_string(f.size()) + " fields: " + line);
    LossRow r;
    r.step = std::stoll(f[0]);
    r.adv_d = parse_field(f[1]);
    r.adv_g = parse_field(f[2]);
    r.cls_r = parse_field(f[3]);
    r.cls_f = parse_field(f[4]);
    r.rec = parse_field(f[5]);
    r.idc = parse_field(f[6]);
    r.bgs = parse_field(f[7]);
    r.sc = parse_field(f[8]);
    r.generator = !std::isnan(r.adv_g);
    rows.push_back(r);
  }
  return rows;
}

double generator_total(const LossRow& r, const LossWeights& w) {
  return r.adv_g + r.cls_f + w.rec * r.rec + w.idc * r.idc + w.bgs * r.bgs + w.sc * r.sc;
}

SbsganTrainer::SbsganTrainer(const domaindata::Corpus& corpus, SbsganConfig config)
    : corpus_(corpus), config_(config) {
  if (corpus_.empty()) throw DataError("train_sbsgan: corpus is empty");
  if (corpus_.num_domains() < 2) throw ConfigError("train_sbsgan: K must be >= 2");
  if (!corpus_.all_masked()) throw DataError("train_sbsgan: every training sample needs a foreground mask");
  if (config_.batch_size == 0 || config_.critic_steps < 0 || config_.epochs < 0)
    throw ConfigError("train_sbsgan: batch size, critic steps and epochs must be positive");
  torch::manual_seed(derive_seed(config_.seed, {stream::kInit}));
  g_ = Generator(GeneratorOptions{corpus_.num_domains(), config_.base_channels, config_.residual_blocks});
  d_ = Discriminator(DiscriminatorOptions{corpus_.num_domains(), config_.disc_channels, config_.disc_layers,
                                          corpus_.height(), corpus_.width()});
  opt_g_ = std::make_unique<torch::optim::Adam>(
      g_->parameters(), torch::optim::AdamOptions(config_.lr_g).betas({config_.beta1, config_.beta2}));
  opt_d_ = std::make_unique<torch::optim::Adam>(
      d_->parameters(), torch::optim::AdamOptions(config_.lr_d).betas({config_.beta1, config_.beta2}));
}

std::size_t SbsganTrainer::generator_steps_per_epoch() const {
  return (corpus_.size() + config_.batch_size - 1) / config_.batch_size;
}

LossRow SbsganTrainer::critic_update() {
  ++step_;
  torch::manual_seed(derive_seed(config_.seed, {stream::kTorch, static_cast<std::uint64_t>(step_)}));
  std::mt19937_64 rng(derive_seed(config_.seed, {stream::kCriticBatch, static_cast<std::uint64_t>(step_)}));
  auto batch = make_gan_batch(corpus_, domaindata::compose_gan_batch(corpus_, config_.batch_size, rng));
  auto terms = objective_d(g_, d_, batch, config_.objective);
  require_finite(terms.adv, "loss_adv_d", step_);
  require_finite(terms.cls, "loss_cls_r", step_);
  opt_d_->zero_grad();
  terms.total.backward();
  opt_d_->step();
  LossRow row;
  row.step = step_;
  row.adv_d = terms.adv.item<double>();
  row.cls_r = terms.cls.item<double>();
  return row;
}

LossRow SbsganTrainer::generator_update(std::span<const std::size_t> members) {
  ++step_;
  torch::manual_seed(derive_seed(config_.seed, {stream::kTorch, static_cast<std::uint64_t>(step_)}));
  std::mt19937_64 rng(derive_seed(config_.seed, {stream::kGeneratorPlan, static_cast<std::uint64_t>(step_)}));
  auto batch = make_gan_batch(corpus_, domaindata::plan_gan_batch(corpus_, members, rng));
  auto terms = objective_g(g_, d_, batch, config_.objective);
  const std::pair<const char*, torch::Tensor*> named[] = {{"loss_adv_g", &terms.adv}, {"loss_cls_f", &terms.cls},
                                                          {"loss_rec", &terms.rec},   {"loss_idc", &terms.idc},
                                                          {"loss_bgs", &terms.bgs},   {"loss_sc", &terms.sc}};
  for (const auto& [name, t] : named) require_finite(*t, name, step_);
  opt_g_->zero_grad();
  terms.total.backward();
  opt_g_->step();
  LossRow row;
  row.step = step_;
  row.generator = true;
  row.adv_g = terms.adv.item<double>();
  row.cls_f = terms.cls.item<double>();
  row.rec = terms.rec.item<double>();
  row.idc = terms.idc.item<double>();
  row.bgs = terms.bgs.item<double>();
  row.sc = terms.sc.item<double>();
  return row;
}

std::vector<LossRow> SbsganTrainer::run_epoch() {
  const int epoch = epochs_done_ + 1;
  std::vector<std::size_t> order(corpus_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config_.seed, {stream::kEpochOrder, static_cast<std::uint64_t>(epoch)}));
  std::shuffle(order.begin(), order.end(), rng);

  g_->train();
  d_->train();
  std::vector<LossRow> rows;
  const auto B = config_.batch_size;
  for (std::size_t start = 0; start < order.size(); start += B) {
    for (int j = 0; j < config_.critic_steps; ++j) rows.push_back(critic_update());
    const auto end = std::min(order.size(), start + B);
    rows.push_back(generator_update(std::span<const std::size_t>(order).subspan(start, end - start)));
  }
  epochs_done_ = epoch;
  return rows;
}

TensorArchive SbsganTrainer::checkpoint() const {
  TensorArchive a(kSchema);
  a.set("K", static_cast<std::int64_t>(corpus_.num_domains()));
  a.set("height", corpus_.height());
  a.set("width", corpus_.width());
  a.set("base_channels", static_cast<std::int64_t>(config_.base_channels));
  a.set("residual_blocks", static_cast<std::int64_t>(config_.residual_blocks));
  a.set("disc_channels", static_cast<std::int64_t>(config_.disc_channels));
  a.set("disc_layers", static_cast<std::int64_t>(config_.disc_layers));
  a.set("lambda_rec", config_.objective.weights.rec);
  a.set("lambda_idc", config_.objective.weights.idc);
  a.set("lambda_bgs", config_.objective.weights.bgs);
  a.set("lambda_sc", config_.objective.weights.sc);
  a.set("adversarial", std::string(variant_name(config_.objective.adversarial.variant)));
  a.set("bgs_reduction", std::string(reduction_name(config_.objective.bgs_reduction)));
  a.set("lr_g", config_.lr_g);
  a.set("lr_d", config_.lr_d);
  a.set("batch_size", static_cast<std::int64_t>(config_.batch_size));
  a.set("critic_steps", static_cast<std::int64_t>(config_.critic_steps));
  a.set("seed", std::to_string(config_.seed));
  a.set("step", step_);
  a.set("epoch", static_cast<std::int64_t>(epochs_done_));
  put_module(a, "G", *g_);
  put_module(a, "D", *d_);
  put_adam_state(a, "optG", *g_, *opt_g_);
  put_adam_state(a, "optD", *d_, *opt_d_);
  return a;
}

void SbsganTrainer::restore(const TensorArchive& a) {
  if (a.schema() != kSchema) throw ConfigError("checkpoint schema '" + a.schema() + "' is not sbsgan");
  check_header(a, "K", corpus_.num_domains());
  check_header(a, "height", corpus_.height());
  check_header(a, "width", corpus_.width());
  check_header(a, "base_channels", config_.base_channels);
  check_header(a, "residual_blocks", config_.residual_blocks);
  check_header(a, "disc_channels", config_.disc_channels);
  check_header(a, "disc_layers", config_.disc_layers);
  load_module(a, "G", *g_);
  load_module(a, "D", *d_);
  load_adam_state(a, "optG", *g_, *opt_g_);
  load_adam_state(a, "optD", *d_, *opt_d_);
  step_ = a.get_int("step");
  epochs_done_ = static_cast<int>(a.get_int("epoch"));
}

std::optional<fs::path> latest_checkpoint(const fs::path& out_dir) {
  const auto dir = out_dir / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && e.path().extension() == ".ckpt")
      if (!best || name > best->filename().string()) best = e.path();
  }
  return best;
}

SbsganRun train_sbsgan(const domaindata::Corpus& corpus, const SbsganConfig& config, const fs::path& out_dir,
                       bool resume, const EpochCallback& on_epoch) {
  SbsganTrainer trainer(corpus, config);
  fs::create_directories(out_dir / "checkpoints");
  SbsganRun run;
  run.loss_log = out_dir / "losses.csv";

  std::string log_text = std::string(kLossCsvHeader) + "\n";
  if (resume) {
    if (auto ckpt = latest_checkpoint(out_dir)) {
      trainer.restore(TensorArchive::load(*ckpt));
      if (fs::exists(run.loss_log))
        for (const auto& r : read_loss_log(run.loss_log))
          if (r.step <= trainer.step()) log_text += format_loss_row(r) + "\n";
      for (int e = 1; e <= trainer.epochs_done(); ++e) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d.ckpt", e);
        if (fs::exists(out_dir / "checkpoints" / name)) run.checkpoints.push_back(out_dir / "checkpoints" / name);
      }
    }
  }
  run.start_epoch = trainer.epochs_done() + 1;
  write_file_atomically(run.loss_log, log_text);

  while (trainer.epochs_done() < config.epochs) {
    auto rows = trainer.run_epoch();
    {
      std::ofstream out(run.loss_log, std::ios::app);
      for (const auto& r : rows) out << format_loss_row(r) << '\n';
      if (!out) throw DataError("cannot append to " + run.loss_log.string());
    }
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.ckpt", trainer.epochs_done());
    const auto path = out_dir / "checkpoints" / name;
    trainer.checkpoint().save(path);
    run.checkpoints.push_back(path);
    if (on_epoch) on_epoch(trainer.epochs_done(), rows);
  }
  return run;
}

Generator load_generator(const fs::path& checkpoint) {
  const auto a = TensorArchive::load(checkpoint);
  if (a.schema() != kSchema) throw ConfigError("checkpoint schema '" + a.schema() + "' is not sbsgan");
  Generator g(GeneratorOptions{static_cast<int>(a.get_int("K")), static_cast<int>(a.get_int("base_channels")),
                               static_cast<int>(a.get_int("residual_blocks"))});
  load_module(a, "G", *g);
  g->eval();
  return g;
}

}  // namespace softmask::sbsgan
