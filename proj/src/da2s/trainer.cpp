#include "softmask/da2s/trainer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>

#include "softmask/common/errors.hpp"
#include "softmask/common/seeding.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace softmask::da2s {
namespace {

constexpr const char* kSchema = "da2s";

std::string number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

torch::Tensor index_tensor(std::span<const std::size_t> idx) {
  std::vector<std::int64_t> v(idx.begin(), idx.end());
  return torch::tensor(v, torch::kInt64);
}

std::string record_line(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + number(r.lr) + "," + number(r.loss) + "," + number(r.batch_accuracy);
}

}  // namespace

double learning_rate_for_epoch(const Da2sTrainConfig& cfg, int epoch) {
  return epoch <= cfg.decay_epoch ? cfg.lr : cfg.lr_decayed;
}

std::vector<std::int64_t> contiguous_labels(const std::vector<int>& identities, int* num_ids) {
  std::map<int, std::int64_t> ids;
  for (int id : identities) ids.emplace(id, 0);
  std::int64_t next = 0;
  for (auto& [id, label] : ids) label = next++;
  std::vector<std::int64_t> out;
  out.reserve(identities.size());
  for (int id : identities) out.push_back(ids.at(id));
  if (num_ids) *num_ids = static_cast<int>(ids.size());
  return out;
}

Da2sTrainer::Da2sTrainer(Da2sModel model, const PairSet& pairs, Da2sTrainConfig config)
    : model_(std::move(model)), pairs_(pairs), config_(config) {
  const auto n = static_cast<std::int64_t>(pairs_.size());
  if (n == 0) throw DataError("train_da2s: no training pairs");
  if (pairs_.soft.size(0) != n || pairs_.context.size(0) != n)
    throw DataError("train_da2s: image tensors and labels differ in length");
  const int num_ids = model_->options().num_ids;
  for (std::size_t i = 0; i < pairs_.labels.size(); ++i)
    if (pairs_.labels[i] < 0 || pairs_.labels[i] >= num_ids)
      throw DataError("train_da2s: label " + std::to_string(pairs_.labels[i]) + " of pair " + std::to_string(i) +
                      " outside [0, " + std::to_string(num_ids) + ")");
  if (config_.batch_size < 2) throw ConfigError("train_da2s: batch size must be >= 2 (batch norm in the head)");
  optimizer_ = std::make_unique<torch::optim::SGD>(
      model_->parameters(),
      torch::optim::SGDOptions(config_.lr).momentum(config_.momentum).weight_decay(config_.weight_decay));
}

EpochRecord Da2sTrainer::run_epoch() {
  const int epoch = epochs_done_ + 1;
  const double lr = learning_rate_for_epoch(config_, epoch);
  for (auto& group : optimizer_->param_groups())
    static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);

  std::vector<std::size_t> order(pairs_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config_.seed, {stream::kEpochOrder, static_cast<std::uint64_t>(epoch)}));
  std::shuffle(order.begin(), order.end(), rng);

  model_->train();
  double loss_sum = 0;
  std::int64_t correct = 0, seen = 0, batches = 0;
  const auto labels_all = torch::tensor(pairs_.labels, torch::kInt64);
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const auto end = std::min(order.size(), start + config_.batch_size);
    if (end - start < 2) break;  // batch norm needs two samples
    const auto b = static_cast<std::uint64_t>(start / config_.batch_size);
    torch::manual_seed(derive_seed(config_.seed, {stream::kTorch, static_cast<std::uint64_t>(epoch), b}));
    auto idx = index_tensor(std::span<const std::size_t>(order).subspan(start, end - start));
    auto soft = pairs_.soft.index_select(0, idx);
    auto context = pairs_.context.index_select(0, idx);
    auto labels = labels_all.index_select(0, idx);
    if (config_.flip) {
      std::mt19937_64 flip_rng(derive_seed(config_.seed, {stream::kFlip, static_cast<std::uint64_t>(epoch), b}));
      std::vector<std::int64_t> rows;
      for (std::int64_t i = 0; i < idx.size(0); ++i)
        if (flip_rng() & 1) rows.push_back(i);
      if (!rows.empty()) {
        auto r = torch::tensor(rows, torch::kInt64);
        soft = soft.index_put({r}, soft.index_select(0, r).flip({3}));
        context = context.index_put({r}, context.index_select(0, r).flip({3}));
      }
    }
    auto logits = model_->forward(soft, context);
    auto loss = F::cross_entropy(logits, labels);
    if (!std::isfinite(loss.item<double>()))
      throw NumericError("non-finite DA-2S loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
    optimizer_->zero_grad();
    loss.backward();
    optimizer_->step();
    loss_sum += loss.item<double>();
    correct += logits.argmax(1).eq(labels).sum().item<std::int64_t>();
    seen += idx.size(0);
    ++batches;
  }
  epochs_done_ = epoch;
  return {epoch, lr, batches ? loss_sum / static_cast<double>(batches) : 0.0,
          seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0};
}

double Da2sTrainer::initial_loss(std::size_t max_samples) {
  torch::NoGradGuard no_grad;
  const bool was_training = model_->is_training();
  std::vector<torch::Tensor> saved;
  for (const auto& b : model_->buffers()) saved.push_back(b.clone());
  model_->train();
  torch::manual_seed(derive_seed(config_.seed, {stream::kTorch, 0}));
  const auto n = static_cast<std::int64_t>(std::min(max_samples, pairs_.size()));
  auto logits = model_->forward(pairs_.soft.slice(0, 0, n), pairs_.context.slice(0, 0, n));
  auto labels = torch::tensor(std::vector<std::int64_t>(pairs_.labels.begin(), pairs_.labels.begin() + n));
  const double loss = F::cross_entropy(logits, labels).item<double>();
  auto buffers = model_->buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) buffers[i].copy_(saved[i]);
  model_->train(was_training);
  return loss;
}

double Da2sTrainer::training_accuracy() {
  torch::NoGradGuard no_grad;
  const bool was_training = model_->is_training();
  model_->eval();
  std::int64_t correct = 0;
  const auto n = static_cast<std::int64_t>(pairs_.size());
  const auto labels = torch::tensor(pairs_.labels, torch::kInt64);
  for (std::int64_t s = 0; s < n; s += 100) {
    const auto e = std::min(n, s + 100);
    auto logits = model_->forward(pairs_.soft.slice(0, s, e), pairs_.context.slice(0, s, e));
    correct += logits.argmax(1).eq(labels.slice(0, s, e)).sum().item<std::int64_t>();
  }
  model_->train(was_training);
  return static_cast<double>(correct) / static_cast<double>(n);
}

void put_model_header(TensorArchive& a, const Da2sOptions& o) {
  const auto& b = o.backbone;
  a.set("variant", variant_name(b.variant));
  a.set("growth_rate", static_cast<std::int64_t>(b.growth_rate));
  a.set("block_layers", std::to_string(b.block_layers[0]) + "-" + std::to_string(b.block_layers[1]) + "-" +
                            std::to_string(b.block_layers[2]) + "-" + std::to_string(b.block_layers[3]));
  a.set("init_channels", static_cast<std::int64_t>(b.init_channels));
  a.set("bottleneck_factor", static_cast<std::int64_t>(b.bottleneck_factor));
  a.set("input_height", b.input_height);
  a.set("input_width", b.input_width);
  a.set("num_ids", static_cast<std::int64_t>(o.num_ids));
  a.set("use_isdc", static_cast<std::int64_t>(o.use_isdc));
  a.set("use_se", static_cast<std::int64_t>(o.use_se));
  a.set("isdc_se", static_cast<std::int64_t>(o.isdc_se));
  a.set("se_reduction", static_cast<std::int64_t>(o.se_reduction));
  a.set("fc1_units", static_cast<std::int64_t>(o.fc1_units));
  a.set("dropout", o.dropout);
}

Da2sOptions model_options_from(const TensorArchive& a) {
  if (a.schema() != kSchema) throw ConfigError("checkpoint schema '" + a.schema() + "' is not da2s");
  Da2sOptions o;
  auto& b = o.backbone;
  b.variant = parse_variant(a.get("variant"));
  b.growth_rate = static_cast<int>(a.get_int("growth_rate"));
  std::stringstream ss(a.get("block_layers"));
  std::string part;
  for (std::size_t i = 0; i < 4 && std::getline(ss, part, '-'); ++i) b.block_layers[i] = std::stoi(part);
  b.init_channels = static_cast<int>(a.get_int("init_channels"));
  b.bottleneck_factor = static_cast<int>(a.get_int("bottleneck_factor"));
  b.input_height = a.get_int("input_height");
  b.input_width = a.get_int("input_width");
  o.num_ids = static_cast<int>(a.get_int("num_ids"));
  o.use_isdc = a.get_int("use_isdc") != 0;
  o.use_se = a.get_int("use_se") != 0;
  o.isdc_se = a.get_int("isdc_se") != 0;
  o.se_reduction = static_cast<int>(a.get_int("se_reduction"));
  o.fc1_units = static_cast<int>(a.get_int("fc1_units"));
  o.dropout = a.get_double("dropout");
  return o;
}

TensorArchive Da2sTrainer::checkpoint() const {
  TensorArchive a(kSchema);
  put_model_header(a, model_->options());
  a.set("epoch", static_cast<std::int64_t>(epochs_done_));
  a.set("seed", std::to_string(config_.seed));
  a.set("lr", config_.lr);
  a.set("lr_decayed", config_.lr_decayed);
  a.set("decay_epoch", static_cast<std::int64_t>(config_.decay_epoch));
  a.set("batch_size", static_cast<std::int64_t>(config_.batch_size));
  put_module(a, "model", *model_);
  put_sgd_state(a, "opt", *model_, *optimizer_);
  return a;
}

void Da2sTrainer::restore(const TensorArchive& a) {
  const auto o = model_options_from(a);
  const auto& m = model_->options();
  if (o.num_ids != m.num_ids || o.backbone.block_layers != m.backbone.block_layers ||
      o.backbone.growth_rate != m.backbone.growth_rate || o.use_isdc != m.use_isdc || o.use_se != m.use_se ||
      o.isdc_se != m.isdc_se)
    throw ConfigError("da2s checkpoint was written for a different model configuration");
  load_module(a, "model", *model_);
  load_sgd_state(a, "opt", *model_, *optimizer_);
  epochs_done_ = static_cast<int>(a.get_int("epoch"));
}

Da2sModel load_model(const fs::path& checkpoint) {
  const auto a = TensorArchive::load(checkpoint);
  auto model = build_model(model_options_from(a));
  load_module(a, "model", *model);
  model->eval();
  return model;
}

Da2sRun train_da2s(Da2sModel model, const PairSet& pairs, const Da2sTrainConfig& config, const fs::path& out_dir,
                   int checkpoint_every, bool resume, const Da2sEpochCallback& on_epoch) {
  Da2sTrainer trainer(std::move(model), pairs, config);
  const auto ckpt_dir = out_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  Da2sRun run;
  run.log = out_dir / "train_log.csv";
  std::string log_text = "epoch,lr,loss,batch_accuracy\n";
  if (resume) {
    std::optional<fs::path> latest;
    if (fs::is_directory(ckpt_dir))
      for (const auto& e : fs::directory_iterator(ckpt_dir))
        if (e.path().extension() == ".ckpt" && (!latest || e.path().filename() > latest->filename()))
          latest = e.path();
    if (latest) {
      trainer.restore(TensorArchive::load(*latest));
      run.checkpoints.push_back(*latest);
      if (std::ifstream in(run.log); in) {
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line))
          if (!line.empty() && std::stoi(line.substr(0, line.find(','))) <= trainer.epochs_done())
            log_text += line + "\n";
      }
    }
  }
  write_file_atomically(run.log, log_text);
  while (trainer.epochs_done() < config.epochs) {
    auto rec = trainer.run_epoch();
    run.records.push_back(rec);
    {
      std::ofstream out(run.log, std::ios::app);
      out << record_line(rec) << '\n';
    }
    if (rec.epoch % std::max(1, checkpoint_every) == 0 || rec.epoch == config.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", rec.epoch);
      trainer.checkpoint().save(ckpt_dir / name);
      run.checkpoints.push_back(ckpt_dir / name);
    }
    if (on_epoch) on_epoch(rec);
  }
  return run;
}

void write_feature_dump(const fs::path& bin_path, const fs::path& csv_path, const torch::Tensor& features,
                        const std::vector<int>& identities, const std::vector<int>& cameras,
                        const std::vector<int>& domains) {
  static_assert(std::endian::native == std::endian::little, "feature dumps assume a little-endian host");
  if (features.dim() != 2) throw ArgumentError("write_feature_dump: expected [N, D] features");
  const auto n = static_cast<std::size_t>(features.size(0));
  if (identities.size() != n || cameras.size() != n || domains.size() != n)
    throw ArgumentError("write_feature_dump: label vectors must have one entry per row");
  auto f = features.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  write_file_atomically(bin_path, std::string(static_cast<const char*>(f.data_ptr()),
                                              static_cast<std::size_t>(f.numel()) * sizeof(float)));
  std::string csv = "index,identity,camera,domain\n";
  for (std::size_t i = 0; i < n; ++i)
    csv += std::to_string(i) + "," + std::to_string(identities[i]) + "," + std::to_string(cameras[i]) + "," +
           std::to_string(domains[i]) + "\n";
  write_file_atomically(csv_path, csv);
}

}  // namespace softmask::da2s
