#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softmask/common/archive.hpp"
#include "softmask/domaindata/types.hpp"
#include "softmask/sbsgan/objectives.hpp"

namespace softmask::sbsgan {

struct SbsganConfig {
  int base_channels = 32;
  int residual_blocks = 6;
  int disc_channels = 32;
  int disc_layers = 3;
  ObjectiveOptions objective;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::size_t batch_size = 16;
  int epochs = 5;
  int critic_steps = 5;
  std::uint64_t seed = 0;
};

/// One optimizer update. Discriminator rows fill adv_d and cls_r; generator
/// rows fill the other six terms. Unused fields are NaN.
struct LossRow {
  std::int64_t step = 0;
  bool generator = false;
  double adv_d = std::nan(""), adv_g = std::nan(""), cls_r = std::nan(""), cls_f = std::nan("");
  double rec = std::nan(""), idc = std::nan(""), bgs = std::nan(""), sc = std::nan("");
};

inline constexpr const char* kLossCsvHeader = "step,loss_adv_d,loss_adv_g,loss_cls_r,loss_cls_f,loss_rec,loss_idc,loss_bgs,loss_sc";

/// Shortest round-trip decimal text; NaN fields are left empty.
std::string format_loss_row(const LossRow& row);
std::vector<LossRow> read_loss_log(const std::filesystem::path& path);
/// The weighted generator objective recomputed from a logged generator row.
double generator_total(const LossRow& row, const LossWeights& weights);

class SbsganTrainer {
 public:
  SbsganTrainer(const domaindata::Corpus& corpus, SbsganConfig config);

  /// One epoch: ceil(N / batch) generator updates over a shuffled pass of
  /// the corpus, each preceded by `critic_steps` discriminator updates on
  /// independently drawn batches.
  std::vector<LossRow> run_epoch();

  int epochs_done() const { return epochs_done_; }
  std::int64_t step() const { return step_; }
  std::size_t generator_steps_per_epoch() const;

  TensorArchive checkpoint() const;
  /// Restores networks, optimizer moments and counters. Throws ConfigError
  /// when the archive was written for a different architecture or K.
  void restore(const TensorArchive& archive);

  Generator& generator() { return g_; }
  Discriminator& discriminator() { return d_; }
  const SbsganConfig& config() const { return config_; }

 private:
  LossRow critic_update();
  LossRow generator_update(std::span<const std::size_t> members);

  const domaindata::Corpus& corpus_;
  SbsganConfig config_;
  Generator g_{nullptr};
  Discriminator d_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::int64_t step_ = 0;
  int epochs_done_ = 0;
};

struct SbsganRun {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path loss_log;
  int start_epoch = 1;
};

using EpochCallback = std::function<void(int epoch, const std::vector<LossRow>&)>;

/// Trains for config.epochs epochs, writing `<out>/checkpoints/epoch_NNNN.ckpt`
/// and `<out>/losses.csv`. With `resume`, continues after the newest
/// checkpoint and drops log rows written after it.
SbsganRun train_sbsgan(const domaindata::Corpus& corpus, const SbsganConfig& config,
                       const std::filesystem::path& out_dir, bool resume = false,
                       const EpochCallback& on_epoch = {});

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& out_dir);

/// Rebuilds the generator stored in a checkpoint.
Generator load_generator(const std::filesystem::path& checkpoint);

}  // namespace softmask::sbsgan
