#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "softmask/common/archive.hpp"
#include "softmask/da2s/model.hpp"

namespace softmask::da2s {

struct Da2sTrainConfig {
  int epochs = 60;
  // Epochs 1..decay_epoch use lr, later epochs lr_decayed.
  int decay_epoch = 40;
  double lr = 0.1;
  double lr_decayed = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 50;
  bool flip = true;
  std::uint64_t seed = 0;
};

double learning_rate_for_epoch(const Da2sTrainConfig& cfg, int epoch);

/// Training pairs: soft-mask image, context image and identity label.
struct PairSet {
  torch::Tensor soft;     // [N, 3, H, W]
  torch::Tensor context;  // [N, 3, H, W]
  std::vector<std::int64_t> labels;
  std::size_t size() const { return labels.size(); }
};

/// Maps arbitrary identity values to 0..N-1 in ascending order.
std::vector<std::int64_t> contiguous_labels(const std::vector<int>& identities, int* num_ids = nullptr);

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double loss = 0;            // mean cross-entropy over the epoch's batches
  double batch_accuracy = 0;  // train-mode predictions during the epoch
};

class Da2sTrainer {
 public:
  Da2sTrainer(Da2sModel model, const PairSet& pairs, Da2sTrainConfig config);

  EpochRecord run_epoch();
  /// Cross-entropy of the model in training mode on one fixed batch,
  /// without updating anything.
  double initial_loss(std::size_t max_samples = 200);
  /// Inference-mode identity accuracy over the training pairs.
  double training_accuracy();

  int epochs_done() const { return epochs_done_; }
  Da2sModel& model() { return model_; }
  const Da2sTrainConfig& config() const { return config_; }

  TensorArchive checkpoint() const;
  void restore(const TensorArchive& archive);

 private:
  Da2sModel model_;
  const PairSet& pairs_;
  Da2sTrainConfig config_;
  std::unique_ptr<torch::optim::SGD> optimizer_;
  int epochs_done_ = 0;
};

/// Archive header keys needed to rebuild a model.
void put_model_header(TensorArchive& archive, const Da2sOptions& options);
Da2sOptions model_options_from(const TensorArchive& archive);
/// Rebuilds a model from a `da2s` checkpoint, in inference mode.
Da2sModel load_model(const std::filesystem::path& checkpoint);

struct Da2sRun {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path log;  // epoch,lr,loss,batch_accuracy
  std::vector<EpochRecord> records;
};

using Da2sEpochCallback = std::function<void(const EpochRecord&)>;

/// Trains and writes `<out>/checkpoints/epoch_NNNN.ckpt` every
/// `checkpoint_every` epochs (and at the end) plus `<out>/train_log.csv`.
Da2sRun train_da2s(Da2sModel model, const PairSet& pairs, const Da2sTrainConfig& config,
                   const std::filesystem::path& out_dir, int checkpoint_every = 10, bool resume = false,
                   const Da2sEpochCallback& on_epoch = {});

/// Little-endian float32 rows plus `index,identity,camera,domain` CSV.
void write_feature_dump(const std::filesystem::path& bin_path, const std::filesystem::path& csv_path,
                        const torch::Tensor& features, const std::vector<int>& identities,
                        const std::vector<int>& cameras, const std::vector<int>& domains);

}  // namespace softmask::da2s
