#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace softmask {

/// One record of the archive manifest. Offsets are relative to the start
/// of the payload block.
struct ArchiveEntry {
  std::string name;
  std::string dtype;  // "float32" or "int64"
  std::vector<std::int64_t> shape;
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
};

/// Checkpoint container shared by the sbsgan and da2s trainers.
///
/// On disk the archive is a text preamble (magic, schema tag, header
/// key/value pairs, tensor manifest) followed by one binary payload block of
/// little-endian tensors in manifest order:
///
///     SOFTMASK-ARCHIVE
///     schema sbsgan
///     version 1
///     header 3
///     K 2
///     lambda_rec 10
///     step 120
///     manifest 2
///     G.trunk.0.weight float32 16,5,7,7 0 15680
///     ...
///     payload
///     <bytes>
class TensorArchive {
 public:
  static constexpr int kVersion = 1;

  TensorArchive() = default;
  explicit TensorArchive(std::string schema) : schema_(std::move(schema)) {}

  const std::string& schema() const { return schema_; }
  int version() const { return version_; }

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  bool has(const std::string& key) const { return header_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  const std::map<std::string, std::string>& header() const { return header_; }

  /// Stores a contiguous CPU copy; float tensors are narrowed to float32.
  void put(const std::string& name, const torch::Tensor& tensor);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const torch::Tensor& tensor(const std::string& name) const;
  std::vector<std::string> names() const;

  /// Manifest as it would be written (offsets assigned in name order).
  std::vector<ArchiveEntry> manifest() const;

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::string schema_;
  int version_ = kVersion;
  std::map<std::string, std::string> header_;
  std::map<std::string, torch::Tensor> tensors_;
};

/// Parameters and buffers of `module` under `prefix.` names.
void put_module(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module);
/// Copies archived values back into an already constructed module. Every
/// parameter and buffer must be present with a matching shape.
void load_module(const TensorArchive& archive, const std::string& prefix, torch::nn::Module& module);

/// Adam moments and step counts keyed by the module's parameter names.
void put_adam_state(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module,
                    torch::optim::Adam& optimizer);
void load_adam_state(const TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module,
                     torch::optim::Adam& optimizer);

void put_sgd_state(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module,
                   torch::optim::SGD& optimizer);
void load_sgd_state(const TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module,
                    torch::optim::SGD& optimizer);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);

}  // namespace softmask
