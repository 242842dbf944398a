#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>

#include "softmask/domaindata/types.hpp"

namespace softmask::domaindata {

struct LayoutSpec {
  std::int64_t height = 64;
  std::int64_t width = 32;
  bool masks_required = false;
  // 0 infers K as max(domain) + 1.
  int num_domains = 0;
};

struct ParsedName {
  int identity = 0;
  int camera = 0;
  int domain = 0;
  int sequence = 0;
};

/// Parses `<id>_c<camera>_d<domain>_<seq>.png`; throws ParseError naming the file.
ParsedName parse_sample_name(const std::string& filename);

/// Loads every `*.png` directly under `root` (sorted by file name) plus
/// masks from `root/masks/` with the same file name.
Corpus load_corpus(const std::filesystem::path& root, const LayoutSpec& layout);

/// Writes images (8-bit RGB PNG) and masks (8-bit grayscale PNG under masks/).
void write_corpus(const Corpus& corpus, const std::filesystem::path& root);

/// [3, H, W] tensor in [-1, 1] to an 8-bit RGB PNG and back.
void write_image_png(const torch::Tensor& image, const std::filesystem::path& path);
torch::Tensor read_image_png(const std::filesystem::path& path, std::int64_t height, std::int64_t width);
void write_mask_png(const torch::Tensor& mask, const std::filesystem::path& path);
torch::Tensor read_mask_png(const std::filesystem::path& path, std::int64_t height, std::int64_t width);

}  // namespace softmask::domaindata
