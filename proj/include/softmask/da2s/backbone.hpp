#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace softmask::da2s {

enum class Variant { kFull, kMini, kCustom };

struct BackboneConfig {
  Variant variant = Variant::kMini;
  int growth_rate = 8;
  std::array<int, 4> block_layers{3, 6, 12, 8};
  int init_channels = 8;
  int bottleneck_factor = 4;
  std::int64_t input_height = 64;
  std::int64_t input_width = 32;

  /// DenseNet-121 (growth 32, blocks 6-12-24-16, 64 stem channels) at 256x128.
  static BackboneConfig full();
  /// Same proportions at growth 8 with 8 stem channels, 64x32 input.
  static BackboneConfig mini();
};

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

/// Shape of one tap, per stream. The ISDC stack sees both streams
/// concatenated, i.e. 2 * channels.
struct TapShape {
  std::string name;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t channels = 0;
  std::int64_t fused_channels() const { return 2 * channels; }
};

struct IsdcShape {
  int index = 0;  // 1-based
  int stride = 1;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t in_height = 0, in_width = 0;
  std::int64_t out_height = 0, out_width = 0;
};

/// Taps: pool, block1, block2, block3 (each after its transition) and
/// final (dense block 4 output after the last norm).
struct WiringTable {
  std::array<TapShape, 5> taps;
  std::array<IsdcShape, 4> isdc;
  std::int64_t feature_dim() const { return taps[4].fused_channels(); }
};

inline constexpr std::array<int, 4> kIsdcStrides{2, 2, 2, 1};

/// Spatial size of a convolution or pooling window (floor mode).
constexpr std::int64_t window_out(std::int64_t in, int kernel, int stride, int padding) {
  const std::int64_t span = in + 2 * padding - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

/// Propagates shapes through the configured streams and ISDC stack.
WiringTable compute_wiring(const BackboneConfig& cfg);

/// Throws WiringError naming the first tap whose ISDC input or output
/// disagrees with the tap table.
void validate_wiring(const WiringTable& table);

/// compute_wiring + validate_wiring, plus basic range checks.
WiringTable checked_wiring(const BackboneConfig& cfg);

}  // namespace softmask::da2s
