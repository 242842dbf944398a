#include "softmask/da2s/backbone.hpp"

#include "softmask/common/errors.hpp"

namespace softmask::da2s {
namespace {

std::string dims(std::int64_t c, std::int64_t h, std::int64_t w) {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

}  // namespace

BackboneConfig BackboneConfig::full() {
  BackboneConfig c;
  c.variant = Variant::kFull;
  c.growth_rate = 32;
  c.block_layers = {6, 12, 24, 16};
  c.init_channels = 64;
  c.input_height = 256;
  c.input_width = 128;
  return c;
}

BackboneConfig BackboneConfig::mini() { return BackboneConfig{}; }

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kMini: return "mini";
    default: return "custom";
  }
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "mini") return Variant::kMini;
  if (name == "custom") return Variant::kCustom;
  throw ConfigError("unknown backbone variant '" + name + "' (expected full, mini or custom)");
}

WiringTable compute_wiring(const BackboneConfig& cfg) {
  WiringTable t;
  // conv0 7x7/2 pad 3, then max-pool 3x3/2 pad 1
  std::int64_t h = window_out(window_out(cfg.input_height, 7, 2, 3), 3, 2, 1);
  std::int64_t w = window_out(window_out(cfg.input_width, 7, 2, 3), 3, 2, 1);
  std::int64_t c = cfg.init_channels;
  t.taps[0] = {"pool", h, w, c};
  for (int b = 0; b < 4; ++b) {
    c += static_cast<std::int64_t>(cfg.block_layers[static_cast<std::size_t>(b)]) * cfg.growth_rate;
    if (b < 3) {
      c /= 2;
      h = window_out(h, 2, 2, 0);
      w = window_out(w, 2, 2, 0);
      t.taps[static_cast<std::size_t>(b + 1)] = {"block" + std::to_string(b + 1), h, w, c};
    } else {
      t.taps[4] = {"final", h, w, c};
    }
  }
  for (int n = 0; n < 4; ++n) {
    const auto& tap = t.taps[static_cast<std::size_t>(n)];
    auto& m = t.isdc[static_cast<std::size_t>(n)];
    m.index = n + 1;
    m.stride = kIsdcStrides[static_cast<std::size_t>(n)];
    m.in_channels = tap.fused_channels();
    m.out_channels = 2 * m.in_channels;
    m.in_height = tap.height;
    m.in_width = tap.width;
    m.out_height = window_out(tap.height, 3, m.stride, 1);
    m.out_width = window_out(tap.width, 3, m.stride, 1);
  }
  return t;
}

void validate_wiring(const WiringTable& t) {
  for (const auto& tap : t.taps)
    if (tap.height < 1 || tap.width < 1 || tap.channels < 1)
      throw WiringError("tap '" + tap.name + "' has empty shape " + dims(tap.channels, tap.height, tap.width));
  for (std::size_t n = 0; n < 4; ++n) {
    const auto& m = t.isdc[n];
    const auto& next = t.taps[n + 1];
    // O_n is added to the tap feeding module n+1, or to the re-weighted final tap.
    if (m.out_channels != next.fused_channels() || m.out_height != next.height || m.out_width != next.width)
      throw WiringError("tap '" + next.name + "': ISDC " + std::to_string(m.index) + " yields " +
                        dims(m.out_channels, m.out_height, m.out_width) + " but the concatenated tap is " +
                        dims(next.fused_channels(), next.height, next.width));
  }
}

WiringTable checked_wiring(const BackboneConfig& cfg) {
  if (cfg.growth_rate < 1 || cfg.init_channels < 1 || cfg.bottleneck_factor < 1)
    throw ConfigError("backbone: growth rate, initial channels and bottleneck factor must be positive");
  for (int l : cfg.block_layers)
    if (l < 1) throw ConfigError("backbone: every dense block needs at least one layer");
  if (cfg.input_height < 1 || cfg.input_width < 1) throw ConfigError("backbone: input size must be positive");
  auto t = compute_wiring(cfg);
  validate_wiring(t);
  return t;
}

}  // namespace softmask::da2s
