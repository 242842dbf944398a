#include "softmask/domaindata/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "softmask/common/errors.hpp"
#include "softmask/common/seeding.hpp"

namespace softmask::domaindata {
namespace {

constexpr std::uint64_t kIdentityTag = 0x1d;
constexpr std::uint64_t kSampleTag = 0x5a;

// Figure proportions, as fractions of body height.
constexpr double kHeadCenter = 0.09;
constexpr double kHeadRx = 0.07;
constexpr double kHeadRy = 0.09;
constexpr double kTorsoTop = 0.18;
constexpr double kTorsoBottom = 0.57;
constexpr double kTorsoWidth = 0.38;
constexpr double kMaxHeightFraction = 0.94;
constexpr double kMaxWidthFraction = 0.9;
constexpr double kMaxWidthFactor = 1.15;
constexpr double kMinWidthFactor = 0.85;

// Foreground area of a layout divided by body_height^2.
double area_factor(double width_factor) {
  const double head = std::numbers::pi * kHeadRx * kHeadRy;
  const double torso = kTorsoWidth * width_factor * (kTorsoBottom - kTorsoTop);
  const double legs = 2.0 * 0.36 * kTorsoWidth * width_factor * (1.0 - kTorsoBottom);
  return head + torso + legs;
}

double max_body_height(const SyntheticSpec& spec, double width_factor) {
  const double by_height = kMaxHeightFraction * static_cast<double>(spec.height);
  const double by_width = kMaxWidthFraction * static_cast<double>(spec.width) / (kTorsoWidth * width_factor);
  return std::min(by_height, by_width);
}

struct IdentityLook {
  double width_factor;
  double coverage;
  std::array<float, 3> head, torso, legs;
};

IdentityLook identity_look(const SyntheticSpec& spec, int identity) {
  std::mt19937_64 rng(derive_seed(spec.seed, {kIdentityTag, static_cast<std::uint64_t>(identity)}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  IdentityLook look{};
  look.width_factor = kMinWidthFactor + (kMaxWidthFactor - kMinWidthFactor) * u01(rng);
  const double span = spec.mask_coverage_max - spec.mask_coverage_min;
  look.coverage = spec.mask_coverage_min + span * (0.2 + 0.6 * u01(rng));
  std::uniform_real_distribution<float> cloth(-0.85f, 0.85f);
  std::uniform_real_distribution<float> skin(-0.1f, 0.1f);
  look.head = {0.55f + skin(rng), 0.15f + skin(rng), -0.1f + skin(rng)};
  for (auto& c : look.torso) c = cloth(rng);
  for (auto& c : look.legs) c = cloth(rng);
  return look;
}

FigureLayout draw_layout(const SyntheticSpec& spec, const IdentityLook& look, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double span = spec.mask_coverage_max - spec.mask_coverage_min;
  double coverage = look.coverage + span * 0.1 * (2.0 * u01(rng) - 1.0);
  coverage = std::clamp(coverage, spec.mask_coverage_min, spec.mask_coverage_max);

  const double H = static_cast<double>(spec.height);
  const double W = static_cast<double>(spec.width);
  FigureLayout f;
  f.width_factor = look.width_factor;
  f.body_height = std::min(std::sqrt(coverage * H * W / area_factor(look.width_factor)),
                           max_body_height(spec, look.width_factor));
  const double half = 0.5 * f.torso_width();
  f.center_x = std::clamp(0.5 * W + 4.0 * u01(rng) - 2.0, half, W - half);
  f.top = std::clamp(0.5 * (H - f.body_height) + 4.0 * u01(rng) - 2.0, 0.0, H - f.body_height);
  return f;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_domains < 1) throw ArgumentError("synthetic: num_domains must be >= 1");
  if (identities_per_domain < 1 || images_per_identity < 1)
    throw ArgumentError("synthetic: identities_per_domain and images_per_identity must be >= 1");
  if (cameras_per_domain < 2) throw ArgumentError("synthetic: cameras_per_domain must be >= 2");
  if (height < 16 || width < 8) throw ArgumentError("synthetic: image must be at least 16x8");
  if (!(mask_coverage_min > 0.0 && mask_coverage_min < mask_coverage_max && mask_coverage_max < 1.0))
    throw ArgumentError("synthetic: mask coverage range must satisfy 0 < min < max < 1");
  const double reachable = area_factor(1.0) * std::pow(max_body_height(*this, 1.0), 2) /
                           (static_cast<double>(height) * static_cast<double>(width));
  if (mask_coverage_max > reachable)
    throw ArgumentError("synthetic: mask_coverage_max " + std::to_string(mask_coverage_max) +
                        " exceeds the reachable coverage " + std::to_string(reachable));
  if (mask_corruption < 0.0 || mask_corruption > 1.0) throw ArgumentError("synthetic: mask_corruption outside [0, 1]");
  if (palette_amplitude <= 0.0 || palette_amplitude + palette_jitter + texture_amplitude + noise_amplitude > 1.0)
    throw ArgumentError("synthetic: background amplitudes must keep pixels inside [-1, 1]");
  if (num_domains >= 2 && min_palette_distance(*this) < palette_separation)
    throw ArgumentError("synthetic: palette_separation " + std::to_string(palette_separation) +
                        " is larger than the palette allows (" + std::to_string(min_palette_distance(*this)) + ")");
}

std::vector<std::array<float, 3>> background_palette(const SyntheticSpec& spec) {
  std::vector<std::array<float, 3>> out;
  for (int k = 0; k < spec.num_domains; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / spec.num_domains;
    const double a = spec.palette_amplitude;
    out.push_back({static_cast<float>(a * std::cos(theta)),
                   static_cast<float>(a * std::cos(theta - 2.0 * std::numbers::pi / 3.0)),
                   static_cast<float>(a * std::cos(theta + 2.0 * std::numbers::pi / 3.0))});
  }
  return out;
}

double min_palette_distance(const SyntheticSpec& spec) {
  const auto p = background_palette(spec);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      double d2 = 0;
      for (int c = 0; c < 3; ++c) d2 += std::pow(static_cast<double>(p[i][c]) - p[j][c], 2);
      best = std::min(best, std::sqrt(d2));
    }
  return best;
}

double FigureLayout::torso_width() const { return kTorsoWidth * width_factor * body_height; }

FigureLayout::Ellipse FigureLayout::head() const {
  return {center_x, top + kHeadCenter * body_height, kHeadRx * body_height, kHeadRy * body_height};
}

FigureLayout::Box FigureLayout::torso() const {
  const double half = 0.5 * torso_width();
  return {center_x - half, top + kTorsoTop * body_height, center_x + half, top + kTorsoBottom * body_height};
}

FigureLayout::Box FigureLayout::left_leg() const {
  const double bw = torso_width();
  return {center_x - 0.42 * bw, top + kTorsoBottom * body_height, center_x - 0.06 * bw, top + body_height};
}

FigureLayout::Box FigureLayout::right_leg() const {
  const double bw = torso_width();
  return {center_x + 0.06 * bw, top + kTorsoBottom * body_height, center_x + 0.42 * bw, top + body_height};
}

bool FigureLayout::contains(double x, double y) const {
  const auto in_box = [&](const Box& b) { return x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1; };
  const auto h = head();
  const double ex = (x - h.cx) / h.rx;
  const double ey = (y - h.cy) / h.ry;
  return ex * ex + ey * ey <= 1.0 || in_box(torso()) || in_box(left_leg()) || in_box(right_leg());
}

std::vector<FigureLayout> synthetic_layouts(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<FigureLayout> out;
  out.reserve(spec.sample_count());
  for (int d = 0; d < spec.num_domains; ++d)
    for (int id = 0; id < spec.identities_per_domain; ++id) {
      const auto look = identity_look(spec, id);
      for (int i = 0; i < spec.images_per_identity; ++i) {
        std::mt19937_64 rng(derive_seed(spec.seed, {kSampleTag, static_cast<std::uint64_t>(d),
                                                    static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(i)}));
        out.push_back(draw_layout(spec, look, rng));
      }
    }
  return out;
}

Corpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  const auto palette = background_palette(spec);
  const auto H = spec.height;
  const auto W = spec.width;
  const std::int64_t plane = H * W;

  std::vector<ImageSample> samples;
  samples.reserve(spec.sample_count());
  for (int d = 0; d < spec.num_domains; ++d) {
    const bool vertical_stripes = d % 2 == 1;
    const int period = 4 + 2 * (d % 3);
    for (int id = 0; id < spec.identities_per_domain; ++id) {
      const auto look = identity_look(spec, id);
      for (int i = 0; i < spec.images_per_identity; ++i) {
        std::mt19937_64 rng(derive_seed(spec.seed, {kSampleTag, static_cast<std::uint64_t>(d),
                                                    static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(i)}));
        const FigureLayout layout = draw_layout(spec, look, rng);
        std::uniform_real_distribution<float> u01(0.0f, 1.0f);
        const auto sym = [&](double amp) { return static_cast<float>(amp * (2.0 * u01(rng) - 1.0)); };

        const int camera = 1 + i % spec.cameras_per_domain;
        const float camera_shift = 0.05f * static_cast<float>(camera - 1);
        std::array<float, 3> base{};
        for (int c = 0; c < 3; ++c) base[c] = palette[d][c] + sym(spec.palette_jitter);
        const int phase = static_cast<int>(u01(rng) * period);
        const float fg_gain = 1.0f + sym(0.04);

        std::vector<float> pixels(static_cast<std::size_t>(3 * plane));
        std::vector<float> mask(static_cast<std::size_t>(plane), 0.0f);
        const auto head = layout.head();
        const auto torso = layout.torso();
        for (std::int64_t y = 0; y < H; ++y)
          for (std::int64_t x = 0; x < W; ++x) {
            const double px = static_cast<double>(x) + 0.5;
            const double py = static_cast<double>(y) + 0.5;
            const std::int64_t off = y * W + x;
            const std::array<float, 3>* cloth = nullptr;
            if (layout.contains(px, py)) {
              const double ex = (px - head.cx) / head.rx;
              const double ey = (py - head.cy) / head.ry;
              if (ex * ex + ey * ey <= 1.0)
                cloth = &look.head;
              else if (py >= torso.y0 && py < torso.y1 && px >= torso.x0 && px < torso.x1)
                cloth = &look.torso;
              else
                cloth = &look.legs;
            }
            const int coord = static_cast<int>(vertical_stripes ? x : y) + phase;
            const float stripe = ((coord / (period / 2)) % 2 == 0 ? 1.0f : -1.0f) *
                                 static_cast<float>(spec.texture_amplitude);
            for (int c = 0; c < 3; ++c) {
              float v;
              if (cloth) {
                v = (*cloth)[c] * fg_gain + sym(0.02);
              } else {
                v = base[c] + stripe + sym(spec.noise_amplitude);
              }
              pixels[static_cast<std::size_t>(c * plane + off)] = std::clamp(v + camera_shift, -1.0f, 1.0f);
            }
            if (cloth) mask[static_cast<std::size_t>(off)] = 1.0f;
          }

        if (spec.mask_corruption > 0.0 && u01(rng) < spec.mask_corruption) {
          // Parser-style failure: drop a band of the torso and add a spurious blob.
          const auto drop_y0 = static_cast<std::int64_t>(torso.y0 + (torso.y1 - torso.y0) * 0.5 * u01(rng));
          const auto drop_y1 = std::min<std::int64_t>(H, drop_y0 + static_cast<std::int64_t>(0.25 * layout.body_height));
          for (std::int64_t y = std::max<std::int64_t>(0, drop_y0); y < drop_y1; ++y)
            for (std::int64_t x = 0; x < W; ++x) mask[static_cast<std::size_t>(y * W + x)] = 0.0f;
          const auto bx = static_cast<std::int64_t>(u01(rng) * static_cast<float>(W - 4));
          const auto by = static_cast<std::int64_t>(u01(rng) * static_cast<float>(H - 6));
          for (std::int64_t y = by; y < by + 6; ++y)
            for (std::int64_t x = bx; x < bx + 4; ++x) mask[static_cast<std::size_t>(y * W + x)] = 1.0f;
        }

        ImageSample s;
        s.identity = id;
        s.camera = camera;
        s.domain = d;
        s.sequence = i;
        s.image = torch::from_blob(pixels.data(), {3, H, W}, torch::kFloat32).clone();
        s.mask = torch::from_blob(mask.data(), {H, W}, torch::kFloat32).clone();
        samples.push_back(std::move(s));
      }
    }
  }
  return Corpus(std::move(samples), spec.num_domains);
}

}  // namespace softmask::domaindata
