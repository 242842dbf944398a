#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "softmask/domaindata/types.hpp"

namespace softmask::domaindata {

/// Parameters of the desk-scale multi-domain corpus.
///
/// Every identity renders in every domain with the same clothing colours;
/// domains differ only in background palette and texture, so any
/// cross-domain feature gap is background shift by construction.
struct SyntheticSpec {
  int num_domains = 2;
  int identities_per_domain = 25;
  int images_per_identity = 8;
  int cameras_per_domain = 2;
  std::int64_t height = 64;
  std::int64_t width = 32;

  // Background base colours sit on a hue ring of this radius.
  double palette_amplitude = 0.6;
  // Required minimum Euclidean RGB distance between domain base colours.
  double palette_separation = 1.0;
  double palette_jitter = 0.05;
  double texture_amplitude = 0.15;
  double noise_amplitude = 0.05;

  double mask_coverage_min = 0.20;
  double mask_coverage_max = 0.40;
  // Probability that a sample's stored mask is corrupted (robustness runs).
  double mask_corruption = 0.0;

  std::uint64_t seed = 0;

  /// Throws ArgumentError on an unusable spec.
  void validate() const;
  std::size_t sample_count() const {
    return static_cast<std::size_t>(num_domains) * identities_per_domain * images_per_identity;
  }
};

/// Per-domain background base colours (RGB in [-1, 1]).
std::vector<std::array<float, 3>> background_palette(const SyntheticSpec& spec);
/// Smallest pairwise Euclidean distance between palette entries.
double min_palette_distance(const SyntheticSpec& spec);

/// Pedestrian-like figure geometry in continuous pixel coordinates.
/// A pixel (x, y) is foreground when its centre (x + .5, y + .5) falls in
/// the head ellipse, the torso rectangle or one of the two leg rectangles.
struct FigureLayout {
  double center_x = 0;
  double top = 0;
  double body_height = 0;
  double width_factor = 1;

  struct Box {
    double x0, y0, x1, y1;
  };
  struct Ellipse {
    double cx, cy, rx, ry;
  };
  Ellipse head() const;
  Box torso() const;
  Box left_leg() const;
  Box right_leg() const;
  double torso_width() const;
  bool contains(double x, double y) const;
};

/// Layouts of every sample in corpus order, reconstructable from the spec alone.
std::vector<FigureLayout> synthetic_layouts(const SyntheticSpec& spec);

/// Renders the corpus. Deterministic in `spec.seed`; sample order is
/// domain-major, then identity, then image index. Cameras are assigned
/// round-robin (1-based) per identity within each domain.
Corpus generate_synthetic_corpus(const SyntheticSpec& spec);

}  // namespace softmask::domaindata
