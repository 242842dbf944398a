#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "softmask/sbsgan/networks.hpp"

namespace criteria {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Collects named sub-checks of one criterion.
struct Report {
  std::vector<Check> checks;

  void add(std::string name, bool pass, std::string detail = {});
  /// |got - want| <= tol * max(1, |want|)
  void close(std::string name, double got, double want, double tol = 1e-6);
  bool pass() const;
  std::size_t failures() const;
  std::string first_failure() const;
};

void loss_oracles(Report& r);
void gradient_checks(Report& r, int seeds);
void isdc_gradient_checks(Report& r, int seeds);
void wiring(Report& r, int random_configs, bool build_full);
void retrieval(Report& r, int random_instances, int max_gallery);
void ablation(Report& r);
void determinism(Report& r, const std::filesystem::path& scratch);

/// Background/foreground statistics of soft-mask outputs on held-out images.
struct SuppressionStats {
  double bg_input = 0;   // mean |pixel| over true background, input
  double bg_output = 0;  // same region, soft-mask output
  double fg_mae = 0;     // mean |output - input| over true foreground
  double bg_ratio() const { return bg_output / bg_input; }
};

SuppressionStats suppression(softmask::sbsgan::Generator& g, std::uint64_t seed);

struct GapResult {
  double original = 0;
  double softmask = 0;
};

/// Centroid distance between domains on pixel features, original images
/// vs soft-mask outputs, on a test corpus rendered from `seed`.
GapResult domain_gap(softmask::sbsgan::Generator& g, std::uint64_t seed);

struct TrainabilityResult {
  double initial_loss = 0;
  double ln_n = 0;
  int epochs_to_target = -1;  // first epoch with accuracy >= 0.95, or -1
  double final_accuracy = 0;
};

/// Mini DA-2S on an 8-identity synthetic set. Soft and context inputs come
/// from `g` when given, else from hard masks and the original images.
TrainabilityResult trainability(softmask::sbsgan::Generator* g, int max_epochs, std::uint64_t seed);

}  // namespace criteria
