#pragma once

#include <torch/torch.h>

#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "softmask/cli/config.hpp"
#include "softmask/cli/run_dir.hpp"
#include "softmask/domaindata/types.hpp"

namespace softmask::cli {

using Override = std::pair<std::string, std::string>;

/// Defaults, then the config file (or `<out>/config.yaml` of an existing
/// run when no file is given), then `overrides` in order.
ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::vector<Override>& overrides);

struct CommandOptions {
  ExperimentConfig config;
  bool force = false;
  bool resume = false;
  bool features_only = false;
  bool quiet = false;
};

/// Runs one subcommand against `config.out()`; returns its manifest.
RunManifest run_command(const std::string& name, const CommandOptions& options);
const std::vector<std::string>& command_names();

/// 0 ok, 2 configuration / validation / data, 3 missing prerequisite,
/// 4 non-finite loss, 1 anything else.
int exit_code_for(const std::exception& e);

/// Reads `SOFTMASK_LAB_THREADS` and caps torch and OpenCV workers.
void apply_thread_limit();

/// Per (identity, camera): first image in corpus order is a query, the rest
/// go to the gallery. Only samples of `domain` take part.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_query_gallery(const domaindata::Corpus& corpus,
                                                                                  int domain);

/// Style-transfer target used for the context tree.
int context_target_domain(int source_domain, int query_domain, int num_domains);

/// Bilinear resize of [B, 3, h, w] images to the backbone input size.
torch::Tensor fit_input(const torch::Tensor& images, std::int64_t height, std::int64_t width);

}  // namespace softmask::cli
