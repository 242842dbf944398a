#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "softmask/cli/config.hpp"

namespace softmask::cli {

inline constexpr const char* kStageSynth = "synth";
inline constexpr const char* kStageSbsgan = "train-sbsgan";
inline constexpr const char* kStageSoftmask = "gen-softmask";
inline constexpr const char* kStageDa2s = "train-da2s";
inline constexpr const char* kStageEval = "eval";
inline constexpr const char* kStageDomainDist = "domain-dist";
inline constexpr const char* kStageReport = "report";

struct RunManifest {
  std::string stage;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string code_version;
  std::string started;
  std::string finished;
  std::map<std::string, std::string> artifacts;  // name -> path relative to the run directory
  std::map<std::string, double> values;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

std::string code_version();
/// UTC, ISO 8601 to the second.
std::string utc_timestamp();

/// Exclusive per-directory lock held for the lifetime of the object.
/// A lock left behind by a process that no longer exists is taken over.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

class RunDir {
 public:
  explicit RunDir(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(const std::string& rel) const { return root_ / rel; }
  std::filesystem::path manifest_path(const std::string& stage) const;

  std::optional<RunManifest> manifest(const std::string& stage) const;
  void write_manifest(const RunManifest& m) const;
  /// PrerequisiteError naming `stage` unless its manifest exists.
  RunManifest require(const std::string& stage) const;
  /// ConfigError when `stage` already completed with the same hash and seed.
  void refuse_rerun(const std::string& stage, const ExperimentConfig& cfg) const;

 private:
  std::filesystem::path root_;
};

}  // namespace softmask::cli
