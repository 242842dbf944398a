#include "softmask/cli/run_dir.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "softmask/common/archive.hpp"
#include "softmask/common/errors.hpp"

#ifndef SOFTMASK_VERSION
#define SOFTMASK_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace softmask::cli {

std::string RunManifest::to_json() const {
  json j;
  j["stage"] = stage;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["code_version"] = code_version;
  j["started"] = started;
  j["finished"] = finished;
  j["artifacts"] = artifacts;
  j["values"] = values;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = json::parse(text);
    m.stage = j.at("stage").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.code_version = j.value("code_version", "");
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    m.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
    m.values = j.value("values", std::map<std::string, double>{});
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

std::string code_version() { return SOFTMASK_VERSION; }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunLock::RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
  fs::create_directories(run_dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw Error("cannot create lock file " + path_.string());
    long holder = 0;
    std::ifstream(path_) >> holder;
    if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM))
      throw Error("run directory " + run_dir.string() + " is locked by process " + std::to_string(holder));
    fs::remove(path_);
  }
  throw Error("cannot acquire lock " + path_.string());
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

fs::path RunDir::manifest_path(const std::string& stage) const { return root_ / "manifests" / (stage + ".json"); }

std::optional<RunManifest> RunDir::manifest(const std::string& stage) const {
  std::ifstream in(manifest_path(stage));
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return RunManifest::from_json(ss.str());
}

void RunDir::write_manifest(const RunManifest& m) const {
  fs::create_directories(root_ / "manifests");
  write_file_atomically(manifest_path(m.stage), m.to_json());
}

RunManifest RunDir::require(const std::string& stage) const {
  auto m = manifest(stage);
  if (!m) throw PrerequisiteError("missing prerequisite: run `" + stage + "` first (no " +
                                  manifest_path(stage).string() + ")");
  return *m;
}

void RunDir::refuse_rerun(const std::string& stage, const ExperimentConfig& cfg) const {
  const auto m = manifest(stage);
  if (m && !m->values.count("features_only") && m->config_hash == cfg.hash() && m->seed == cfg.seed())
    throw ConfigError("stage " + stage + " already completed with config " + m->config_hash.substr(0, 12) +
                      " and seed " + std::to_string(m->seed) + "; pass --force to re-run");
}

}  // namespace softmask::cli
