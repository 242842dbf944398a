#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "softmask/da2s/model.hpp"
#include "softmask/da2s/trainer.hpp"
#include "softmask/domaindata/synthetic.hpp"
#include "softmask/reideval/eval.hpp"
#include "softmask/sbsgan/trainer.hpp"

namespace softmask::cli {

enum class ValueType { kInt, kDouble, kBool, kString };
using Value = std::variant<std::int64_t, double, bool, std::string>;

struct FieldSpec {
  std::string section;
  std::string key;
  ValueType type;
  Value default_value;
  std::string help;
  std::string dotted() const { return section + "." + key; }
};

/// Every experiment setting, addressed as `section.key`.
///
/// Sections: run, synthetic, sbsgan, da2s, eval. Defaults follow the
/// published training schedule where one exists.
class ExperimentConfig {
 public:
  ExperimentConfig();

  static const std::vector<FieldSpec>& schema();

  /// Parses `text` according to the field's type. ConfigError on an
  /// unknown key or a malformed value.
  void set(const std::string& dotted, const std::string& text);
  void set_value(const std::string& dotted, Value value);

  std::int64_t get_int(const std::string& dotted) const;
  double get_double(const std::string& dotted) const;
  bool get_bool(const std::string& dotted) const;
  const std::string& get_string(const std::string& dotted) const;

  /// Range and cross-field checks; ConfigError naming the field.
  void validate() const;

  /// Sectioned YAML that load_config reads back to the same values.
  std::string to_yaml() const;
  /// SHA-256 (hex) of the YAML echo without run.out.
  std::string hash() const;

  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("run.seed")); }
  std::filesystem::path out() const { return get_string("run.out"); }

  domaindata::SyntheticSpec synthetic_spec() const;
  /// Held-out identities for evaluation, rendered with a derived seed.
  domaindata::SyntheticSpec test_spec() const;
  sbsgan::SbsganConfig sbsgan_config() const;
  da2s::BackboneConfig backbone() const;
  da2s::Da2sOptions da2s_options(int num_ids) const;
  da2s::Da2sTrainConfig da2s_train_config() const;
  reideval::Protocol protocol() const;
  std::vector<int> ranks() const;
  reideval::DomainDistanceOptions distance_options() const;

 private:
  std::size_t index_of(const std::string& dotted) const;
  std::vector<Value> values_;
};

/// Defaults overridden by a sectioned YAML document.
ExperimentConfig parse_config_text(const std::string& text);
/// parse_config_text on a file's contents.
ExperimentConfig load_config(const std::filesystem::path& path);

std::string sha256_hex(const std::string& data);

}  // namespace softmask::cli
