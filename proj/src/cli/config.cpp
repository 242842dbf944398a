#include "softmask/cli/config.hpp"

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "softmask/common/errors.hpp"
#include "softmask/common/seeding.hpp"

namespace softmask::cli {
namespace {

using I = std::int64_t;

const std::vector<FieldSpec> kSchema = {
    {"run", "seed", ValueType::kInt, I{0}, "root seed of every random stream"},
    {"run", "out", ValueType::kString, std::string("runs/default"), "run directory"},

    {"synthetic", "num_domains", ValueType::kInt, I{2}, "K"},
    {"synthetic", "identities_per_domain", ValueType::kInt, I{25}, "training identities"},
    {"synthetic", "images_per_identity", ValueType::kInt, I{8}, ""},
    {"synthetic", "cameras_per_domain", ValueType::kInt, I{2}, ""},
    {"synthetic", "height", ValueType::kInt, I{64}, ""},
    {"synthetic", "width", ValueType::kInt, I{32}, ""},
    {"synthetic", "palette_amplitude", ValueType::kDouble, 0.6, ""},
    {"synthetic", "palette_separation", ValueType::kDouble, 1.0, ""},
    {"synthetic", "palette_jitter", ValueType::kDouble, 0.05, ""},
    {"synthetic", "texture_amplitude", ValueType::kDouble, 0.15, ""},
    {"synthetic", "noise_amplitude", ValueType::kDouble, 0.05, ""},
    {"synthetic", "coverage_min", ValueType::kDouble, 0.20, ""},
    {"synthetic", "coverage_max", ValueType::kDouble, 0.40, ""},
    {"synthetic", "mask_corruption", ValueType::kDouble, 0.0, ""},
    {"synthetic", "test_identities", ValueType::kInt, I{10}, "held-out identities per domain"},

    {"sbsgan", "lambda_rec", ValueType::kDouble, 10.0, ""},
    {"sbsgan", "lambda_idc", ValueType::kDouble, 5.0, ""},
    {"sbsgan", "lambda_bgs", ValueType::kDouble, 5.0, ""},
    {"sbsgan", "lambda_sc", ValueType::kDouble, 5.0, ""},
    {"sbsgan", "lr_g", ValueType::kDouble, 1e-4, ""},
    {"sbsgan", "lr_d", ValueType::kDouble, 1e-4, ""},
    {"sbsgan", "beta1", ValueType::kDouble, 0.5, ""},
    {"sbsgan", "beta2", ValueType::kDouble, 0.999, ""},
    {"sbsgan", "batch", ValueType::kInt, I{16}, ""},
    {"sbsgan", "epochs", ValueType::kInt, I{5}, ""},
    {"sbsgan", "critic_steps", ValueType::kInt, I{5}, "D updates per G update"},
    {"sbsgan", "adversarial", ValueType::kString, std::string("wgan-gp"), "wgan-gp | ce"},
    {"sbsgan", "gp_weight", ValueType::kDouble, 10.0, ""},
    {"sbsgan", "bgs_reduction", ValueType::kString, std::string("l2"), "l2 | mse"},
    {"sbsgan", "base_channels", ValueType::kInt, I{32}, ""},
    {"sbsgan", "residual_blocks", ValueType::kInt, I{6}, ""},
    {"sbsgan", "disc_channels", ValueType::kInt, I{32}, ""},
    {"sbsgan", "disc_layers", ValueType::kInt, I{3}, ""},

    {"da2s", "variant", ValueType::kString, std::string("mini"), "mini | full | custom"},
    {"da2s", "growth_rate", ValueType::kInt, I{8}, "custom variant only"},
    {"da2s", "block_layers", ValueType::kString, std::string("3-6-12-8"), "custom variant only"},
    {"da2s", "init_channels", ValueType::kInt, I{8}, "custom variant only"},
    {"da2s", "input_height", ValueType::kInt, I{0}, "0 = variant default"},
    {"da2s", "input_width", ValueType::kInt, I{0}, "0 = variant default"},
    {"da2s", "lr", ValueType::kDouble, 0.1, ""},
    {"da2s", "lr_decayed", ValueType::kDouble, 0.01, ""},
    {"da2s", "decay_epoch", ValueType::kInt, I{40}, ""},
    {"da2s", "epochs", ValueType::kInt, I{60}, ""},
    {"da2s", "batch", ValueType::kInt, I{50}, ""},
    {"da2s", "momentum", ValueType::kDouble, 0.9, ""},
    {"da2s", "weight_decay", ValueType::kDouble, 5e-4, ""},
    {"da2s", "se_reduction", ValueType::kInt, I{16}, ""},
    {"da2s", "fc1_units", ValueType::kInt, I{512}, ""},
    {"da2s", "dropout", ValueType::kDouble, 0.5, ""},
    {"da2s", "use_isdc", ValueType::kBool, true, ""},
    {"da2s", "use_se", ValueType::kBool, true, ""},
    {"da2s", "isdc_se", ValueType::kBool, false, ""},
    {"da2s", "flip", ValueType::kBool, true, ""},
    {"da2s", "train_domain", ValueType::kInt, I{0}, "-1 = all domains"},
    {"da2s", "context", ValueType::kString, std::string("style"), "style | original"},
    {"da2s", "context_dir", ValueType::kString, std::string(""), "external context images"},
    {"da2s", "checkpoint_every", ValueType::kInt, I{10}, ""},

    {"eval", "split", ValueType::kString, std::string("test"), "test | train"},
    {"eval", "query_domain", ValueType::kInt, I{1}, "target domain"},
    {"eval", "cross_camera", ValueType::kBool, true, ""},
    {"eval", "ranks", ValueType::kString, std::string("1,5,10"), ""},
    {"eval", "embedder", ValueType::kString, std::string("pca"), "pca | identity"},
    {"eval", "fit_count", ValueType::kInt, I{5000}, ""},
    {"eval", "plot_count", ValueType::kInt, I{200}, ""},
    {"eval", "features", ValueType::kString, std::string("pixels"), "domain-dist features: pixels | da2s"},
};

std::string type_name(ValueType t) {
  switch (t) {
    case ValueType::kInt: return "integer";
    case ValueType::kDouble: return "number";
    case ValueType::kBool: return "boolean";
    default: return "string";
  }
}

std::string number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

Value parse_value(const FieldSpec& f, const std::string& text) {
  auto fail = [&] {
    return ConfigError("config " + f.dotted() + ": expected " + type_name(f.type) + ", got '" + text + "'");
  };
  switch (f.type) {
    case ValueType::kInt: {
      I v = 0;
      auto res = std::from_chars(text.data(), text.data() + text.size(), v);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size()) throw fail();
      return v;
    }
    case ValueType::kDouble: {
      double v = 0;
      auto res = std::from_chars(text.data(), text.data() + text.size(), v);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size()) throw fail();
      return v;
    }
    case ValueType::kBool:
      if (text == "true") return true;
      if (text == "false") return false;
      throw fail();
    default:
      return text;
  }
}

std::string render(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, I>) return std::to_string(x);
        else if constexpr (std::is_same_v<T, double>) return number(x);
        else if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
        else return quote(x);
      },
      v);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

const std::vector<FieldSpec>& ExperimentConfig::schema() { return kSchema; }

ExperimentConfig::ExperimentConfig() {
  for (const auto& f : kSchema) values_.push_back(f.default_value);
}

std::size_t ExperimentConfig::index_of(const std::string& dotted) const {
  for (std::size_t i = 0; i < kSchema.size(); ++i)
    if (kSchema[i].dotted() == dotted) return i;
  throw ConfigError("unknown config key '" + dotted + "'");
}

void ExperimentConfig::set(const std::string& dotted, const std::string& text) {
  const auto i = index_of(dotted);
  values_[i] = parse_value(kSchema[i], text);
}

void ExperimentConfig::set_value(const std::string& dotted, Value value) {
  const auto i = index_of(dotted);
  if (value.index() != kSchema[i].default_value.index())
    throw ConfigError("config " + dotted + ": expected " + type_name(kSchema[i].type));
  values_[i] = std::move(value);
}

std::int64_t ExperimentConfig::get_int(const std::string& dotted) const { return std::get<I>(values_[index_of(dotted)]); }
double ExperimentConfig::get_double(const std::string& dotted) const { return std::get<double>(values_[index_of(dotted)]); }
bool ExperimentConfig::get_bool(const std::string& dotted) const { return std::get<bool>(values_[index_of(dotted)]); }
const std::string& ExperimentConfig::get_string(const std::string& dotted) const {
  return std::get<std::string>(values_[index_of(dotted)]);
}

void ExperimentConfig::validate() const {
  const auto K = get_int("synthetic.num_domains");
  require(K >= 1, "synthetic.num_domains must be >= 1");
  for (const char* k : {"synthetic.identities_per_domain", "synthetic.images_per_identity",
                        "synthetic.cameras_per_domain", "synthetic.height", "synthetic.width",
                        "synthetic.test_identities", "sbsgan.batch", "sbsgan.epochs", "sbsgan.base_channels",
                        "sbsgan.disc_channels", "sbsgan.disc_layers", "da2s.epochs", "da2s.batch",
                        "da2s.se_reduction", "da2s.fc1_units", "da2s.checkpoint_every", "eval.fit_count",
                        "eval.plot_count"})
    require(get_int(k) >= 1, std::string(k) + " must be >= 1");
  for (const char* k : {"sbsgan.critic_steps", "sbsgan.residual_blocks", "da2s.decay_epoch", "da2s.input_height",
                        "da2s.input_width"})
    require(get_int(k) >= 0, std::string(k) + " must be >= 0");
  for (const char* k : {"sbsgan.lambda_rec", "sbsgan.lambda_idc", "sbsgan.lambda_bgs", "sbsgan.lambda_sc",
                        "sbsgan.gp_weight", "da2s.weight_decay", "da2s.momentum", "synthetic.mask_corruption",
                        "synthetic.texture_amplitude", "synthetic.noise_amplitude", "synthetic.palette_jitter"})
    require(get_double(k) >= 0, std::string(k) + " must be >= 0");
  for (const char* k : {"sbsgan.lr_g", "sbsgan.lr_d", "da2s.lr", "da2s.lr_decayed"})
    require(get_double(k) > 0, std::string(k) + " must be > 0");
  require(get_double("sbsgan.beta1") >= 0 && get_double("sbsgan.beta1") < 1, "sbsgan.beta1 must lie in [0, 1)");
  require(get_double("sbsgan.beta2") >= 0 && get_double("sbsgan.beta2") < 1, "sbsgan.beta2 must lie in [0, 1)");
  require(get_double("da2s.dropout") >= 0 && get_double("da2s.dropout") < 1, "da2s.dropout must lie in [0, 1)");
  require(get_double("synthetic.mask_corruption") <= 1, "synthetic.mask_corruption must be <= 1");
  const auto cmin = get_double("synthetic.coverage_min");
  const auto cmax = get_double("synthetic.coverage_max");
  require(cmin > 0 && cmin <= cmax && cmax < 1, "synthetic coverage range must satisfy 0 < coverage_min <= coverage_max < 1");
  const auto& adv = get_string("sbsgan.adversarial");
  require(adv == "wgan-gp" || adv == "ce", "sbsgan.adversarial must be wgan-gp or ce");
  const auto& red = get_string("sbsgan.bgs_reduction");
  require(red == "l2" || red == "mse", "sbsgan.bgs_reduction must be l2 or mse");
  da2s::parse_variant(get_string("da2s.variant"));
  const auto& ctx = get_string("da2s.context");
  require(ctx == "style" || ctx == "original", "da2s.context must be style or original");
  const auto& split = get_string("eval.split");
  require(split == "test" || split == "train", "eval.split must be test or train");
  const auto& feats = get_string("eval.features");
  require(feats == "pixels" || feats == "da2s", "eval.features must be pixels or da2s");
  reideval::make_embedder(get_string("eval.embedder"));
  const auto q = get_int("eval.query_domain");
  require(q >= 0 && q < K, "eval.query_domain = " + std::to_string(q) + " requires synthetic.num_domains >= " +
                               std::to_string(q + 1) + " (got K = " + std::to_string(K) + ")");
  const auto t = get_int("da2s.train_domain");
  require(t >= -1 && t < K, "da2s.train_domain must be -1 or lie in [0, K)");
  ranks();
  backbone();
}

std::string ExperimentConfig::to_yaml() const {
  std::string out;
  std::string section;
  for (std::size_t i = 0; i < kSchema.size(); ++i) {
    if (kSchema[i].section != section) {
      section = kSchema[i].section;
      out += section + ":\n";
    }
    out += "  " + kSchema[i].key + ": " + render(values_[i]) + "\n";
  }
  return out;
}

std::string ExperimentConfig::hash() const {
  std::string text;
  for (std::size_t i = 0; i < kSchema.size(); ++i)
    if (kSchema[i].dotted() != "run.out") text += kSchema[i].dotted() + "=" + render(values_[i]) + "\n";
  return sha256_hex(text);
}

domaindata::SyntheticSpec ExperimentConfig::synthetic_spec() const {
  domaindata::SyntheticSpec s;
  s.num_domains = static_cast<int>(get_int("synthetic.num_domains"));
  s.identities_per_domain = static_cast<int>(get_int("synthetic.identities_per_domain"));
  s.images_per_identity = static_cast<int>(get_int("synthetic.images_per_identity"));
  s.cameras_per_domain = static_cast<int>(get_int("synthetic.cameras_per_domain"));
  s.height = get_int("synthetic.height");
  s.width = get_int("synthetic.width");
  s.palette_amplitude = get_double("synthetic.palette_amplitude");
  s.palette_separation = get_double("synthetic.palette_separation");
  s.palette_jitter = get_double("synthetic.palette_jitter");
  s.texture_amplitude = get_double("synthetic.texture_amplitude");
  s.noise_amplitude = get_double("synthetic.noise_amplitude");
  s.mask_coverage_min = get_double("synthetic.coverage_min");
  s.mask_coverage_max = get_double("synthetic.coverage_max");
  s.mask_corruption = get_double("synthetic.mask_corruption");
  s.seed = seed();
  return s;
}

domaindata::SyntheticSpec ExperimentConfig::test_spec() const {
  auto s = synthetic_spec();
  s.identities_per_domain = static_cast<int>(get_int("synthetic.test_identities"));
  s.mask_corruption = 0.0;
  s.seed = derive_seed(seed(), {0x7e57});
  return s;
}

sbsgan::SbsganConfig ExperimentConfig::sbsgan_config() const {
  sbsgan::SbsganConfig c;
  c.base_channels = static_cast<int>(get_int("sbsgan.base_channels"));
  c.residual_blocks = static_cast<int>(get_int("sbsgan.residual_blocks"));
  c.disc_channels = static_cast<int>(get_int("sbsgan.disc_channels"));
  c.disc_layers = static_cast<int>(get_int("sbsgan.disc_layers"));
  c.objective.weights = {get_double("sbsgan.lambda_rec"), get_double("sbsgan.lambda_idc"),
                         get_double("sbsgan.lambda_bgs"), get_double("sbsgan.lambda_sc")};
  c.objective.adversarial.variant = get_string("sbsgan.adversarial") == "ce" ? sbsgan::AdversarialVariant::kCrossEntropy
                                                                            : sbsgan::AdversarialVariant::kWassersteinGp;
  c.objective.adversarial.gp_weight = get_double("sbsgan.gp_weight");
  c.objective.bgs_reduction =
      get_string("sbsgan.bgs_reduction") == "mse" ? sbsgan::NormReduction::kMse : sbsgan::NormReduction::kL2;
  c.lr_g = get_double("sbsgan.lr_g");
  c.lr_d = get_double("sbsgan.lr_d");
  c.beta1 = get_double("sbsgan.beta1");
  c.beta2 = get_double("sbsgan.beta2");
  c.batch_size = static_cast<std::size_t>(get_int("sbsgan.batch"));
  c.epochs = static_cast<int>(get_int("sbsgan.epochs"));
  c.critic_steps = static_cast<int>(get_int("sbsgan.critic_steps"));
  c.seed = seed();
  return c;
}

da2s::BackboneConfig ExperimentConfig::backbone() const {
  const auto variant = da2s::parse_variant(get_string("da2s.variant"));
  da2s::BackboneConfig b = variant == da2s::Variant::kFull ? da2s::BackboneConfig::full() : da2s::BackboneConfig::mini();
  if (variant == da2s::Variant::kCustom) {
    b.variant = variant;
    b.growth_rate = static_cast<int>(get_int("da2s.growth_rate"));
    b.init_channels = static_cast<int>(get_int("da2s.init_channels"));
    std::stringstream ss(get_string("da2s.block_layers"));
    std::string part;
    std::size_t n = 0;
    while (std::getline(ss, part, '-')) {
      require(n < 4, "da2s.block_layers needs exactly four counts, e.g. 3-6-12-8");
      try {
        b.block_layers[n++] = std::stoi(part);
      } catch (const std::exception&) {
        throw ConfigError("da2s.block_layers: bad count '" + part + "'");
      }
    }
    require(n == 4, "da2s.block_layers needs exactly four counts, e.g. 3-6-12-8");
  }
  if (get_int("da2s.input_height") > 0) b.input_height = get_int("da2s.input_height");
  if (get_int("da2s.input_width") > 0) b.input_width = get_int("da2s.input_width");
  return b;
}

da2s::Da2sOptions ExperimentConfig::da2s_options(int num_ids) const {
  da2s::Da2sOptions o;
  o.backbone = backbone();
  o.num_ids = num_ids;
  o.use_isdc = get_bool("da2s.use_isdc");
  o.use_se = get_bool("da2s.use_se");
  o.isdc_se = get_bool("da2s.isdc_se");
  o.se_reduction = static_cast<int>(get_int("da2s.se_reduction"));
  o.fc1_units = static_cast<int>(get_int("da2s.fc1_units"));
  o.dropout = get_double("da2s.dropout");
  return o;
}

da2s::Da2sTrainConfig ExperimentConfig::da2s_train_config() const {
  da2s::Da2sTrainConfig c;
  c.epochs = static_cast<int>(get_int("da2s.epochs"));
  c.decay_epoch = static_cast<int>(get_int("da2s.decay_epoch"));
  c.lr = get_double("da2s.lr");
  c.lr_decayed = get_double("da2s.lr_decayed");
  c.momentum = get_double("da2s.momentum");
  c.weight_decay = get_double("da2s.weight_decay");
  c.batch_size = static_cast<std::size_t>(get_int("da2s.batch"));
  c.flip = get_bool("da2s.flip");
  c.seed = seed();
  return c;
}

reideval::Protocol ExperimentConfig::protocol() const { return {get_bool("eval.cross_camera")}; }

std::vector<int> ExperimentConfig::ranks() const {
  std::vector<int> out;
  std::stringstream ss(get_string("eval.ranks"));
  std::string part;
  while (std::getline(ss, part, ',')) {
    int v = 0;
    auto res = std::from_chars(part.data(), part.data() + part.size(), v);
    if (res.ec != std::errc() || res.ptr != part.data() + part.size() || v < 1)
      throw ConfigError("eval.ranks: bad rank '" + part + "' (expected comma-separated positive integers)");
    out.push_back(v);
  }
  require(!out.empty(), "eval.ranks must list at least one rank");
  return out;
}

reideval::DomainDistanceOptions ExperimentConfig::distance_options() const {
  return {static_cast<std::size_t>(get_int("eval.fit_count")), static_cast<std::size_t>(get_int("eval.plot_count")),
          seed()};
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) return cfg;
  if (!root.IsMap()) throw ConfigError("config must be a mapping of sections");
  std::set<std::string> sections;
  for (const auto& f : ExperimentConfig::schema()) sections.insert(f.section);
  for (const auto& sec : root) {
    const auto name = sec.first.as<std::string>();
    if (!sections.count(name)) throw ConfigError("unknown config section '" + name + "'");
    if (sec.second.IsNull()) continue;
    if (!sec.second.IsMap()) throw ConfigError("config section '" + name + "' must be a mapping");
    for (const auto& kv : sec.second) {
      const auto key = name + "." + kv.first.as<std::string>();
      if (!kv.second.IsScalar()) throw ConfigError("config " + key + ": expected a scalar value");
      cfg.set(key, kv.second.Scalar());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace softmask::cli
