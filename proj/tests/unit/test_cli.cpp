#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>

#include "softmask/cli/commands.hpp"
#include "softmask/cli/config.hpp"
#include "softmask/cli/plot.hpp"
#include "softmask/cli/run_dir.hpp"
#include "softmask/common/errors.hpp"
#include "softmask/domaindata/synthetic.hpp"
#include "test_util.hpp"

#undef CHECK
#include <doctest.h>

using namespace softmask;
using namespace softmask::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// relative path -> digest; manifests carry timestamps and config.yaml echoes run.out
std::map<std::string, std::string> tree_digest(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel.rfind("manifests/", 0) == 0 || rel == ".lock" || rel == "config.yaml") continue;
    out[rel] = sha256_hex(slurp(e.path()));
  }
  return out;
}

int run_lab(const std::string& args) {
#ifdef SOFTMASK_LAB_BIN
  const std::string cmd = std::string("\"") + SOFTMASK_LAB_BIN + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
#else
  (void)args;
  return -1;
#endif
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("defaults") {
  ExperimentConfig c;
  CHECK(c.get_double("sbsgan.lambda_rec") == 10.0);
  CHECK(c.get_double("sbsgan.lambda_idc") == 5.0);
  CHECK(c.get_double("sbsgan.lambda_bgs") == 5.0);
  CHECK(c.get_double("sbsgan.lambda_sc") == 5.0);
  CHECK(c.get_double("sbsgan.lr_g") == 1e-4);
  CHECK(c.get_double("sbsgan.beta1") == 0.5);
  CHECK(c.get_double("sbsgan.beta2") == 0.999);
  CHECK(c.get_int("sbsgan.batch") == 16);
  CHECK(c.get_int("sbsgan.critic_steps") == 5);
  CHECK(c.get_double("sbsgan.gp_weight") == 10.0);
  CHECK(c.get_double("da2s.lr") == 0.1);
  CHECK(c.get_double("da2s.lr_decayed") == 0.01);
  CHECK(c.get_int("da2s.decay_epoch") == 40);
  CHECK(c.get_int("da2s.epochs") == 60);
  CHECK(c.get_int("da2s.batch") == 50);
  CHECK(c.get_int("da2s.se_reduction") == 16);
  CHECK(c.get_string("eval.ranks") == "1,5,10");
  CHECK((c.ranks() == std::vector<int>{1, 5, 10}));
  CHECK_NOTHROW(c.validate());
  const auto s = c.sbsgan_config();
  CHECK(s.objective.weights.rec == 10.0);
  CHECK(s.critic_steps == 5);
}

TEST_CASE("unknown keys and invalid values are rejected") {
  ExperimentConfig c;
  CHECK_THROWS_AS(c.set("sbsgan.nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("sbsgan.batch", "eight"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("sbsgan:\n  lambda_rec: -1\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config_text("sbsgan:\n  learning_rate: 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("training:\n  batch: 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("synthetic:\n  num_domains: 1\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config_text("sbsgan: [1, 2\n"), ConfigError);
}

TEST_CASE("precedence: defaults, file, overrides") {
  test_util::TempDir dir;
  const auto file = dir.path / "c.yaml";
  std::ofstream(file) << "sbsgan:\n  batch: 8\n  lambda_sc: 2.5\n";
  auto c = resolve_config(file, {});
  CHECK(c.get_int("sbsgan.batch") == 8);
  CHECK(c.get_double("sbsgan.lambda_sc") == 2.5);
  CHECK(c.get_double("sbsgan.lambda_rec") == 10.0);
  auto o = resolve_config(file, {{"sbsgan.batch", "4"}});
  CHECK(o.get_int("sbsgan.batch") == 4);
  CHECK_THROWS_AS(resolve_config(dir.path / "missing.yaml", {}), ConfigError);
}

TEST_CASE("echo round trip and hash") {
  ExperimentConfig c;
  c.set("sbsgan.batch", "8");
  c.set("da2s.use_se", "false");
  c.set("run.seed", "7");
  auto back = parse_config_text(c.to_yaml());
  CHECK(back.hash() == c.hash());
  CHECK(back.to_yaml() == c.to_yaml());
  auto changed = c;
  changed.set("sbsgan.lambda_sc", "0");
  CHECK(changed.hash() != c.hash());
  auto moved = c;
  moved.set("run.out", "elsewhere");
  CHECK(moved.hash() == c.hash());
  CHECK(c.hash().size() == 64);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("derived configs") {
  ExperimentConfig c;
  c.set("da2s.variant", "custom");
  c.set("da2s.block_layers", "2-4-8-6");
  c.set("da2s.growth_rate", "12");
  auto b = c.backbone();
  CHECK((b.block_layers == std::array<int, 4>{2, 4, 8, 6}));
  CHECK(b.growth_rate == 12);
  c.set("da2s.block_layers", "2-4-8");
  CHECK_THROWS_AS(c.validate(), ConfigError);

  ExperimentConfig d;
  auto opts = d.da2s_options(25);
  CHECK(opts.num_ids == 25);
  CHECK(opts.use_isdc);
  CHECK(opts.use_se);
  CHECK(d.da2s_train_config().weight_decay == 5e-4);
  const auto test = d.test_spec();
  CHECK(test.identities_per_domain == 10);
  CHECK(test.seed != d.synthetic_spec().seed);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(PrerequisiteError("x")) == 3);
  CHECK(exit_code_for(NumericError("x")) == 4);
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(WiringError("x")) == 2);
  CHECK(exit_code_for(ArgumentError("x")) == 2);
  CHECK(exit_code_for(ParseError("x")) == 2);
  CHECK(exit_code_for(DataError("x")) == 2);
  CHECK(exit_code_for(ProtocolError("x")) == 1);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("run directory lock and manifests") {
  test_util::TempDir dir;
  {
    RunLock lock(dir.path);
    CHECK(fs::exists(dir.path / ".lock"));
    CHECK_THROWS_AS(RunLock(dir.path), Error);
  }
  CHECK(!fs::exists(dir.path / ".lock"));
  std::ofstream(dir.path / ".lock") << "999999999\n";
  CHECK_NOTHROW(RunLock(dir.path));

  RunDir run(dir.path);
  CHECK_THROWS_WITH_AS(run.require(kStageSbsgan), doctest::Contains("train-sbsgan"), PrerequisiteError);
  ExperimentConfig cfg;
  RunManifest m;
  m.stage = kStageSbsgan;
  m.config_hash = cfg.hash();
  m.seed = cfg.seed();
  m.artifacts["losses"] = "sbsgan/losses.csv";
  m.values["epochs"] = 5;
  run.write_manifest(m);
  auto back = run.require(kStageSbsgan);
  CHECK(back.artifacts.at("losses") == "sbsgan/losses.csv");
  CHECK(back.values.at("epochs") == 5);
  CHECK(RunManifest::from_json(m.to_json()).config_hash == m.config_hash);
  CHECK_THROWS_AS(run.refuse_rerun(kStageSbsgan, cfg), ConfigError);
  cfg.set("run.seed", "1");
  CHECK_NOTHROW(run.refuse_rerun(kStageSbsgan, cfg));
}

TEST_CASE("missing prerequisite through run_command") {
  test_util::TempDir dir;
  CommandOptions o;
  o.config.set("run.out", dir.path.string());
  o.quiet = true;
  try {
    run_command("gen-softmask", o);
    FAIL("expected PrerequisiteError");
  } catch (const PrerequisiteError& e) {
    CHECK(exit_code_for(e) == 3);
  }
  CHECK_THROWS_AS(run_command("bogus", o), ArgumentError);
}

TEST_CASE("query and gallery split, context target") {
  domaindata::SyntheticSpec s;
  s.num_domains = 2;
  s.identities_per_domain = 3;
  s.images_per_identity = 4;
  s.cameras_per_domain = 2;
  s.height = 16;
  s.width = 8;
  auto corpus = domaindata::generate_synthetic_corpus(s);
  const auto [q, g] = split_query_gallery(corpus, 1);
  CHECK(q.size() == 6);
  CHECK(g.size() == 6);
  for (auto i : q) CHECK(corpus[i].domain == 1);
  for (auto i : g) {
    bool has_query = false;
    for (auto j : q)
      has_query |= corpus[j].identity == corpus[i].identity && corpus[j].camera == corpus[i].camera && j < i;
    CHECK(has_query);
  }
  CHECK(context_target_domain(0, 1, 2) == 1);
  CHECK(context_target_domain(1, 1, 2) == 0);
  CHECK(context_target_domain(2, 1, 3) == 1);
  CHECK(context_target_domain(1, 1, 3) == 2);
}

TEST_CASE("moving average") {
  auto m = moving_average({1, 2, 3, 4}, 2);
  REQUIRE(m.size() == 4);
  CHECK(m[0] == 1.0);
  CHECK(m[1] == 1.5);
  CHECK(m[3] == 3.5);
  CHECK(std::isnan(moving_average({1, std::nan(""), 3}, 2)[1]));
}

#ifdef SOFTMASK_LAB_BIN
TEST_CASE("binary: synth is reproducible and rejects bad configs") {
  test_util::TempDir dir;
  const auto a = dir.path / "a";
  const auto b = dir.path / "b";
  const std::string small = " --set synthetic.identities_per_domain=3 --set synthetic.images_per_identity=2 "
                            "--set synthetic.test_identities=2";
  REQUIRE(run_lab("--seed 7 --out \"" + a.string() + "\"" + small + " synth") == 0);
  REQUIRE(run_lab("--seed 7 --out \"" + b.string() + "\"" + small + " synth") == 0);
  const auto da = tree_digest(a);
  CHECK(da.size() > 10);
  CHECK(da == tree_digest(b));
  CHECK(load_config(a / "config.yaml").hash() == load_config(b / "config.yaml").hash());
  CHECK(fs::exists(a / "manifests" / "synth.json"));

  CHECK(run_lab("--seed 7 --out \"" + a.string() + "\"" + small + " synth") == 2);
  CHECK(run_lab("--seed 7 --force --out \"" + a.string() + "\"" + small + " synth") == 0);
  CHECK(run_lab("--out \"" + (dir.path / "k1").string() + "\" --set synthetic.num_domains=1 synth") == 2);
  CHECK(run_lab("--out \"" + (dir.path / "c").string() + "\" train-da2s") == 3);
  CHECK(run_lab("--set nope.key=1 synth") == 2);
  CHECK(run_lab("--print-config --set sbsgan.batch=4 synth") == 0);
}
#endif

}
