#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "softmask/cli/commands.hpp"
#include "softmask/common/errors.hpp"

using namespace softmask::cli;

int main(int argc, char** argv) {
  CLI::App app{"softmask-lab: soft-mask background suppression and two-stream re-ID experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out;
  std::int64_t seed = 0;
  bool force = false, resume = false, features_only = false, show_config = false;
  std::vector<std::string> sets;
  std::optional<double> lambda_sc;
  std::optional<std::int64_t> batch, epochs;
  std::string split, context_dir;

  auto* config_opt = app.add_option("--config", config_path, "sectioned YAML config")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "root seed (run.seed)");
  auto* out_opt = app.add_option("--out", out, "run directory (run.out)");
  app.add_flag("--force", force, "re-run a stage that already completed with this config and seed");
  app.add_flag("--resume", resume, "continue training from the newest checkpoint");
  app.add_option("--set", sets, "section.key=value override (repeatable)");
  app.add_flag("--print-config", show_config, "print the resolved config and exit");

  struct Sub {
    std::string name, help;
  };
  const std::vector<Sub> subs = {
      {"synth", "render the synthetic multi-domain corpus"},
      {"train-sbsgan", "train the soft-mask generator"},
      {"gen-softmask", "write soft-mask and style-transferred image trees"},
      {"train-da2s", "train the two-stream re-ID network"},
      {"eval", "extract features and score retrieval"},
      {"domain-dist", "centroid distance between domains"},
      {"report", "collect results into report.md"},
  };
  std::vector<CLI::App*> apps;
  for (const auto& s : subs) apps.push_back(app.add_subcommand(s.name, s.help));
  auto sub = [&](const std::string& name) {
    for (auto* a : apps)
      if (a->get_name() == name) return a;
    return static_cast<CLI::App*>(nullptr);
  };
  sub("train-sbsgan")->add_option("--lambda-sc", lambda_sc, "sbsgan.lambda_sc");
  for (const char* name : {"train-sbsgan", "train-da2s"}) {
    sub(name)->add_option("--batch", batch, "batch size for this stage");
    sub(name)->add_option("--epochs", epochs, "epochs for this stage");
  }
  sub("train-da2s")->add_option("--context-dir", context_dir, "external context images named like the corpus");
  sub("eval")->add_flag("--features-only", features_only, "stop after the feature dump");
  sub("eval")->add_option("--split", split, "test | train")->check(CLI::IsMember({"test", "train"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::string command;
  for (auto* a : apps)
    if (a->parsed()) command = a->get_name();

  try {
    apply_thread_limit();
    std::vector<Override> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw softmask::ConfigError("--set expects section.key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (*seed_opt) overrides.emplace_back("run.seed", std::to_string(seed));
    if (*out_opt) overrides.emplace_back("run.out", out);
    if (lambda_sc) overrides.emplace_back("sbsgan.lambda_sc", std::to_string(*lambda_sc));
    const std::string stage_section = command == "train-da2s" ? "da2s" : "sbsgan";
    if (batch) overrides.emplace_back(stage_section + ".batch", std::to_string(*batch));
    if (epochs) overrides.emplace_back(stage_section + ".epochs", std::to_string(*epochs));
    if (!context_dir.empty()) overrides.emplace_back("da2s.context_dir", context_dir);
    if (!split.empty()) overrides.emplace_back("eval.split", split);

    std::optional<std::filesystem::path> file;
    if (*config_opt) file = config_path;
    CommandOptions options;
    options.config = resolve_config(file, overrides);
    options.force = force;
    options.resume = resume;
    options.features_only = features_only;
    if (show_config) {
      options.config.validate();
      std::cout << options.config.to_yaml() << "# hash " << options.config.hash() << "\n";
      return 0;
    }
    run_command(command, options);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "softmask-lab " << command << ": " << e.what() << "\n";
    return exit_code_for(e);
  }
}
