// Acceptance run: one PASS/FAIL line per criterion.

#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>

#include <unistd.h>

#include "criteria.hpp"
#include "softmask/cli/commands.hpp"
#include "softmask/cli/config.hpp"
#include "softmask/cli/plot.hpp"
#include "softmask/domaindata/synthetic.hpp"
#include "softmask/sbsgan/trainer.hpp"

namespace fs = std::filesystem;
using softmask::sbsgan::Generator;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs <= budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  char head[64];
  std::snprintf(head, sizeof head, "[%s] C%d ", pass ? "PASS" : "FAIL", id);
  char tail[96];
  std::snprintf(tail, sizeof tail, " (%.1fs of %.0fs%s)", secs, budget_s, in_time ? "" : ", over budget");
  std::cout << head << title << ": " << o.detail << tail << std::endl;
}

Outcome from(const criteria::Report& r) {
  if (r.pass()) return {true, std::to_string(r.checks.size()) + " checks"};
  return {false, std::to_string(r.failures()) + "/" + std::to_string(r.checks.size()) +
                     " checks failed, first: " + r.first_failure()};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

int main() {
  torch::set_num_threads(1);
  const fs::path scratch = fs::temp_directory_path() / ("softmask_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(scratch);

  report(1, "loss terms match hand-computed oracles", 10, [] {
    criteria::Report r;
    criteria::loss_oracles(r);
    return from(r);
  });

  report(2, "autograd matches finite differences", 120, [] {
    criteria::Report r;
    criteria::gradient_checks(r, 20);
    criteria::isdc_gradient_checks(r, 20);
    return from(r);
  });

  report(3, "tap wiring matches the propagation oracle", 60, [] {
    criteria::Report r;
    criteria::wiring(r, 50, true);
    return from(r);
  });

  report(4, "retrieval metrics match brute force", 60, [] {
    criteria::Report r;
    criteria::retrieval(r, 1000, 6);
    return from(r);
  });

  // The generator trained here also feeds criteria 6 and 7.
  const softmask::cli::ExperimentConfig cfg;
  std::unique_ptr<Generator> g;
  report(5, "soft masks suppress background and keep the figure", 1200, [&] {
    const auto corpus = softmask::domaindata::generate_synthetic_corpus(cfg.synthetic_spec());
    auto sc = cfg.sbsgan_config();
    softmask::sbsgan::SbsganTrainer trainer(corpus, sc);
    std::vector<softmask::sbsgan::LossRow> last;
    for (int e = 0; e < sc.epochs; ++e) last = trainer.run_epoch();
    g = std::make_unique<Generator>(trainer.generator());
    (*g)->eval();

    std::vector<double> totals;
    for (const auto& row : last)
      if (row.generator) totals.push_back(softmask::sbsgan::generator_total(row, sc.objective.weights));
    auto avg = softmask::cli::moving_average(totals, 20);
    avg.erase(avg.begin(), avg.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(19, avg.size())));
    std::size_t rises = 0;
    for (std::size_t i = 1; i < avg.size(); ++i) rises += avg[i] > avg[i - 1] ? 1 : 0;
    std::cout << "[INFO] final-epoch objective_G: " << totals.size() << " steps, 20-step moving average "
              << (avg.empty() ? std::string("n/a")
                              : fmt(avg.front()) + " -> " + fmt(avg.back()) + ", " + std::to_string(rises) + "/" +
                                    std::to_string(avg.size() ? avg.size() - 1 : 0) + " increases")
              << std::endl;

    const auto s = criteria::suppression(*g, 0);
    return Outcome{s.bg_ratio() <= 0.5 && s.fg_mae <= 0.25,
                   "bg ratio " + fmt(s.bg_ratio()) + " (<= 0.5), fg MAE " + fmt(s.fg_mae) + " (<= 0.25)"};
  });

  report(6, "soft masks shrink the domain gap", 60, [&] {
    if (!g) return Outcome{false, "no generator from C5"};
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed : {0, 1, 2}) {
      const auto gap = criteria::domain_gap(*g, seed);
      wins += gap.softmask < gap.original ? 1 : 0;
      detail += "seed " + std::to_string(seed) + ": " + fmt(gap.original) + " -> " + fmt(gap.softmask) + "; ";
    }
    return Outcome{wins == 3, detail + std::to_string(wins) + "/3 smaller"};
  });

  report(7, "DA-2S mini trains to 95% on 8 identities", 600, [&] {
    if (!g) return Outcome{false, "no generator from C5"};
    const auto t = criteria::trainability(g.get(), 30, 0);
    const double rel = std::fabs(t.initial_loss - t.ln_n) / t.ln_n;
    const bool ok = t.epochs_to_target > 0 && rel <= 0.1;
    return Outcome{ok, "initial loss " + fmt(t.initial_loss) + " vs ln 8 = " + fmt(t.ln_n) + " (rel " + fmt(rel) +
                           "), 95% at epoch " + std::to_string(t.epochs_to_target) + ", final acc " +
                           fmt(t.final_accuracy)};
  });

  report(8, "ablation variants build and train", 120, [] {
    criteria::Report r;
    criteria::ablation(r);
    return from(r);
  });

  report(9, "seeded runs are bit-identical, resume included", 300, [&] {
    criteria::Report r;
    criteria::determinism(r, scratch / "determinism");
    return from(r);
  });

  std::error_code ec;
  fs::remove_all(scratch, ec);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
