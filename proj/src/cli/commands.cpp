#include "softmask/cli/commands.hpp"

#include <opencv2/core.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "softmask/cli/plot.hpp"
#include "softmask/common/archive.hpp"
#include "softmask/common/errors.hpp"
#include "softmask/da2s/model.hpp"
#include "softmask/da2s/trainer.hpp"
#include "softmask/domaindata/corpus_io.hpp"
#include "softmask/domaindata/synthetic.hpp"
#include "softmask/reideval/eval.hpp"
#include "softmask/sbsgan/networks.hpp"
#include "softmask/sbsgan/trainer.hpp"

namespace fs = std::filesystem;

namespace softmask::cli {
namespace {

constexpr std::size_t kInferBatch = 32;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Context {
  const CommandOptions& opt;
  const ExperimentConfig& cfg;
  RunDir run;

  void say(const std::string& line) const {
    if (!opt.quiet) std::cout << line << std::endl;
  }

  std::string rel(const fs::path& p) const { return fs::relative(p, run.root()).generic_string(); }

  RunManifest begin(const std::string& stage) const {
    if (!opt.force) run.refuse_rerun(stage, cfg);
    RunManifest m;
    m.stage = stage;
    m.config_hash = cfg.hash();
    m.seed = cfg.seed();
    m.code_version = code_version();
    m.started = utc_timestamp();
    return m;
  }

  RunManifest require(const std::string& stage) const {
    auto m = run.require(stage);
    if (m.config_hash != cfg.hash() || m.seed != cfg.seed())
      say("note: stage " + stage + " was produced under config " + m.config_hash.substr(0, 12) + " seed " +
          std::to_string(m.seed));
    return m;
  }

  RunManifest finish(RunManifest m) const {
    m.finished = utc_timestamp();
    run.write_manifest(m);
    return m;
  }

  domaindata::Corpus corpus(const std::string& split) const {
    domaindata::LayoutSpec layout;
    layout.height = cfg.get_int("synthetic.height");
    layout.width = cfg.get_int("synthetic.width");
    layout.masks_required = split == "train";
    layout.num_domains = static_cast<int>(cfg.get_int("synthetic.num_domains"));
    return domaindata::load_corpus(run.path("data") / split, layout);
  }

  torch::Tensor read_tree(const fs::path& dir, const domaindata::Corpus& corpus,
                          const std::vector<std::size_t>& members) const {
    std::vector<torch::Tensor> imgs;
    imgs.reserve(members.size());
    for (auto i : members) {
      const auto path = dir / (corpus[i].stem() + ".png");
      if (!fs::exists(path)) throw PrerequisiteError("missing " + path.string() + "; re-run gen-softmask");
      imgs.push_back(domaindata::read_image_png(path, corpus.height(), corpus.width()));
    }
    return torch::stack(imgs);
  }
};

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

reideval::FeatureSet to_feature_set(const torch::Tensor& rows, const domaindata::Corpus& corpus,
                                    const std::vector<std::size_t>& members) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  auto flat = rows.reshape({rows.size(0), -1}).to(torch::kFloat64).contiguous();
  reideval::FeatureSet fs;
  fs.features = Eigen::Map<const RowMajor>(flat.data_ptr<double>(), flat.size(0), flat.size(1));
  for (auto i : members) {
    fs.identities.push_back(corpus[i].identity);
    fs.cameras.push_back(corpus[i].camera);
    fs.domains.push_back(corpus[i].domain);
  }
  fs.validate();
  return fs;
}

std::vector<std::size_t> rows_of_domain(const reideval::FeatureSet& set, int domain) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (set.domains[i] == domain) rows.push_back(i);
  return rows;
}

int distance_source_domain(const ExperimentConfig& cfg) {
  const int q = static_cast<int>(cfg.get_int("eval.query_domain"));
  const int t = static_cast<int>(cfg.get_int("da2s.train_domain"));
  if (t >= 0 && t != q) return t;
  return q == 0 ? 1 : 0;
}

/// Writes CSV + scatter plot for one distance and returns the distance.
double domain_distance_artifacts(const Context& ctx, const reideval::FeatureSet& all, int a, int b,
                                 const std::string& tag, const fs::path& dir, RunManifest& m) {
  const auto& cfg = ctx.cfg;
  auto embedder = reideval::make_embedder(cfg.get_string("eval.embedder"));
  const auto set_a = all.subset(rows_of_domain(all, a));
  const auto set_b = all.subset(rows_of_domain(all, b));
  if (set_a.size() == 0 || set_b.size() == 0)
    throw DataError("domain distance: domain " + std::to_string(set_a.size() == 0 ? a : b) + " has no samples");
  const auto dd = reideval::domain_centroid_distance(set_a, set_b, *embedder, cfg.distance_options());
  const auto csv = dir / ("scatter_" + tag + ".csv");
  const auto png = dir / ("scatter_" + tag + ".png");
  write_file_atomically(csv, reideval::scatter_csv(dd.scatter));
  plot_scatter(dd.scatter, dd.centroid_a, dd.centroid_b,
               {"domain " + std::to_string(a), "domain " + std::to_string(b)},
               {tag + " features, centroid L1 " + fmt(dd.distance), embedder->name() + " 1", embedder->name() + " 2"},
               png);
  m.artifacts["scatter_" + tag] = ctx.rel(png);
  m.artifacts["scatter_" + tag + "_csv"] = ctx.rel(csv);
  m.values["distance_" + tag] = dd.distance;
  return dd.distance;
}

// synth

RunManifest cmd_synth(const Context& ctx) {
  auto m = ctx.begin(kStageSynth);
  const auto train_spec = ctx.cfg.synthetic_spec();
  const auto test_spec = ctx.cfg.test_spec();
  const auto data = ctx.run.path("data");
  fs::remove_all(data);
  const auto train = domaindata::generate_synthetic_corpus(train_spec);
  domaindata::write_corpus(train, data / "train");
  const auto test = domaindata::generate_synthetic_corpus(test_spec);
  domaindata::write_corpus(test, data / "test");
  ctx.say("synth: " + std::to_string(train.size()) + " training and " + std::to_string(test.size()) +
          " test images over " + std::to_string(train.num_domains()) + " domains");
  m.artifacts["train"] = ctx.rel(data / "train");
  m.artifacts["test"] = ctx.rel(data / "test");
  m.values["train_samples"] = static_cast<double>(train.size());
  m.values["test_samples"] = static_cast<double>(test.size());
  m.values["min_palette_distance"] = domaindata::min_palette_distance(train_spec);
  return ctx.finish(m);
}

// train-sbsgan

void plot_sbsgan_losses(const fs::path& log, const fs::path& png) {
  const auto rows = sbsgan::read_loss_log(log);
  struct Term {
    const char* name;
    double sbsgan::LossRow::*field;
  };
  const Term terms[] = {{"adv_d", &sbsgan::LossRow::adv_d}, {"adv_g", &sbsgan::LossRow::adv_g},
                        {"cls_r", &sbsgan::LossRow::cls_r}, {"cls_f", &sbsgan::LossRow::cls_f},
                        {"rec", &sbsgan::LossRow::rec},     {"idc", &sbsgan::LossRow::idc},
                        {"bgs", &sbsgan::LossRow::bgs},     {"sc", &sbsgan::LossRow::sc}};
  std::vector<Series> series;
  for (const auto& t : terms) {
    Series s{t.name, {}, {}};
    for (const auto& r : rows)
      if (std::isfinite(r.*t.field)) {
        s.x.push_back(static_cast<double>(r.step));
        s.y.push_back(r.*t.field);
      }
    s.y = moving_average(s.y, 20);
    if (!s.x.empty()) series.push_back(std::move(s));
  }
  plot_lines(series, {"SBSGAN losses (20-update moving average)", "update", "loss"}, png);
}

RunManifest cmd_train_sbsgan(const Context& ctx) {
  auto m = ctx.begin(kStageSbsgan);
  ctx.require(kStageSynth);
  const auto corpus = ctx.corpus("train");
  const auto out = ctx.run.path("sbsgan");
  if (!ctx.opt.resume) fs::remove_all(out);
  const auto config = ctx.cfg.sbsgan_config();
  const auto run = sbsgan::train_sbsgan(corpus, config, out, ctx.opt.resume,
                                        [&](int epoch, const std::vector<sbsgan::LossRow>& rows) {
                                          double rec = 0, sc = 0;
                                          int n = 0;
                                          for (const auto& r : rows)
                                            if (r.generator) rec += r.rec, sc += r.sc, ++n;
                                          ctx.say("train-sbsgan: epoch " + std::to_string(epoch) + "/" +
                                                  std::to_string(config.epochs) + " rec " + fmt(rec / n) + " sc " +
                                                  fmt(sc / n));
                                        });
  if (run.start_epoch > 1) ctx.say("train-sbsgan: resumed after epoch " + std::to_string(run.start_epoch - 1));
  const auto png = out / "loss_curves.png";
  plot_sbsgan_losses(run.loss_log, png);
  const auto latest = sbsgan::latest_checkpoint(out);
  if (!latest) throw Error("train-sbsgan finished without a checkpoint");
  m.artifacts["checkpoint"] = ctx.rel(*latest);
  m.artifacts["loss_log"] = ctx.rel(run.loss_log);
  m.artifacts["loss_plot"] = ctx.rel(png);
  m.values["epochs"] = config.epochs;
  m.values["resumed_from_epoch"] = run.start_epoch - 1;
  return ctx.finish(m);
}

// gen-softmask

RunManifest cmd_gen_softmask(const Context& ctx) {
  auto m = ctx.begin(kStageSoftmask);
  ctx.require(kStageSbsgan);
  const auto ckpt = sbsgan::latest_checkpoint(ctx.run.path("sbsgan"));
  if (!ckpt) throw PrerequisiteError("missing prerequisite: train-sbsgan left no checkpoint");
  auto g = sbsgan::load_generator(*ckpt);
  const int K = static_cast<int>(ctx.cfg.get_int("synthetic.num_domains"));
  if (g->num_domains() != K)
    throw ConfigError("generator was trained for K = " + std::to_string(g->num_domains()) + ", config has K = " +
                      std::to_string(K));
  const int q = static_cast<int>(ctx.cfg.get_int("eval.query_domain"));

  auto write_batch = [](const torch::Tensor& out, const domaindata::Corpus& corpus,
                        const std::vector<std::size_t>& members, const fs::path& dir) {
    for (std::size_t j = 0; j < members.size(); ++j)
      domaindata::write_image_png(out[static_cast<std::int64_t>(j)], dir / (corpus[members[j]].stem() + ".png"));
  };

  for (const std::string split : {"train", "test"}) {
    const auto corpus = ctx.corpus(split);
    const auto soft_dir = ctx.run.path("softmask") / split;
    fs::remove_all(soft_dir);
    fs::create_directories(soft_dir);
    for (std::size_t s = 0; s < corpus.size(); s += kInferBatch) {
      std::vector<std::size_t> members;
      for (std::size_t i = s; i < std::min(corpus.size(), s + kInferBatch); ++i) members.push_back(i);
      write_batch(sbsgan::infer_softmask(g, domaindata::stack_images(corpus, members)), corpus, members, soft_dir);
    }
    m.artifacts["softmask_" + split] = ctx.rel(soft_dir);
    if (split != "train") continue;

    const auto style_dir = ctx.run.path("style") / split;
    fs::remove_all(style_dir);
    fs::create_directories(style_dir);
    for (int t = 0; t < K; ++t) {
      std::vector<std::size_t> targeted;
      for (std::size_t i = 0; i < corpus.size(); ++i)
        if (context_target_domain(corpus[i].domain, q, K) == t) targeted.push_back(i);
      for (std::size_t s = 0; s < targeted.size(); s += kInferBatch) {
        std::vector<std::size_t> members(targeted.begin() + static_cast<std::ptrdiff_t>(s),
                                         targeted.begin() + static_cast<std::ptrdiff_t>(std::min(targeted.size(), s + kInferBatch)));
        write_batch(sbsgan::infer_style(g, domaindata::stack_images(corpus, members), t), corpus, members, style_dir);
      }
    }
    m.artifacts["style_" + split] = ctx.rel(style_dir);
  }
  m.artifacts["generator"] = ctx.rel(*ckpt);
  ctx.say("gen-softmask: soft-mask and style trees written from " + ckpt->filename().string());
  return ctx.finish(m);
}

// train-da2s

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<double> column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) {
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(c < r.size() ? r[c] : std::nan(""));
        return out;
      }
    throw DataError("CSV has no column '" + name + "'");
  }
};

CsvTable read_numeric_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line, cell;
  std::getline(in, line);
  for (std::istringstream h(line); std::getline(h, cell, ',');) t.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (std::istringstream r(line); std::getline(r, cell, ',');)
      row.push_back(cell.empty() ? std::nan("") : std::strtod(cell.c_str(), nullptr));
    t.rows.push_back(std::move(row));
  }
  return t;
}

da2s::PairSet build_pairs(const Context& ctx, const domaindata::Corpus& corpus, std::vector<std::size_t>& members,
                          int* num_ids) {
  const auto& cfg = ctx.cfg;
  const int train_domain = static_cast<int>(cfg.get_int("da2s.train_domain"));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (train_domain < 0 || corpus[i].domain == train_domain) members.push_back(i);
  if (members.size() < 2) throw DataError("train-da2s: fewer than two training images in the selected domain");
  const auto b = cfg.backbone();
  da2s::PairSet pairs;
  pairs.soft = fit_input(ctx.read_tree(ctx.run.path("softmask/train"), corpus, members), b.input_height, b.input_width);
  const auto& context_dir = cfg.get_string("da2s.context_dir");
  torch::Tensor context;
  if (!context_dir.empty()) {
    context = ctx.read_tree(context_dir, corpus, members);
  } else if (cfg.get_string("da2s.context") == "original") {
    context = domaindata::stack_images(corpus, members);
  } else {
    context = ctx.read_tree(ctx.run.path("style/train"), corpus, members);
  }
  pairs.context = fit_input(context, b.input_height, b.input_width);
  std::vector<int> ids;
  for (auto i : members) ids.push_back(corpus[i].identity);
  pairs.labels = da2s::contiguous_labels(ids, num_ids);
  return pairs;
}

double inference_accuracy(da2s::Da2sModel& model, const da2s::PairSet& pairs) {
  std::int64_t correct = 0;
  const auto n = static_cast<std::int64_t>(pairs.size());
  for (std::int64_t s = 0; s < n; s += static_cast<std::int64_t>(kInferBatch)) {
    const auto e = std::min(n, s + static_cast<std::int64_t>(kInferBatch));
    torch::NoGradGuard no_grad;
    model->eval();
    auto pred = model->forward(pairs.soft.slice(0, s, e), pairs.context.slice(0, s, e)).argmax(1);
    for (std::int64_t i = s; i < e; ++i)
      correct += pred[i - s].item<std::int64_t>() == pairs.labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::optional<fs::path> latest_da2s_checkpoint(const fs::path& dir) {
  std::optional<fs::path> best;
  if (!fs::is_directory(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".ckpt" && (!best || e.path().filename() > best->filename())) best = e.path();
  return best;
}

RunManifest cmd_train_da2s(const Context& ctx) {
  auto m = ctx.begin(kStageDa2s);
  ctx.require(kStageSoftmask);
  const auto& cfg = ctx.cfg;
  const auto corpus = ctx.corpus("train");
  std::vector<std::size_t> members;
  int num_ids = 0;
  const auto pairs = build_pairs(ctx, corpus, members, &num_ids);
  const auto out = ctx.run.path("da2s");
  if (!ctx.opt.resume) fs::remove_all(out);
  const auto train_cfg = cfg.da2s_train_config();
  auto model = da2s::build_model(cfg.da2s_options(num_ids));
  ctx.say("train-da2s: " + std::to_string(pairs.size()) + " pairs, " + std::to_string(num_ids) + " identities, " +
          da2s::variant_name(cfg.backbone().variant) + " backbone, feature dim " +
          std::to_string(model->feature_dim()));
  const auto run = da2s::train_da2s(model, pairs, train_cfg, out, static_cast<int>(cfg.get_int("da2s.checkpoint_every")),
                                    ctx.opt.resume, [&](const da2s::EpochRecord& r) {
                                      ctx.say("train-da2s: epoch " + std::to_string(r.epoch) + "/" +
                                              std::to_string(train_cfg.epochs) + " lr " + fmt(r.lr) + " loss " +
                                              fmt(r.loss) + " batch acc " + fmt(r.batch_accuracy));
                                    });
  const auto ckpt = latest_da2s_checkpoint(out / "checkpoints");
  if (!ckpt) throw Error("train-da2s finished without a checkpoint");
  auto trained = da2s::load_model(*ckpt);
  const double acc = inference_accuracy(trained, pairs);
  const auto log = read_numeric_csv(run.log);
  const auto png = out / "train_curve.png";
  const auto epochs = log.column("epoch");
  plot_lines({{"loss", epochs, log.column("loss")}, {"batch accuracy", epochs, log.column("batch_accuracy")}},
             {"DA-2S training", "epoch", "value"}, png);
  ctx.say("train-da2s: training accuracy " + fmt(acc));
  m.artifacts["checkpoint"] = ctx.rel(*ckpt);
  m.artifacts["train_log"] = ctx.rel(run.log);
  m.artifacts["train_plot"] = ctx.rel(png);
  m.values["training_accuracy"] = acc;
  m.values["num_ids"] = num_ids;
  m.values["feature_dim"] = static_cast<double>(trained->feature_dim());
  return ctx.finish(m);
}

// eval

RunManifest cmd_eval(const Context& ctx) {
  auto m = ctx.begin(kStageEval);
  ctx.require(kStageDa2s);
  ctx.require(kStageSoftmask);
  const auto& cfg = ctx.cfg;
  const auto ckpt = latest_da2s_checkpoint(ctx.run.path("da2s/checkpoints"));
  if (!ckpt) throw PrerequisiteError("missing prerequisite: train-da2s left no checkpoint");
  auto model = da2s::load_model(*ckpt);
  const auto split = cfg.get_string("eval.split");
  const auto corpus = ctx.corpus(split);
  const auto& b = model->options().backbone;
  const auto dir = ctx.run.path("eval");
  fs::remove_all(dir);
  fs::create_directories(dir);

  const auto members = all_rows(corpus.size());
  std::vector<torch::Tensor> chunks;
  for (std::size_t s = 0; s < corpus.size(); s += kInferBatch) {
    std::vector<std::size_t> batch(members.begin() + static_cast<std::ptrdiff_t>(s),
                                   members.begin() + static_cast<std::ptrdiff_t>(std::min(corpus.size(), s + kInferBatch)));
    auto soft = fit_input(ctx.read_tree(ctx.run.path("softmask") / split, corpus, batch), b.input_height, b.input_width);
    auto orig = fit_input(domaindata::stack_images(corpus, batch), b.input_height, b.input_width);
    chunks.push_back(da2s::extract_features(model, soft, orig));
  }
  const auto feats = torch::cat(chunks);
  std::vector<int> ids, cams, doms;
  for (const auto& s : corpus.samples()) ids.push_back(s.identity), cams.push_back(s.camera), doms.push_back(s.domain);
  da2s::write_feature_dump(dir / "features.bin", dir / "features.csv", feats, ids, cams, doms);
  m.artifacts["features"] = ctx.rel(dir / "features.bin");
  m.artifacts["features_csv"] = ctx.rel(dir / "features.csv");
  m.values["feature_dim"] = static_cast<double>(feats.size(1));
  if (ctx.opt.features_only) {
    m.values["features_only"] = 1;
    ctx.say("eval: feature dump written, stopping (--features-only)");
    return ctx.finish(m);
  }

  const auto all = to_feature_set(feats, corpus, members);
  const int q = static_cast<int>(cfg.get_int("eval.query_domain"));
  const auto [query_rows, gallery_rows] = split_query_gallery(corpus, q);
  reideval::Metrics metrics;
  try {
    metrics = reideval::evaluate(all.subset(query_rows), all.subset(gallery_rows), cfg.ranks(), cfg.protocol());
  } catch (const ProtocolError& e) {
    throw ProtocolError(std::string("eval: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(std::string("eval: ") + e.what());
  }
  const std::string note = split == "train" ? "train-split (sanity only)" : "";
  const auto label = "DA-2S " + da2s::variant_name(b.variant) + " (domain " + std::to_string(q) + ")";
  write_file_atomically(dir / "metrics.csv", reideval::metrics_csv(metrics));
  write_file_atomically(dir / "metrics.md", reideval::metrics_markdown(label, metrics, note));

  std::vector<int> curve_ranks;
  for (int r = 1; r <= static_cast<int>(std::min<std::size_t>(20, gallery_rows.size())); ++r) curve_ranks.push_back(r);
  const auto ranking = reideval::rank_gallery(all.subset(query_rows), all.subset(gallery_rows), cfg.protocol());
  const auto cmc = reideval::compute_cmc(ranking, curve_ranks);
  std::string cmc_csv = "rank,accuracy\n";
  std::vector<double> xs;
  for (std::size_t i = 0; i < curve_ranks.size(); ++i) {
    cmc_csv += std::to_string(curve_ranks[i]) + "," + fmt(cmc[i]) + "\n";
    xs.push_back(curve_ranks[i]);
  }
  write_file_atomically(dir / "cmc.csv", cmc_csv);
  plot_lines({{label, xs, cmc}}, {"CMC", "rank", "matching rate"}, dir / "cmc.png");

  m.artifacts["metrics"] = ctx.rel(dir / "metrics.csv");
  m.artifacts["metrics_md"] = ctx.rel(dir / "metrics.md");
  m.artifacts["cmc"] = ctx.rel(dir / "cmc.csv");
  m.artifacts["cmc_plot"] = ctx.rel(dir / "cmc.png");
  m.values["mAP"] = metrics.map;
  for (std::size_t i = 0; i < metrics.ranks.size(); ++i)
    m.values["rank-" + std::to_string(metrics.ranks[i])] = metrics.cmc[i];
  m.values["queries"] = static_cast<double>(query_rows.size());
  m.values["gallery"] = static_cast<double>(gallery_rows.size());
  if (split == "train") m.values["train_split"] = 1;

  if (corpus.num_domains() >= 2) {
    const double d = domain_distance_artifacts(ctx, all, distance_source_domain(cfg), q, "da2s", dir, m);
    write_file_atomically(dir / "domain_distance.csv", "features,distance\nda2s," + fmt(d) + "\n");
  }
  ctx.say("eval: mAP " + fmt(metrics.map) + ", rank-1 " + fmt(metrics.cmc.front()) + (note.empty() ? "" : " [" + note + "]"));
  return ctx.finish(m);
}

// domain-dist

RunManifest cmd_domain_dist(const Context& ctx) {
  auto m = ctx.begin(kStageDomainDist);
  const auto& cfg = ctx.cfg;
  if (cfg.get_int("synthetic.num_domains") < 2) throw ConfigError("domain-dist needs synthetic.num_domains >= 2");
  const int a = distance_source_domain(cfg);
  const int b = static_cast<int>(cfg.get_int("eval.query_domain"));
  const auto dir = ctx.run.path("domain_dist");
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string csv = "features,distance\n";
  if (cfg.get_string("eval.features") == "pixels") {
    ctx.require(kStageSoftmask);
    const auto corpus = ctx.corpus("test");
    const auto members = all_rows(corpus.size());
    const auto orig = to_feature_set(domaindata::stack_images(corpus, members), corpus, members);
    const auto soft = to_feature_set(ctx.read_tree(ctx.run.path("softmask/test"), corpus, members), corpus, members);
    const double d_orig = domain_distance_artifacts(ctx, orig, a, b, "original", dir, m);
    const double d_soft = domain_distance_artifacts(ctx, soft, a, b, "softmask", dir, m);
    csv += "original," + fmt(d_orig) + "\nsoftmask," + fmt(d_soft) + "\n";
    ctx.say("domain-dist: original " + fmt(d_orig) + ", soft-mask " + fmt(d_soft));
  } else {
    ctx.require(kStageEval);
    const auto all = reideval::read_feature_dump(ctx.run.path("eval/features.bin"), ctx.run.path("eval/features.csv"));
    const double d = domain_distance_artifacts(ctx, all, a, b, "da2s", dir, m);
    csv += "da2s," + fmt(d) + "\n";
    ctx.say("domain-dist: da2s " + fmt(d));
  }
  write_file_atomically(dir / "domain_distance.csv", csv);
  m.artifacts["distances"] = ctx.rel(dir / "domain_distance.csv");
  m.values["domain_a"] = a;
  m.values["domain_b"] = b;
  return ctx.finish(m);
}

// report

RunManifest cmd_report(const Context& ctx) {
  auto m = ctx.begin(kStageReport);
  const auto eval = ctx.run.manifest(kStageEval);
  const auto dist = ctx.run.manifest(kStageDomainDist);
  if (!eval && !dist) throw PrerequisiteError("missing prerequisite: run `eval` or `domain-dist` first");
  std::string md = "# softmask-lab report\n\n";
  md += "- config hash: `" + ctx.cfg.hash() + "`\n- seed: " + std::to_string(ctx.cfg.seed()) +
        "\n- code version: " + code_version() + "\n\n## Stages\n\n| Stage | Finished | Config |\n|---|---|---|\n";
  for (const auto* stage : {kStageSynth, kStageSbsgan, kStageSoftmask, kStageDa2s, kStageEval, kStageDomainDist})
    if (auto sm = ctx.run.manifest(stage))
      md += std::string("| ") + stage + " | " + sm->finished + " | `" + sm->config_hash.substr(0, 12) + "` |\n";

  if (const auto path = ctx.run.path("sbsgan/losses.csv"); fs::exists(path)) {
    const auto rows = sbsgan::read_loss_log(path);
    std::map<std::string, std::pair<double, int>> tail;
    const std::size_t from = rows.size() > 200 ? rows.size() - 200 : 0;
    for (std::size_t i = from; i < rows.size(); ++i) {
      const auto& r = rows[i];
      for (auto [k, v] : {std::pair{"adv_d", r.adv_d}, {"adv_g", r.adv_g}, {"cls_r", r.cls_r}, {"cls_f", r.cls_f},
                          {"rec", r.rec}, {"idc", r.idc}, {"bgs", r.bgs}, {"sc", r.sc}})
        if (std::isfinite(v)) tail[k].first += v, ++tail[k].second;
    }
    md += "\n## SBSGAN (mean of the last " + std::to_string(rows.size() - from) + " updates)\n\n| Term | Mean |\n|---|---|\n";
    for (const auto& [k, v] : tail) md += "| " + k + " | " + fmt(v.first / v.second) + " |\n";
  }
  if (auto dm = ctx.run.manifest(kStageDa2s))
    md += "\n## DA-2S\n\nTraining accuracy (inference mode): " + fmt(dm->values["training_accuracy"]) + " over " +
          fmt(dm->values["num_ids"]) + " identities.\n";
  if (eval && fs::exists(ctx.run.path("eval/metrics.md")))
    md += "\n## Retrieval\n\n" + read_text(ctx.run.path("eval/metrics.md"));
  std::string dd;
  if (dist)
    for (const auto& [k, v] : dist->values)
      if (k.rfind("distance_", 0) == 0) dd += "| " + k.substr(9) + " | " + fmt(v) + " |\n";
  if (eval)
    for (const auto& [k, v] : eval->values)
      if (k.rfind("distance_", 0) == 0) dd += "| " + k.substr(9) + " (eval) | " + fmt(v) + " |\n";
  if (!dd.empty()) md += "\n## Domain distance (centroid L1)\n\n| Features | Distance |\n|---|---|\n" + dd;
  const auto path = ctx.run.path("report.md");
  write_file_atomically(path, md);
  m.artifacts["report"] = ctx.rel(path);
  ctx.say("report: " + path.string());
  return ctx.finish(m);
}

}  // namespace

ExperimentConfig resolve_config(const std::optional<fs::path>& file, const std::vector<Override>& overrides) {
  ExperimentConfig cfg;
  if (file) {
    cfg = load_config(*file);
  } else {
    ExperimentConfig probe;
    for (const auto& [k, v] : overrides)
      if (k == "run.out") probe.set(k, v);
    const auto echo = probe.out() / "config.yaml";
    if (fs::exists(echo)) cfg = load_config(echo);
  }
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {kStageSynth, kStageSbsgan,     kStageSoftmask, kStageDa2s,
                                                 kStageEval,  kStageDomainDist, kStageReport};
  return names;
}

RunManifest run_command(const std::string& name, const CommandOptions& options) {
  const auto& cfg = options.config;
  cfg.validate();
  Context ctx{options, cfg, RunDir(cfg.out())};
  RunLock lock(cfg.out());
  write_file_atomically(ctx.run.path("config.yaml"), cfg.to_yaml());
  if (name == kStageSynth) return cmd_synth(ctx);
  if (name == kStageSbsgan) return cmd_train_sbsgan(ctx);
  if (name == kStageSoftmask) return cmd_gen_softmask(ctx);
  if (name == kStageDa2s) return cmd_train_da2s(ctx);
  if (name == kStageEval) return cmd_eval(ctx);
  if (name == kStageDomainDist) return cmd_domain_dist(ctx);
  if (name == kStageReport) return cmd_report(ctx);
  throw ArgumentError("unknown command '" + name + "'");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const PrerequisiteError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const ParseError*>(&e) || dynamic_cast<const DataError*>(&e))
    return 2;
  return 1;
}

void apply_thread_limit() {
  const char* env = std::getenv("SOFTMASK_LAB_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("SOFTMASK_LAB_THREADS must be a positive integer, got '") + env + "'");
  torch::set_num_threads(static_cast<int>(n));
  torch::set_num_interop_threads(static_cast<int>(n));
  cv::setNumThreads(static_cast<int>(n));
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_query_gallery(const domaindata::Corpus& corpus,
                                                                                  int domain) {
  std::set<std::pair<int, int>> seen;
  std::vector<std::size_t> query, gallery;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    if (s.domain != domain) continue;
    (seen.insert({s.identity, s.camera}).second ? query : gallery).push_back(i);
  }
  return {query, gallery};
}

int context_target_domain(int source_domain, int query_domain, int num_domains) {
  if (num_domains < 2) return source_domain;
  if (source_domain != query_domain) return query_domain;
  return (source_domain + 1) % num_domains;
}

torch::Tensor fit_input(const torch::Tensor& images, std::int64_t height, std::int64_t width) {
  if (images.size(2) == height && images.size(3) == width) return images;
  namespace F = torch::nn::functional;
  return F::interpolate(images, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{height, width})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

}  // namespace softmask::cli
