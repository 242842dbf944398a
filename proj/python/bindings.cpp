#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include <cstring>

#include "softmask/cli/commands.hpp"
#include "softmask/cli/config.hpp"
#include "softmask/common/errors.hpp"
#include "softmask/da2s/backbone.hpp"
#include "softmask/da2s/model.hpp"
#include "softmask/domaindata/synthetic.hpp"
#include "softmask/reideval/eval.hpp"
#include "softmask/sbsgan/losses.hpp"

namespace py = pybind11;
using namespace softmask;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const FloatArray& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  auto t = torch::empty(shape, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), a.data(), static_cast<std::size_t>(a.size()) * sizeof(float));
  return t;
}

py::array_t<float> to_numpy(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<float>(), static_cast<std::size_t>(c.numel()) * sizeof(float));
  return out;
}

reideval::FeatureSet feature_set(const DoubleArray& rows, std::vector<int> ids, std::vector<int> cams) {
  if (rows.ndim() != 2) throw ArgumentError("features must be a 2-D array");
  reideval::FeatureSet fs;
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  fs.features = Eigen::Map<const RowMajor>(rows.data(), rows.shape(0), rows.shape(1));
  fs.domains.assign(ids.size(), 0);
  fs.identities = std::move(ids);
  fs.cameras = std::move(cams);
  fs.validate();
  return fs;
}

cli::ExperimentConfig config_from(const std::string& yaml, const std::map<std::string, std::string>& overrides) {
  auto cfg = cli::parse_config_text(yaml);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

py::dict manifest_dict(const cli::RunManifest& m) {
  py::dict d;
  d["stage"] = m.stage;
  d["config_hash"] = m.config_hash;
  d["seed"] = m.seed;
  d["artifacts"] = m.artifacts;
  d["values"] = m.values;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "soft-mask background suppression and two-stream re-ID core";

  static py::exception<Error> base(m, "Error");
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<PrerequisiteError> prereq_error(m, "PrerequisiteError", base.ptr());
  static py::exception<NumericError> numeric_error(m, "NumericError", base.ptr());
  static py::exception<ProtocolError> protocol_error(m, "ProtocolError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const PrerequisiteError& e) {
      py::set_error(prereq_error, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric_error, e.what());
    } catch (const ProtocolError& e) {
      py::set_error(protocol_error, e.what());
    } catch (const ArgumentError& e) {
      py::set_error(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "synthetic_corpus",
      [](int num_domains, int identities, int images, int cameras, std::int64_t height, std::int64_t width,
         std::uint64_t seed) {
        domaindata::SyntheticSpec spec;
        spec.num_domains = num_domains;
        spec.identities_per_domain = identities;
        spec.images_per_identity = images;
        spec.cameras_per_domain = cameras;
        spec.height = height;
        spec.width = width;
        spec.seed = seed;
        const auto corpus = domaindata::generate_synthetic_corpus(spec);
        std::vector<std::size_t> all(corpus.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        std::vector<int> ids, cams, doms;
        for (const auto& s : corpus.samples()) ids.push_back(s.identity), cams.push_back(s.camera), doms.push_back(s.domain);
        py::dict d;
        d["images"] = to_numpy(domaindata::stack_images(corpus, all));
        d["masks"] = to_numpy(domaindata::stack_masks(corpus, all));
        d["identities"] = ids;
        d["cameras"] = cams;
        d["domains"] = doms;
        return d;
      },
      py::arg("num_domains") = 2, py::arg("identities") = 25, py::arg("images") = 8, py::arg("cameras") = 2,
      py::arg("height") = 64, py::arg("width") = 32, py::arg("seed") = 0,
      "Renders the synthetic corpus; images [N,3,H,W] in [-1,1], masks [N,H,W].");

  m.def(
      "bgs_term",
      [](const FloatArray& images, const FloatArray& masks, const FloatArray& soft, bool mse) {
        return sbsgan::bgs_term(to_tensor(images), to_tensor(masks), to_tensor(soft),
                                mse ? sbsgan::NormReduction::kMse : sbsgan::NormReduction::kL2)
            .item<double>();
      },
      py::arg("images"), py::arg("masks"), py::arg("soft"), py::arg("mse") = false);

  m.def(
      "sc_term",
      [](const FloatArray& soft, const FloatArray& images, const FloatArray& masks,
         const std::vector<FloatArray>& styled) {
        std::vector<torch::Tensor> ts;
        for (const auto& s : styled) ts.push_back(to_tensor(s));
        return sbsgan::sc_term(to_tensor(soft), to_tensor(images), to_tensor(masks), ts).item<double>();
      },
      py::arg("soft"), py::arg("images"), py::arg("masks"), py::arg("styled_foreign"));

  m.def(
      "wiring",
      [](const std::string& variant) {
        const auto v = da2s::parse_variant(variant);
        const auto table = da2s::checked_wiring(v == da2s::Variant::kFull ? da2s::BackboneConfig::full()
                                                                          : da2s::BackboneConfig::mini());
        py::list taps;
        for (const auto& t : table.taps) {
          py::dict d;
          d["name"] = t.name;
          d["height"] = t.height;
          d["width"] = t.width;
          d["channels"] = t.channels;
          taps.append(d);
        }
        py::dict out;
        out["taps"] = taps;
        out["feature_dim"] = table.feature_dim();
        return out;
      },
      py::arg("variant") = "mini", "Tap table of the full or mini backbone.");

  m.def(
      "da2s_features",
      [](const FloatArray& soft, const FloatArray& context, int num_ids, const std::string& variant, std::uint64_t seed) {
        torch::manual_seed(seed);
        da2s::Da2sOptions o;
        o.num_ids = num_ids;
        o.backbone = da2s::parse_variant(variant) == da2s::Variant::kFull ? da2s::BackboneConfig::full()
                                                                          : da2s::BackboneConfig::mini();
        auto model = da2s::build_model(o);
        return to_numpy(da2s::extract_features(model, to_tensor(soft), to_tensor(context)));
      },
      py::arg("soft"), py::arg("context"), py::arg("num_ids") = 2, py::arg("variant") = "mini", py::arg("seed") = 0,
      "Features of a freshly initialised DA-2S model.");

  m.def(
      "evaluate",
      [](const DoubleArray& query, std::vector<int> query_ids, std::vector<int> query_cams, const DoubleArray& gallery,
         std::vector<int> gallery_ids, std::vector<int> gallery_cams, std::vector<int> ranks, bool cross_camera) {
        const auto metrics = reideval::evaluate(feature_set(query, std::move(query_ids), std::move(query_cams)),
                                                feature_set(gallery, std::move(gallery_ids), std::move(gallery_cams)),
                                                ranks, reideval::Protocol{cross_camera});
        py::dict d;
        d["mAP"] = metrics.map;
        for (std::size_t i = 0; i < metrics.ranks.size(); ++i) d[py::str("rank-" + std::to_string(metrics.ranks[i]))] = metrics.cmc[i];
        return d;
      },
      py::arg("query"), py::arg("query_ids"), py::arg("query_cams"), py::arg("gallery"), py::arg("gallery_ids"),
      py::arg("gallery_cams"), py::arg("ranks") = std::vector<int>{1, 5, 10}, py::arg("cross_camera") = true);

  m.def(
      "domain_distance",
      [](const DoubleArray& a, const DoubleArray& b, const std::string& embedder, std::size_t fit_count,
         std::size_t plot_count, std::uint64_t seed) {
        auto sa = feature_set(a, std::vector<int>(static_cast<std::size_t>(a.shape(0)), 0),
                              std::vector<int>(static_cast<std::size_t>(a.shape(0)), 0));
        auto sb = feature_set(b, std::vector<int>(static_cast<std::size_t>(b.shape(0)), 0),
                              std::vector<int>(static_cast<std::size_t>(b.shape(0)), 0));
        auto e = reideval::make_embedder(embedder);
        return reideval::domain_centroid_distance(sa, sb, *e, {fit_count, plot_count, seed}).distance;
      },
      py::arg("a"), py::arg("b"), py::arg("embedder") = "pca", py::arg("fit_count") = 5000,
      py::arg("plot_count") = 200, py::arg("seed") = 0, "L1 distance between the embedded centroids of two row sets.");

  m.def(
      "default_config", [] { return cli::ExperimentConfig().to_yaml(); }, "Resolved default config as YAML.");
  m.def(
      "config_hash",
      [](const std::string& yaml, const std::map<std::string, std::string>& overrides) {
        auto cfg = config_from(yaml, overrides);
        cfg.validate();
        return cfg.hash();
      },
      py::arg("yaml") = "", py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "run_command",
      [](const std::string& name, const std::string& yaml, const std::map<std::string, std::string>& overrides,
         bool force, bool resume, bool features_only, bool quiet) {
        cli::CommandOptions o;
        o.config = config_from(yaml, overrides);
        o.force = force;
        o.resume = resume;
        o.features_only = features_only;
        o.quiet = quiet;
        cli::RunManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = cli::run_command(name, o);
        }
        return manifest_dict(manifest);
      },
      py::arg("name"), py::arg("yaml") = "", py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("force") = false, py::arg("resume") = false, py::arg("features_only") = false, py::arg("quiet") = true,
      "Runs one pipeline stage and returns its manifest.");
}
