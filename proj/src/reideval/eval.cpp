#include "softmask/reideval/eval.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "softmask/common/errors.hpp"
#include "softmask/common/seeding.hpp"

namespace fs = std::filesystem;

namespace softmask::reideval {
namespace {

std::string number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void require_matches(const RankingResult& r) {
  for (std::size_t i = 0; i < r.queries.size(); ++i)
    if (r.queries[i].matches() == 0)
      throw ProtocolError("query " + std::to_string(i) + " has no valid matching gallery entry");
}

}  // namespace

void FeatureSet::validate() const {
  const auto n = size();
  if (identities.size() != n || cameras.size() != n || domains.size() != n)
    throw ArgumentError("feature set: " + std::to_string(n) + " rows but label vectors of sizes " +
                        std::to_string(identities.size()) + "/" + std::to_string(cameras.size()) + "/" +
                        std::to_string(domains.size()));
}

FeatureSet FeatureSet::subset(const std::vector<std::size_t>& rows) const {
  FeatureSet out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.identities.push_back(identities.at(rows[i]));
    out.cameras.push_back(cameras.at(rows[i]));
    out.domains.push_back(domains.at(rows[i]));
  }
  return out;
}

std::size_t QueryRanking::matches() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (valid[i] && match[i]) ++n;
  return n;
}

RankingResult rank_gallery(const FeatureSet& queries, const FeatureSet& gallery, const Protocol& protocol) {
  queries.validate();
  gallery.validate();
  if (queries.dim() != gallery.dim())
    throw ArgumentError("rank_gallery: query dimension " + std::to_string(queries.dim()) +
                        " differs from gallery dimension " + std::to_string(gallery.dim()));
  RankingResult result;
  result.queries.resize(queries.size());
  const auto n = gallery.size();
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto q = queries.features.row(static_cast<Eigen::Index>(qi));
    std::vector<double> dist(n);
    for (std::size_t g = 0; g < n; ++g)
      dist[g] = (gallery.features.row(static_cast<Eigen::Index>(g)) - q).norm();
    auto& out = result.queries[qi];
    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), std::size_t{0});
    std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    const int qid = queries.identities[qi];
    const int qcam = queries.cameras[qi];
    for (auto g : out.order) {
      const int gid = gallery.identities[g];
      out.distances.push_back(dist[g]);
      const bool same_view = gid == qid && gallery.cameras[g] == qcam;
      out.valid.push_back(!(protocol.cross_camera && same_view));
      out.match.push_back(qid != -1 && gid == qid);
    }
  }
  return result;
}

std::size_t first_match_position(const QueryRanking& q) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i < q.order.size(); ++i) {
    if (!q.valid[i]) continue;
    ++pos;
    if (q.match[i]) return pos;
  }
  return 0;
}

double average_precision(const QueryRanking& q) {
  std::size_t pos = 0, hits = 0;
  double sum = 0;
  for (std::size_t i = 0; i < q.order.size(); ++i) {
    if (!q.valid[i]) continue;
    ++pos;
    if (q.match[i]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(pos);
    }
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

std::vector<double> compute_cmc(const RankingResult& r, const std::vector<int>& ranks) {
  require_matches(r);
  if (r.queries.empty()) throw ProtocolError("compute_cmc: no queries");
  std::vector<double> out;
  for (int n : ranks) {
    if (n < 1) throw ArgumentError("compute_cmc: ranks must be >= 1");
    std::size_t hit = 0;
    for (const auto& q : r.queries)
      if (first_match_position(q) <= static_cast<std::size_t>(n)) ++hit;
    out.push_back(static_cast<double>(hit) / static_cast<double>(r.queries.size()));
  }
  return out;
}

double compute_map(const RankingResult& r) {
  require_matches(r);
  if (r.queries.empty()) throw ProtocolError("compute_map: no queries");
  double sum = 0;
  for (const auto& q : r.queries) sum += average_precision(q);
  return sum / static_cast<double>(r.queries.size());
}

void PcaEmbedder::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 1) throw ArgumentError("pca: nothing to fit");
  mean_ = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean_;
  const auto d = centered.cols();
  basis_ = Eigen::MatrixXd::Zero(d, 2);
  // right singular vectors of the centred rows, largest singular values first
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto k_max = std::min<Eigen::Index>(2, svd.matrixV().cols());
  for (Eigen::Index k = 0; k < k_max; ++k) basis_.col(k) = svd.matrixV().col(k);
}

Eigen::MatrixXd PcaEmbedder::transform(const Eigen::MatrixXd& rows) const {
  if (basis_.rows() != rows.cols()) throw ArgumentError("pca: transform dimension differs from fit");
  return (rows.rowwise() - mean_) * basis_;
}

void IdentityEmbedder::fit(const Eigen::MatrixXd& rows) {
  if (rows.cols() != 2) throw ArgumentError("identity embedder needs 2-D features");
}

Eigen::MatrixXd IdentityEmbedder::transform(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != 2) throw ArgumentError("identity embedder needs 2-D features");
  return rows;
}

std::unique_ptr<Embedder2D> make_embedder(const std::string& name) {
  if (name == "pca") return std::make_unique<PcaEmbedder>();
  if (name == "identity") return std::make_unique<IdentityEmbedder>();
  throw ConfigError("unknown embedder '" + name + "' (expected pca or identity)");
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (count >= n) return rows;
  std::mt19937_64 rng(derive_seed(seed, {0x5e7, n, count}));
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  return rows;
}

DomainDistance domain_centroid_distance(const FeatureSet& a, const FeatureSet& b, Embedder2D& embedder,
                                        const DomainDistanceOptions& options) {
  if (a.size() == 0 || b.size() == 0) throw ArgumentError("domain distance: both feature sets must be non-empty");
  if (a.dim() != b.dim()) throw ArgumentError("domain distance: feature dimensions differ");
  const auto fit_a = sample_rows(a.size(), options.fit_count, options.seed);
  const auto fit_b = sample_rows(b.size(), options.fit_count, options.seed);
  Eigen::MatrixXd fit_rows(static_cast<Eigen::Index>(fit_a.size() + fit_b.size()), a.dim());
  Eigen::Index r = 0;
  for (auto i : fit_a) fit_rows.row(r++) = a.features.row(static_cast<Eigen::Index>(i));
  for (auto i : fit_b) fit_rows.row(r++) = b.features.row(static_cast<Eigen::Index>(i));
  embedder.fit(fit_rows);

  DomainDistance out;
  auto embed = [&](const FeatureSet& s, int label, std::array<double, 2>& centroid) {
    const auto rows = sample_rows(s.size(), options.plot_count, options.seed + 1);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), s.dim());
    for (std::size_t i = 0; i < rows.size(); ++i)
      m.row(static_cast<Eigen::Index>(i)) = s.features.row(static_cast<Eigen::Index>(rows[i]));
    const Eigen::MatrixXd e = embedder.transform(m);
    centroid = {e.col(0).mean(), e.col(1).mean()};
    for (Eigen::Index i = 0; i < e.rows(); ++i) out.scatter.push_back({e(i, 0), e(i, 1), label});
  };
  embed(a, 0, out.centroid_a);
  embed(b, 1, out.centroid_b);
  out.distance = std::abs(out.centroid_a[0] - out.centroid_b[0]) + std::abs(out.centroid_a[1] - out.centroid_b[1]);
  return out;
}

FeatureSet read_feature_dump(const fs::path& bin_path, const fs::path& csv_path) {
  static_assert(std::endian::native == std::endian::little, "feature dumps assume a little-endian host");
  FeatureSet set;
  std::ifstream csv(csv_path);
  if (!csv) throw DataError("cannot read " + csv_path.string());
  std::string line;
  std::getline(csv, line);
  if (line != "index,identity,camera,domain") throw ParseError("unexpected header in " + csv_path.string());
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    int idx = 0, id = 0, cam = 0, dom = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d", &idx, &id, &cam, &dom) != 4)
      throw ParseError("malformed feature row '" + line + "' in " + csv_path.string());
    if (idx != static_cast<int>(set.identities.size()))
      throw ParseError("feature rows out of order in " + csv_path.string());
    set.identities.push_back(id);
    set.cameras.push_back(cam);
    set.domains.push_back(dom);
  }
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot read " + bin_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const auto n = set.identities.size();
  if (n == 0) throw DataError("feature dump " + csv_path.string() + " has no rows");
  const auto floats = bytes.size() / sizeof(float);
  if (bytes.size() % sizeof(float) != 0 || floats % n != 0)
    throw DataError("feature dump " + bin_path.string() + " size does not match " + std::to_string(n) + " rows");
  const auto d = floats / n;
  set.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const auto* f = reinterpret_cast<const float*>(bytes.data());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      set.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[i * d + j];
  return set;
}

Metrics evaluate(const FeatureSet& queries, const FeatureSet& gallery, const std::vector<int>& ranks,
                 const Protocol& protocol) {
  const auto r = rank_gallery(queries, gallery, protocol);
  return {compute_map(r), ranks, compute_cmc(r, ranks)};
}

std::string metrics_csv(const Metrics& m) {
  std::string out = "metric,value\nmAP," + number(m.map) + "\n";
  for (std::size_t i = 0; i < m.ranks.size(); ++i) out += "rank-" + std::to_string(m.ranks[i]) + "," + number(m.cmc[i]) + "\n";
  return out;
}

std::string metrics_markdown(const std::string& label, const Metrics& m, const std::string& note) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return std::string(buf);
  };
  std::string head = "| Method | mAP |";
  std::string rule = "|---|---|";
  std::string row = "| " + label + " | " + pct(m.map) + " |";
  for (std::size_t i = 0; i < m.ranks.size(); ++i) {
    head += " R-" + std::to_string(m.ranks[i]) + " |";
    rule += "---|";
    row += " " + pct(m.cmc[i]) + " |";
  }
  std::string out = head + "\n" + rule + "\n" + row + "\n";
  if (!note.empty()) out += "\n" + note + "\n";
  return out;
}

std::string scatter_csv(const std::vector<ScatterPoint>& points) {
  std::string out = "x,y,domain\n";
  for (const auto& p : points) out += number(p.x) + "," + number(p.y) + "," + std::to_string(p.domain) + "\n";
  return out;
}

}  // namespace softmask::reideval
