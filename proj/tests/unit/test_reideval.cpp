#include <algorithm>
#include <cmath>
#include <random>

#include "criteria.hpp"
#include "softmask/common/errors.hpp"
#include "softmask/reideval/eval.hpp"
#include "test_util.hpp"

#undef CHECK
#include <doctest.h>

using namespace softmask;
using namespace softmask::reideval;

namespace {

FeatureSet make_set(const std::vector<std::vector<double>>& rows, std::vector<int> ids, std::vector<int> cams) {
  FeatureSet s;
  s.features.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 1 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) s.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  s.identities = std::move(ids);
  s.cameras = std::move(cams);
  s.domains.assign(rows.size(), 0);
  return s;
}

}  // namespace

TEST_SUITE("reideval") {

TEST_CASE("ranking example") {
  auto q = make_set({{0, 0}}, {1}, {0});
  auto g = make_set({{3, 4}, {1, 0}}, {1, 2}, {1, 1});
  auto r = rank_gallery(q, g);
  REQUIRE(r.queries.size() == 1);
  CHECK((r.queries[0].order == std::vector<std::size_t>{1, 0}));
  CHECK(r.queries[0].distances[0] == doctest::Approx(1.0));
  CHECK(r.queries[0].distances[1] == doctest::Approx(5.0));
  CHECK(first_match_position(r.queries[0]) == 2);
  CHECK(average_precision(r.queries[0]) == doctest::Approx(0.5));

  auto self = make_set({{3, 4}}, {7}, {0});
  auto r2 = rank_gallery(self, g);
  CHECK(r2.queries[0].order[0] == 0);
  CHECK(r2.queries[0].distances[0] == 0.0);

  CHECK_THROWS_AS(rank_gallery(make_set({{0, 0, 0}}, {1}, {0}), g), ArgumentError);
}

TEST_CASE("CMC and mAP from known first-match positions") {
  auto g = make_set({{1}, {2}, {3}, {4}, {5}}, {10, 11, 12, 13, 14}, {1, 1, 1, 1, 1});
  // first matches at positions 1, 2, 2, 5
  auto q = make_set({{0}, {0}, {0}, {0}}, {10, 11, 11, 14}, {0, 0, 0, 0});
  auto m = evaluate(q, g, {1, 2, 5});
  CHECK(m.cmc[0] == doctest::Approx(0.25));
  CHECK(m.cmc[1] == doctest::Approx(0.75));
  CHECK(m.cmc[2] == doctest::Approx(1.0));
  CHECK(m.map == doctest::Approx((1.0 + 0.5 + 0.5 + 0.2) / 4));

  // correct entries at positions 1 and 3
  auto g2 = make_set({{1}, {2}, {3}}, {4, 5, 4}, {1, 1, 1});
  auto q2 = make_set({{0}}, {4}, {0});
  CHECK(average_precision(rank_gallery(q2, g2).queries[0]) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("cross-camera protocol excludes same identity and camera") {
  auto g = make_set({{1}, {2}}, {4, 4}, {0, 1});
  auto q = make_set({{0}}, {4}, {0});
  auto r = rank_gallery(q, g);
  CHECK(first_match_position(r.queries[0]) == 1);
  CHECK(!r.queries[0].valid[0]);
  CHECK(r.queries[0].matches() == 1);
  auto open = rank_gallery(q, g, Protocol{false});
  CHECK(open.queries[0].matches() == 2);
}

TEST_CASE("query without a valid match is a protocol error naming it") {
  auto g = make_set({{1}, {2}}, {4, 5}, {0, 1});
  auto q = make_set({{0}, {0}}, {5, 4}, {0, 0});
  CHECK_THROWS_WITH_AS(evaluate(q, g, {1}), doctest::Contains("query 1"), ProtocolError);
}

TEST_CASE("retrieval metrics against brute-force oracle") {
  criteria::Report r;
  criteria::retrieval(r, 200, 5);
  for (const auto& c : r.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.detail);
  CHECK(!r.checks.empty());
}

TEST_CASE("domain centroid distance") {
  auto a = make_set({{0, 0}, {0, 0}}, {1, 2}, {0, 0});
  auto b = make_set({{1, 2}, {1, 2}, {1, 2}}, {1, 2, 3}, {0, 0, 0});
  IdentityEmbedder id;
  auto d = domain_centroid_distance(a, b, id);
  CHECK(d.distance == doctest::Approx(3.0));
  CHECK(domain_centroid_distance(b, a, id).distance == doctest::Approx(3.0));
  CHECK(domain_centroid_distance(a, a, id).distance == 0.0);
  CHECK(d.scatter.size() == 5);

  std::mt19937 rng(3);
  std::normal_distribution<double> n;
  FeatureSet x, y;
  x.features = Eigen::MatrixXd::NullaryExpr(40, 6, [&] { return n(rng); });
  y.features = Eigen::MatrixXd::NullaryExpr(30, 6, [&] { return n(rng) + 0.5; });
  x.identities.assign(40, 0);
  x.cameras = x.domains = x.identities;
  y.identities.assign(30, 0);
  y.cameras = y.domains = y.identities;
  PcaEmbedder pca;
  const double base = domain_centroid_distance(x, y, pca).distance;
  CHECK(domain_centroid_distance(y, x, pca).distance == doctest::Approx(base));
  Eigen::RowVectorXd shift = Eigen::RowVectorXd::Constant(6, 7.5);
  FeatureSet xs = x, ys = y;
  xs.features.rowwise() += shift;
  ys.features.rowwise() += shift;
  CHECK(domain_centroid_distance(xs, ys, pca).distance == doctest::Approx(base).epsilon(1e-8));

  FeatureSet empty;
  empty.features.resize(0, 6);
  CHECK_THROWS_AS(domain_centroid_distance(empty, y, pca), ArgumentError);
  CHECK_THROWS_AS(make_embedder("umap"), ConfigError);
  CHECK(make_embedder("pca")->name() == "pca");
}

TEST_CASE("row sampling is deterministic and bounded") {
  auto s = sample_rows(100, 10, 5);
  CHECK(s.size() == 10);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(s == sample_rows(100, 10, 5));
  CHECK(sample_rows(7, 10, 5).size() == 7);
}

TEST_CASE("metric tables") {
  Metrics m;
  m.map = 0.5;
  m.ranks = {1, 5, 10};
  m.cmc = {0.25, 0.75, 1.0};
  CHECK(metrics_csv(m) == "metric,value\nmAP,0.5\nrank-1,0.25\nrank-5,0.75\nrank-10,1\n");
  auto md = metrics_markdown("ours", m);
  CHECK(md.find("| Method | mAP | R-1 | R-5 | R-10 |") != std::string::npos);
  CHECK(md.find("| ours | 50.0 | 25.0 | 75.0 | 100.0 |") != std::string::npos);
  CHECK(scatter_csv({{1.5, -2, 1}}) == "x,y,domain\n1.5,-2,1\n");
}

}
