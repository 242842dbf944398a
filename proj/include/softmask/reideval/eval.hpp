#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace softmask::reideval {

/// n x d feature rows with aligned labels. Identity -1 marks a distractor.
struct FeatureSet {
  Eigen::MatrixXd features;
  std::vector<int> identities;
  std::vector<int> cameras;
  std::vector<int> domains;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::int64_t dim() const { return features.cols(); }
  /// Throws ArgumentError when label vectors are misaligned.
  void validate() const;
  FeatureSet subset(const std::vector<std::size_t>& rows) const;
};

struct Protocol {
  // Exclude gallery entries sharing both identity and camera with the query.
  bool cross_camera = true;
};

struct QueryRanking {
  std::vector<std::size_t> order;  // gallery indices by ascending distance
  std::vector<double> distances;   // aligned with order
  std::vector<bool> valid;         // aligned with order
  std::vector<bool> match;         // aligned with order; only meaningful where valid
  std::size_t matches() const;     // valid correct entries
};

struct RankingResult {
  std::vector<QueryRanking> queries;
};

/// Euclidean ranking; ties resolved by gallery index.
RankingResult rank_gallery(const FeatureSet& queries, const FeatureSet& gallery, const Protocol& protocol = {});

/// 1-based position of the first correct entry among valid entries, or 0.
std::size_t first_match_position(const QueryRanking& q);

/// Precision at each correct valid position, averaged over the number of
/// valid correct entries.
double average_precision(const QueryRanking& q);

/// cmc[i] is the rank-ranks[i] accuracy. ProtocolError names the first
/// query without a valid match.
std::vector<double> compute_cmc(const RankingResult& r, const std::vector<int>& ranks);
double compute_map(const RankingResult& r);

/// 2-D embedding plug-in.
class Embedder2D {
 public:
  virtual ~Embedder2D() = default;
  virtual void fit(const Eigen::MatrixXd& rows) = 0;
  virtual Eigen::MatrixXd transform(const Eigen::MatrixXd& rows) const = 0;
  virtual std::string name() const = 0;
};

/// Mean-centred projection onto the top two principal directions.
class PcaEmbedder : public Embedder2D {
 public:
  void fit(const Eigen::MatrixXd& rows) override;
  Eigen::MatrixXd transform(const Eigen::MatrixXd& rows) const override;
  std::string name() const override { return "pca"; }

 private:
  Eigen::RowVectorXd mean_;
  Eigen::MatrixXd basis_;  // d x 2
};

/// Passes 2-D inputs through unchanged.
class IdentityEmbedder : public Embedder2D {
 public:
  void fit(const Eigen::MatrixXd& rows) override;
  Eigen::MatrixXd transform(const Eigen::MatrixXd& rows) const override;
  std::string name() const override { return "identity"; }
};

std::unique_ptr<Embedder2D> make_embedder(const std::string& name);

struct DomainDistanceOptions {
  std::size_t fit_count = 5000;
  std::size_t plot_count = 200;
  std::uint64_t seed = 0;
};

struct ScatterPoint {
  double x = 0;
  double y = 0;
  int domain = 0;  // 0 for set A, 1 for set B
};

struct DomainDistance {
  double distance = 0;
  std::array<double, 2> centroid_a{};
  std::array<double, 2> centroid_b{};
  std::vector<ScatterPoint> scatter;
};

/// Fits the embedder on up to fit_count rows of each set, embeds up to
/// plot_count rows of each set and returns the L1 distance between the two
/// embedded centroids. Row subsets depend only on (seed, set size).
DomainDistance domain_centroid_distance(const FeatureSet& a, const FeatureSet& b, Embedder2D& embedder,
                                        const DomainDistanceOptions& options = {});

/// Deterministic sample of min(count, n) row indices, ascending.
std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed);

// Files

/// Reads little-endian float32 rows plus the `index,identity,camera,domain` sidecar.
FeatureSet read_feature_dump(const std::filesystem::path& bin_path, const std::filesystem::path& csv_path);

struct Metrics {
  double map = 0;
  std::vector<int> ranks;
  std::vector<double> cmc;
};

Metrics evaluate(const FeatureSet& queries, const FeatureSet& gallery, const std::vector<int>& ranks,
                 const Protocol& protocol = {});

/// `metric,value` rows: mAP then rank-n for each rank.
std::string metrics_csv(const Metrics& m);
/// One-row table with mAP and R-n columns, percentages to one decimal.
std::string metrics_markdown(const std::string& label, const Metrics& m, const std::string& note = {});
std::string scatter_csv(const std::vector<ScatterPoint>& points);

}  // namespace softmask::reideval
