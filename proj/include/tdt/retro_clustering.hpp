#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tdt/corpus.hpp"

namespace tdt {

enum class Metric : std::uint8_t { Cosine, Euclidean };

Metric parse_metric(std::string_view name);
std::string_view to_string(Metric m);

/// 1 - cosine (in [0, 2], 1 when either side is zero) or euclidean distance.
double distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Metric metric);

/// Pairwise distances over a borrowed point set, computed on demand.
class DistanceMatrixView {
 public:
  DistanceMatrixView(const std::vector<Eigen::VectorXd>& points, Metric metric) : points_(&points), metric_(metric) {}

  std::size_t size() const { return points_->size(); }
  Metric metric() const { return metric_; }
  double operator()(std::size_t i, std::size_t j) const;
  Eigen::MatrixXd materialize() const;

 private:
  const std::vector<Eigen::VectorXd>* points_;
  Metric metric_;
};

/// `labels` uses -1 for noise; `expanded` turns every noise point into its
/// own singleton id. `cn` counts non-noise clusters only.
struct ClusteringResult {
  std::vector<int> labels;
  std::vector<int> expanded;
  int cn = 0;
  int noise = 0;
};

ClusteringResult make_result(std::vector<int> labels);

struct KMeansResult : ClusteringResult {
  std::vector<double> objective_history;  // after every assignment step
  int iterations = 0;
};

/// k-means++ seeding then Lloyd iterations until the assignment is stable or
/// `max_iter` is reached. With Metric::Cosine the points are L2-normalised first.
KMeansResult kmeans(const std::vector<Eigen::VectorXd>& points, int k, std::uint64_t seed,
                    Metric metric = Metric::Cosine, int max_iter = 300);

struct GacMerge {
  int round = 0;
  std::vector<std::size_t> left;   // sorted member indices
  std::vector<std::size_t> right;
  double similarity = 0.0;  // group-average of -distance
};

struct GacResult : ClusteringResult {
  std::vector<GacMerge> merges;
  int rounds = 0;
};

struct GacParams {
  int k = 1;
  double bucket_days = 30.0;
  double reduction = 0.5;  // fraction of a bucket's clusters kept per round
  Metric metric = Metric::Cosine;
};

/// Augmented group-average clustering: agglomerate within chronological
/// buckets, then re-bucket cluster representatives with half as many buckets
/// per round until `k` clusters remain.
GacResult gac(const std::vector<Eigen::VectorXd>& points, const std::vector<Timestamp>& times,
              const GacParams& params);

}  // namespace tdt
