#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "tdt/retro_clustering.hpp"

namespace tdt {

struct MstEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double weight = 0.0;
};

/// Distance to the `min_samples`-th nearest neighbour, counting the point itself.
Eigen::VectorXd core_distances(const Eigen::MatrixXd& dist, int min_samples);

/// max(core(a), core(b), d(a, b)) with a zero diagonal.
Eigen::MatrixXd mutual_reachability(const Eigen::MatrixXd& dist, const Eigen::VectorXd& core);

/// Prim's algorithm on a dense symmetric weight matrix; ties go to the lower index.
std::vector<MstEdge> prim_mst(const Eigen::MatrixXd& weights);

/// Merge `i` creates node n + i from `left` and `right` (points are 0..n-1).
struct LinkageNode {
  std::size_t left = 0;
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

std::vector<LinkageNode> single_linkage(std::vector<MstEdge> mst, std::size_t n_points);

/// Points keep ids 0..n-1; clusters are numbered from n (n is the root).
struct CondensedEdge {
  std::size_t parent = 0;
  std::size_t child = 0;
  double lambda = 0.0;
  std::size_t child_size = 0;
};

struct CondensedTree {
  std::size_t n_points = 0;
  std::vector<CondensedEdge> edges;

  std::size_t root() const { return n_points; }
  bool is_cluster(std::size_t node) const { return node >= n_points; }
};

CondensedTree condense_tree(const std::vector<LinkageNode>& linkage, std::size_t n_points,
                            std::size_t min_cluster_size);

/// Excess of mass: sum over children of (lambda_child - lambda_birth) * size.
std::map<std::size_t, double> cluster_stability(const CondensedTree& tree);

/// Excess-of-mass selection, root excluded.
std::vector<std::size_t> select_clusters(const CondensedTree& tree, const std::map<std::size_t, double>& stability);

struct HdbscanParams {
  int min_cluster_size = 5;
  int min_samples = 0;  // 0 means min_cluster_size
  Metric metric = Metric::Cosine;
};

struct HdbscanResult : ClusteringResult {
  Eigen::VectorXd core;
  std::vector<MstEdge> mst;
  CondensedTree tree;
  std::vector<std::size_t> selected;
};

HdbscanResult hdbscan(const Eigen::MatrixXd& dist, const HdbscanParams& params);
HdbscanResult hdbscan(const std::vector<Eigen::VectorXd>& points, const HdbscanParams& params);

}  // namespace tdt
