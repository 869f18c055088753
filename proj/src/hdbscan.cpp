#include "tdt/hdbscan.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace tdt {

namespace {

// Zero distances (duplicate points) would give an infinite lambda; capping it
// keeps stabilities finite without changing any ordering that matters here.
constexpr double kMaxLambda = 1e12;

double to_lambda(double d) { return d > 1.0 / kMaxLambda ? 1.0 / d : kMaxLambda; }

}  // namespace

Eigen::VectorXd core_distances(const Eigen::MatrixXd& dist, int min_samples) {
  const auto n = dist.rows();
  if (min_samples < 1) throw std::invalid_argument("min_samples must be at least 1");
  if (min_samples > n) throw std::invalid_argument("min_samples exceeds the number of points");
  Eigen::VectorXd core(n);
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = dist(i, j);
    auto kth = row.begin() + (min_samples - 1);
    std::nth_element(row.begin(), kth, row.end());
    core(i) = *kth;
  }
  return core;
}

Eigen::MatrixXd mutual_reachability(const Eigen::MatrixXd& dist, const Eigen::VectorXd& core) {
  const auto n = dist.rows();
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = i == j ? 0.0 : std::max({core(i), core(j), dist(i, j)});
  return m;
}

std::vector<MstEdge> prim_mst(const Eigen::MatrixXd& w) {
  const auto n = static_cast<std::size_t>(w.rows());
  std::vector<MstEdge> edges;
  if (n == 0) return edges;
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    double nd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double d = w(static_cast<Eigen::Index>(current), static_cast<Eigen::Index>(j));
      if (d < best[j]) {
        best[j] = d;
        from[j] = current;
      }
      if (best[j] < nd || next == n) {
        nd = best[j];
        next = j;
      }
    }
    in_tree[next] = true;
    edges.push_back(MstEdge{from[next], next, nd});
    current = next;
  }
  return edges;
}

std::vector<LinkageNode> single_linkage(std::vector<MstEdge> mst, std::size_t n) {
  std::stable_sort(mst.begin(), mst.end(), [](const MstEdge& a, const MstEdge& b) { return a.weight < b.weight; });
  std::vector<std::size_t> parent(2 * n), size(2 * n, 1);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<LinkageNode> out;
  std::size_t next = n;
  for (const auto& e : mst) {
    const auto a = find(e.a), b = find(e.b);
    if (a == b) continue;
    out.push_back(LinkageNode{a, b, e.weight, size[a] + size[b]});
    parent[a] = parent[b] = next;
    size[next] = size[a] + size[b];
    ++next;
  }
  return out;
}

CondensedTree condense_tree(const std::vector<LinkageNode>& linkage, std::size_t n, std::size_t min_cluster_size) {
  CondensedTree tree;
  tree.n_points = n;
  if (n < 2 || linkage.size() + 1 != n) return tree;
  const std::size_t root = 2 * n - 2;
  auto node_size = [&](std::size_t node) { return node < n ? std::size_t{1} : linkage[node - n].size; };

  // every original point below `node` (a leaf is its own result)
  auto points_below = [&](std::size_t node) {
    std::vector<std::size_t> out, stack{node};
    while (!stack.empty()) {
      const auto x = stack.back();
      stack.pop_back();
      if (x < n) {
        out.push_back(x);
      } else {
        stack.push_back(linkage[x - n].right);
        stack.push_back(linkage[x - n].left);
      }
    }
    return out;
  };

  std::vector<std::size_t> relabel(2 * n - 1, 0);
  relabel[root] = n;
  std::size_t next_label = n + 1;
  std::deque<std::size_t> queue{root};
  while (!queue.empty()) {
    const auto node = queue.front();
    queue.pop_front();
    if (node < n) continue;
    const auto& link = linkage[node - n];
    const double lambda = to_lambda(link.distance);
    const auto ls = node_size(link.left), rs = node_size(link.right);
    const auto label = relabel[node];
    auto spill = [&](std::size_t child) {
      for (auto p : points_below(child)) tree.edges.push_back(CondensedEdge{label, p, lambda, 1});
    };
    if (ls >= min_cluster_size && rs >= min_cluster_size) {
      relabel[link.left] = next_label++;
      tree.edges.push_back(CondensedEdge{label, relabel[link.left], lambda, ls});
      relabel[link.right] = next_label++;
      tree.edges.push_back(CondensedEdge{label, relabel[link.right], lambda, rs});
      queue.push_back(link.left);
      queue.push_back(link.right);
    } else if (ls < min_cluster_size && rs < min_cluster_size) {
      spill(link.left);
      spill(link.right);
    } else if (ls < min_cluster_size) {
      spill(link.left);
      relabel[link.right] = label;
      queue.push_back(link.right);
    } else {
      spill(link.right);
      relabel[link.left] = label;
      queue.push_back(link.left);
    }
  }
  return tree;
}

std::map<std::size_t, double> cluster_stability(const CondensedTree& tree) {
  std::map<std::size_t, double> birth{{tree.root(), 0.0}};
  for (const auto& e : tree.edges)
    if (tree.is_cluster(e.child)) birth[e.child] = e.lambda;
  std::map<std::size_t, double> stability;
  for (const auto& [c, b] : birth) {
    (void)b;
    stability[c] = 0.0;
  }
  for (const auto& e : tree.edges)
    stability[e.parent] += (e.lambda - birth[e.parent]) * static_cast<double>(e.child_size);
  return stability;
}

std::vector<std::size_t> select_clusters(const CondensedTree& tree, const std::map<std::size_t, double>& stability_in) {
  auto stability = stability_in;
  std::map<std::size_t, std::vector<std::size_t>> children;
  for (const auto& e : tree.edges)
    if (tree.is_cluster(e.child)) children[e.parent].push_back(e.child);

  std::map<std::size_t, bool> selected;
  for (const auto& [c, s] : stability) {
    (void)s;
    if (c != tree.root()) selected[c] = true;
  }
  // children always carry larger labels than their parent, so a descending
  // sweep settles every subtree before its parent is considered
  for (auto it = selected.rbegin(); it != selected.rend(); ++it) {
    const auto node = it->first;
    double subtree = 0.0;
    for (auto c : children[node]) subtree += stability[c];
    if (subtree > stability[node]) {
      it->second = false;
      stability[node] = subtree;
    } else {
      std::vector<std::size_t> stack = children[node];
      while (!stack.empty()) {
        const auto x = stack.back();
        stack.pop_back();
        selected[x] = false;
        for (auto c : children[x]) stack.push_back(c);
      }
    }
  }
  std::vector<std::size_t> out;
  for (const auto& [c, s] : selected)
    if (s) out.push_back(c);
  return out;
}

HdbscanResult hdbscan(const Eigen::MatrixXd& dist, const HdbscanParams& params) {
  const auto n = static_cast<std::size_t>(dist.rows());
  if (params.min_cluster_size < 2) throw std::invalid_argument("min_cluster_size must be at least 2");
  if (params.min_samples < 0) throw std::invalid_argument("min_samples must be at least 1");
  if (n < static_cast<std::size_t>(params.min_cluster_size))
    throw std::invalid_argument("fewer points than min_cluster_size");
  const int min_samples = params.min_samples == 0 ? params.min_cluster_size : params.min_samples;

  HdbscanResult res;
  res.core = core_distances(dist, min_samples);
  res.mst = prim_mst(mutual_reachability(dist, res.core));
  res.tree = condense_tree(single_linkage(res.mst, n), n, static_cast<std::size_t>(params.min_cluster_size));
  res.selected = select_clusters(res.tree, cluster_stability(res.tree));

  std::map<std::size_t, std::size_t> parent_of;
  for (const auto& e : res.tree.edges) parent_of[e.child] = e.parent;
  std::map<std::size_t, int> label_of;
  for (auto c : res.selected) label_of.emplace(c, static_cast<int>(label_of.size()));

  std::vector<int> labels(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    auto it = parent_of.find(p);
    if (it == parent_of.end()) continue;
    std::size_t c = it->second;
    while (true) {
      if (auto hit = label_of.find(c); hit != label_of.end()) {
        labels[p] = hit->second;
        break;
      }
      auto up = parent_of.find(c);
      if (up == parent_of.end()) break;
      c = up->second;
    }
  }
  static_cast<ClusteringResult&>(res) = make_result(std::move(labels));
  return res;
}

HdbscanResult hdbscan(const std::vector<Eigen::VectorXd>& points, const HdbscanParams& params) {
  return hdbscan(DistanceMatrixView(points, params.metric).materialize(), params);
}

}  // namespace tdt
