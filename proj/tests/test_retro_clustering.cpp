#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "synth.hpp"
#include "tdt/hdbscan.hpp"
#include "tdt/retro_clustering.hpp"

using namespace tdt;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<Eigen::VectorXd> random_points(std::size_t n, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd p(dim);
    for (int k = 0; k < dim; ++k) p(k) = g(rng);
    out.push_back(p);
  }
  return out;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

Timestamp day(double d) { return Timestamp{static_cast<std::int64_t>(d * 86400)}; }

}  // namespace

TEST_CASE("distances") {
  CHECK(distance(vec({1, 0}), vec({0, 1}), Metric::Cosine) == doctest::Approx(1.0));
  CHECK(distance(vec({1, 0}), vec({-2, 0}), Metric::Cosine) == doctest::Approx(2.0));
  CHECK(distance(vec({0, 0}), vec({1, 0}), Metric::Cosine) == 1.0);
  CHECK(distance(vec({0, 0}), vec({3, 4}), Metric::Euclidean) == 5.0);
  std::mt19937_64 rng(1);
  const auto pts = random_points(9, 4, rng);
  DistanceMatrixView view(pts, Metric::Cosine);
  const auto m = view.materialize();
  CHECK(m == m.transpose());
  CHECK(m.diagonal().isZero());
  CHECK(parse_metric("euclidean") == Metric::Euclidean);
  CHECK_THROWS(parse_metric("manhattan"));
}

TEST_CASE("make_result expands noise") {
  const auto r = make_result({-1, 0, 0, -1, 2});
  CHECK(r.cn == 2);
  CHECK(r.noise == 2);
  CHECK(r.expanded == std::vector<int>{3, 0, 0, 4, 2});
}

TEST_CASE("kmeans") {
  std::mt19937_64 rng(3);
  SUBCASE("k = n gives zero objective") {
    const auto pts = random_points(7, 3, rng);
    const auto r = kmeans(pts, 7, 1, Metric::Euclidean);
    CHECK(r.objective_history.back() == doctest::Approx(0.0));
    CHECK(r.cn == 7);
  }
  SUBCASE("well separated pairs") {
    const std::vector<Eigen::VectorXd> pts = {vec({0, 0}), vec({0.1, 0}), vec({10, 10}), vec({10, 10.1}),
                                              vec({-10, 10}), vec({-10.1, 10})};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = kmeans(pts, 3, seed, Metric::Euclidean);
      CHECK(same_partition(r.labels, {0, 0, 1, 1, 2, 2}));
    }
  }
  SUBCASE("cosine ignores magnitude") {
    const std::vector<Eigen::VectorXd> pts = {vec({1, 0.01}), vec({50, 0}), vec({0, 1}), vec({0.02, 30})};
    const auto r = kmeans(pts, 2, 5);
    CHECK(same_partition(r.labels, {0, 0, 1, 1}));
  }
  SUBCASE("objective never increases") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto pts = random_points(60, 5, rng);
      const auto r = kmeans(pts, 6, static_cast<std::uint64_t>(trial), Metric::Euclidean);
      for (std::size_t i = 1; i < r.objective_history.size(); ++i)
        CHECK(r.objective_history[i] <= r.objective_history[i - 1] + 1e-12);
      CHECK(r.cn == 6);
    }
  }
  SUBCASE("seeded runs repeat") {
    const auto pts = random_points(40, 4, rng);
    const auto a = kmeans(pts, 5, 9), b = kmeans(pts, 5, 9);
    CHECK(a.labels == b.labels);
    CHECK(a.objective_history == b.objective_history);
  }
  SUBCASE("errors") {
    const auto pts = random_points(3, 2, rng);
    CHECK_THROWS(kmeans(pts, 4, 0));
    CHECK_THROWS(kmeans(pts, 0, 0));
  }
}

TEST_CASE("gac") {
  SUBCASE("k = n keeps every point apart") {
    std::mt19937_64 rng(4);
    const auto pts = random_points(5, 3, rng);
    const auto r = gac(pts, std::vector<Timestamp>(5, day(0)), GacParams{.k = 5});
    CHECK(r.merges.empty());
    CHECK(r.cn == 5);
  }
  SUBCASE("identical text in different periods is not merged first") {
    const std::vector<Eigen::VectorXd> pts = {vec({1, 0, 0}), vec({1, 0.3, 0}), vec({1, 0, 0}), vec({1, 0, 0.3})};
    const std::vector<Timestamp> times = {day(1), day(2), day(100), day(101)};
    const auto r = gac(pts, times, GacParams{.k = 2});
    CHECK(r.labels == std::vector<int>{0, 0, 1, 1});
    CHECK(r.rounds == 1);
    // with a single bucket the identical points go together
    const auto one = gac(pts, times, GacParams{.k = 2, .bucket_days = 1000});
    CHECK(one.merges.front().left == std::vector<std::size_t>{0});
    CHECK(one.merges.front().right == std::vector<std::size_t>{2});
  }
  SUBCASE("single bucket matches naive group average") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 4 + static_cast<std::size_t>(trial % 6);
      const auto pts = random_points(n, 3, rng);
      const bool cosine = trial % 2 == 0;
      GacParams p{.k = 1, .bucket_days = 1000, .metric = cosine ? Metric::Cosine : Metric::Euclidean};
      const auto r = gac(pts, std::vector<Timestamp>(n, day(0)), p);
      const auto expected = oracle::group_average_merges(pts, 1, cosine);
      REQUIRE(r.merges.size() == expected.size());
      for (std::size_t m = 0; m < expected.size(); ++m) {
        CHECK(r.merges[m].left == expected[m].left);
        CHECK(r.merges[m].right == expected[m].right);
      }
    }
  }
  SUBCASE("bucketed rounds still end at k") {
    std::mt19937_64 rng(6);
    const auto pts = random_points(50, 4, rng);
    std::vector<Timestamp> times;
    for (int i = 0; i < 50; ++i) times.push_back(day(i * 7.3));
    for (int k : {1, 3, 17, 50}) {
      const auto r = gac(pts, times, GacParams{.k = k});
      CHECK(r.cn == k);
      CHECK(r.merges.size() == static_cast<std::size_t>(50 - k));
    }
  }
  SUBCASE("errors") {
    const std::vector<Eigen::VectorXd> pts = {vec({1, 0}), vec({0, 1})};
    CHECK_THROWS(gac(pts, {day(0)}, GacParams{}));
    CHECK_THROWS(gac(pts, {day(0), day(1)}, GacParams{.k = 3}));
    CHECK_THROWS(gac(pts, {day(0), day(1)}, GacParams{.reduction = 1.0}));
  }
}

TEST_CASE("hdbscan") {
  SUBCASE("two blobs") {
    std::mt19937_64 rng(7);
    const auto pts = synth::gaussian_blobs({vec({0, 0}), vec({20, 20})}, 15, 0.5, rng);
    const auto r = hdbscan(pts, HdbscanParams{.min_cluster_size = 5, .metric = Metric::Euclidean});
    CHECK(r.cn == 2);
    CHECK(r.noise == 0);
    std::vector<int> gold(30, 0);
    std::fill(gold.begin() + 15, gold.end(), 1);
    CHECK(same_partition(r.labels, gold));
  }
  SUBCASE("no cluster reaches the minimum size") {
    std::mt19937_64 rng(8);
    const auto pts = random_points(10, 2, rng);
    const auto r = hdbscan(pts, HdbscanParams{.min_cluster_size = 8, .metric = Metric::Euclidean});
    CHECK(r.cn == 0);
    CHECK(r.noise == 10);
    std::set<int> ids(r.expanded.begin(), r.expanded.end());
    CHECK(ids.size() == 10);
  }
  SUBCASE("mutual reachability dominates distance") {
    std::mt19937_64 rng(9);
    const auto pts = random_points(25, 3, rng);
    const auto d = DistanceMatrixView(pts, Metric::Euclidean).materialize();
    const auto core = core_distances(d, 4);
    const auto mr = mutual_reachability(d, core);
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j) {
        if (i == j) continue;
        CHECK(mr(i, j) >= d(i, j));
        CHECK(mr(i, j) >= core(i));
        CHECK(mr(i, j) == mr(j, i));
      }
  }
  SUBCASE("core distance counts the point itself") {
    const std::vector<Eigen::VectorXd> pts = {vec({0}), vec({1}), vec({3}), vec({7})};
    const auto d = DistanceMatrixView(pts, Metric::Euclidean).materialize();
    CHECK(core_distances(d, 1) == Eigen::VectorXd::Zero(4));
    CHECK(core_distances(d, 2) == vec({1, 1, 2, 4}));
    CHECK(core_distances(d, 3) == vec({3, 2, 3, 6}));
  }
  SUBCASE("Prim agrees with Kruskal") {
    std::mt19937_64 rng(10);
    for (std::size_t n : {2, 3, 10, 57, 200}) {
      const auto pts = random_points(n, 3, rng);
      const auto d = DistanceMatrixView(pts, Metric::Euclidean).materialize();
      const auto mst = prim_mst(d);
      REQUIRE(mst.size() == n - 1);
      double total = 0;
      for (const auto& e : mst) total += e.weight;
      CHECK(total == doctest::Approx(oracle::kruskal_weight(d)).epsilon(1e-12));
    }
  }
  SUBCASE("input order does not change the partition") {
    std::mt19937_64 rng(11);
    const auto pts = synth::gaussian_blobs({vec({0, 0}), vec({6, 0}), vec({0, 9})}, 12, 0.8, rng);
    const HdbscanParams p{.min_cluster_size = 4, .metric = Metric::Euclidean};
    const auto base = hdbscan(pts, p);
    std::vector<std::size_t> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 5; ++trial) {
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<Eigen::VectorXd> shuffled;
      for (auto i : perm) shuffled.push_back(pts[i]);
      const auto r = hdbscan(shuffled, p);
      std::vector<int> back(pts.size());
      for (std::size_t i = 0; i < perm.size(); ++i) back[perm[i]] = r.labels[i];
      std::vector<int> noise_a, noise_b;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        noise_a.push_back(base.labels[i] < 0);
        noise_b.push_back(back[i] < 0);
      }
      CHECK(noise_a == noise_b);
      CHECK(same_partition(base.labels, back));
    }
  }
  SUBCASE("stabilities are non-negative and condensed sizes add up") {
    std::mt19937_64 rng(12);
    const auto pts = synth::gaussian_blobs({vec({0, 0, 0}), vec({4, 0, 0}), vec({0, 4, 4})}, 10, 1.0, rng);
    const auto r = hdbscan(pts, HdbscanParams{.min_cluster_size = 3});
    for (const auto& [node, s] : cluster_stability(r.tree)) CHECK(s >= 0.0);
    std::size_t leaves = 0;
    for (const auto& e : r.tree.edges) {
      CHECK(e.lambda >= 0.0);
      if (!r.tree.is_cluster(e.child)) ++leaves;
    }
    CHECK(leaves == pts.size());
    for (auto c : r.selected) CHECK(c != r.tree.root());
  }
  SUBCASE("errors") {
    std::mt19937_64 rng(13);
    const auto pts = random_points(4, 2, rng);
    CHECK_THROWS(hdbscan(pts, HdbscanParams{.min_cluster_size = 5}));
    CHECK_THROWS(hdbscan(pts, HdbscanParams{.min_cluster_size = 1}));
  }
}
