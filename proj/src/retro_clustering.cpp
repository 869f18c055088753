#include "tdt/retro_clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

namespace tdt {

Metric parse_metric(std::string_view name) {
  if (name == "cosine") return Metric::Cosine;
  if (name == "euclidean") return Metric::Euclidean;
  throw std::invalid_argument("unknown metric: " + std::string(name));
}

std::string_view to_string(Metric m) { return m == Metric::Cosine ? "cosine" : "euclidean"; }

double distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Metric metric) {
  if (metric == Metric::Euclidean) return (a - b).norm();
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return 1.0 - c;
}

double DistanceMatrixView::operator()(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  // evaluate in a fixed order so (i, j) and (j, i) agree bit for bit
  if (i > j) std::swap(i, j);
  return distance((*points_)[i], (*points_)[j], metric_);
}

Eigen::MatrixXd DistanceMatrixView::materialize() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (*this)(i, j);
  return d;
}

ClusteringResult make_result(std::vector<int> labels) {
  ClusteringResult r;
  int next = 0;
  std::map<int, int> seen;
  for (int l : labels) {
    if (l >= 0 && !seen.count(l)) seen[l] = 0;
    next = std::max(next, l + 1);
  }
  r.cn = static_cast<int>(seen.size());
  r.expanded = labels;
  for (int& l : r.expanded) {
    if (l < 0) {
      l = next++;
      ++r.noise;
    }
  }
  r.labels = std::move(labels);
  return r;
}

namespace {

void check_points(const std::vector<Eigen::VectorXd>& points) {
  for (const auto& p : points)
    if (p.size() != points.front().size()) throw std::invalid_argument("points have different dimensions");
}

}  // namespace

KMeansResult kmeans(const std::vector<Eigen::VectorXd>& input, int k, std::uint64_t seed, Metric metric,
                    int max_iter) {
  const auto n = input.size();
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (static_cast<std::size_t>(k) > n) throw std::invalid_argument("k exceeds the number of points");
  check_points(input);

  std::vector<Eigen::VectorXd> x = input;
  if (metric == Metric::Cosine)
    for (auto& v : x)
      if (v.norm() > 0.0) v.normalize();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto sq = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm(); };

  // k-means++ seeding
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(x[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq(x[i], centers[0]);
  while (centers.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    } else {
      double r = unif(rng) * total, acc = 0.0;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc >= r) break;
      }
    }
    centers.push_back(x[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq(x[i], centers.back()));
  }

  KMeansResult res;
  std::vector<int> assign(n, -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq(x[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq(x[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      objective += bd;
    }
    res.objective_history.push_back(objective);
    res.iterations = it + 1;
    if (!changed) break;

    std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(x[0].size()));
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assign[i]] += x[i];
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) centers[c] = sums[c] / counts[c];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // reseed an empty cluster at the point farthest from its own center
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) continue;
        const double d = sq(x[i], centers[assign[i]]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      if (fd < 0.0) break;
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      centers[c] = x[far];
    }
  }

  static_cast<ClusteringResult&>(res) = make_result(std::move(assign));
  return res;
}

GacResult gac(const std::vector<Eigen::VectorXd>& points, const std::vector<Timestamp>& times,
              const GacParams& params) {
  const auto n = points.size();
  if (times.size() != n) throw std::invalid_argument("gac needs one timestamp per point");
  if (params.k < 1) throw std::invalid_argument("k must be at least 1");
  if (static_cast<std::size_t>(params.k) > n) throw std::invalid_argument("k exceeds the number of points");
  if (!(params.bucket_days > 0.0)) throw std::invalid_argument("bucket_days must be positive");
  if (!(params.reduction > 0.0 && params.reduction < 1.0)) throw std::invalid_argument("reduction must be in (0, 1)");
  check_points(points);

  // sums(a, b) holds the sum of pairwise similarities between clusters keyed by
  // their smallest member index
  DistanceMatrixView view(points, params.metric);
  Eigen::MatrixXd sums(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    sums(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) sums(i, j) = sums(j, i) = -view(i, j);
  }

  struct Unit {
    std::vector<std::size_t> members;
    double mean_time = 0.0;
  };
  std::map<std::size_t, Unit> units;
  std::int64_t t0 = std::numeric_limits<std::int64_t>::max();
  for (const auto& t : times) t0 = std::min(t0, t.seconds);
  for (std::size_t i = 0; i < n; ++i) units[i] = Unit{{i}, static_cast<double>(times[i].seconds - t0)};

  GacResult res;
  const auto k = static_cast<std::size_t>(params.k);
  double width = params.bucket_days * 86400.0;

  auto merge_within = [&](std::vector<std::size_t>& ids, std::size_t target, int round) {
    while (ids.size() > target && units.size() > k) {
      std::size_t ba = 0, bb = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t x = 0; x < ids.size(); ++x) {
        for (std::size_t y = x + 1; y < ids.size(); ++y) {
          const std::size_t a = ids[x], b = ids[y];
          const double avg = sums(a, b) / static_cast<double>(units[a].members.size() * units[b].members.size());
          if (avg > best) {
            best = avg;
            ba = x;
            bb = y;
          }
        }
      }
      std::size_t a = ids[ba], b = ids[bb];
      if (a > b) std::swap(a, b);
      Unit& ua = units[a];
      Unit& ub = units[b];
      res.merges.push_back(GacMerge{round, ua.members, ub.members, best});
      const double wa = static_cast<double>(ua.members.size()), wb = static_cast<double>(ub.members.size());
      ua.mean_time = (ua.mean_time * wa + ub.mean_time * wb) / (wa + wb);
      ua.members.insert(ua.members.end(), ub.members.begin(), ub.members.end());
      std::sort(ua.members.begin(), ua.members.end());
      for (const auto& [c, u] : units) {
        (void)u;
        if (c == a || c == b) continue;
        sums(a, c) += sums(b, c);
        sums(c, a) = sums(a, c);
      }
      units.erase(b);
      ids.erase(std::find(ids.begin(), ids.end(), b));
    }
  };

  for (int round = 0; units.size() > k; ++round) {
    std::map<std::int64_t, std::vector<std::size_t>> buckets;
    for (const auto& [id, u] : units) buckets[static_cast<std::int64_t>(std::floor(u.mean_time / width))].push_back(id);
    if (buckets.size() == 1) {
      merge_within(buckets.begin()->second, k, round);
    } else {
      for (auto& [b, ids] : buckets) {
        (void)b;
        const auto target = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                         std::ceil(static_cast<double>(ids.size()) * params.reduction)));
        merge_within(ids, target, round);
        if (units.size() <= k) break;
      }
    }
    res.rounds = round + 1;
    width *= 2.0;
  }

  std::vector<int> labels(n, -1);
  int next = 0;
  for (const auto& [id, u] : units) {
    (void)id;
    for (auto m : u.members) labels[m] = next;
    ++next;
  }
  static_cast<ClusteringResult&>(res) = make_result(std::move(labels));
  return res;
}

}  // namespace tdt
