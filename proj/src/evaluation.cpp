#include "tdt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tdt/assignment.hpp"

namespace tdt {

namespace {

void check_pair(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.size() != gold.size()) throw std::invalid_argument("partitions cover different item counts");
  if (pred.empty()) throw std::invalid_argument("cannot score an empty partition");
}

int count_clusters(const std::vector<int>& labels) { return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size()); }

// Contingency table over canonical labels: cells[i][j] = |pred_i ∩ gold_j|.
struct Contingency {
  std::vector<int> pred, gold;
  int rows = 0, cols = 0;
  std::vector<double> row_sum, col_sum;
  std::map<std::pair<int, int>, double> cells;  // row-major iteration order
  double n = 0;
};

Contingency contingency(const std::vector<int>& pred_in, const std::vector<int>& gold_in) {
  Contingency c;
  c.pred = canonical_labels(pred_in);
  c.gold = canonical_labels(gold_in);
  c.rows = count_clusters(c.pred);
  c.cols = count_clusters(c.gold);
  c.row_sum.assign(c.rows, 0.0);
  c.col_sum.assign(c.cols, 0.0);
  for (std::size_t i = 0; i < c.pred.size(); ++i) {
    c.cells[{c.pred[i], c.gold[i]}] += 1.0;
    c.row_sum[c.pred[i]] += 1.0;
    c.col_sum[c.gold[i]] += 1.0;
  }
  c.n = static_cast<double>(c.pred.size());
  return c;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

// -sum p log p written as sum (k/n)(log n - log k) so that identical
// partitions produce bit-identical entropy and mutual information
double entropy_of(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double k : counts)
    if (k > 0) h += (k / n) * (std::log(n) - std::log(k));
  return h;
}

double mi_of(const Contingency& c) {
  double mi = 0.0;
  for (const auto& [cell, k] : c.cells)
    mi += (k / c.n) * ((std::log(c.n) - std::log(c.row_sum[cell.first])) + (std::log(k) - std::log(c.col_sum[cell.second])));
  return std::max(mi, 0.0);
}

}  // namespace

std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(remap.try_emplace(l, static_cast<int>(remap.size())).first->second);
  return out;
}

AlignedLabels align_partitions(const Partition& pred, const Partition& gold) {
  if (pred.size() != gold.size()) throw std::invalid_argument("predicted and gold partitions cover different documents");
  AlignedLabels out;
  std::map<std::string, int> pred_ids, gold_ids;
  for (const auto& [id, label] : pred) {
    auto g = gold.find(id);
    if (g == gold.end()) throw std::invalid_argument("document missing from gold partition: " + id);
    out.ids.push_back(id);
    out.pred.push_back(pred_ids.try_emplace(label, static_cast<int>(pred_ids.size())).first->second);
    out.gold.push_back(gold_ids.try_emplace(g->second, static_cast<int>(gold_ids.size())).first->second);
  }
  if (out.ids.empty()) throw std::invalid_argument("cannot score an empty partition");
  out.pred = canonical_labels(out.pred);
  out.gold = canonical_labels(out.gold);
  return out;
}

double harmonic_mean(double a, double b) { return a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0; }

Prf bcubed(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  std::map<int, double> pred_size, gold_size;
  std::map<std::pair<int, int>, double> overlap;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred_size[pred[i]] += 1;
    gold_size[gold[i]] += 1;
    overlap[{pred[i], gold[i]}] += 1;
  }
  double p = 0.0, r = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double both = overlap[{pred[i], gold[i]}];
    p += both / pred_size[pred[i]];
    r += both / gold_size[gold[i]];
  }
  const double n = static_cast<double>(pred.size());
  Prf out{p / n, r / n, 0.0};
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

Prf ceafe(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  const auto c = contingency(pred, gold);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(c.rows, c.cols);
  for (const auto& [cell, k] : c.cells)
    phi(cell.first, cell.second) = 2.0 * k / (c.row_sum[cell.first] + c.col_sum[cell.second]);
  const double total = max_weight_assignment(phi).total;
  Prf out{total / c.rows, total / c.cols, 0.0};
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

MucScore muc(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  // links recovered in `key` clusters when partitioned by `response`
  auto link_score = [](const std::vector<int>& key, const std::vector<int>& response, bool& undefined) {
    std::map<int, std::set<int>> parts;
    std::map<int, double> sizes;
    for (std::size_t i = 0; i < key.size(); ++i) {
      parts[key[i]].insert(response[i]);
      sizes[key[i]] += 1;
    }
    double num = 0.0, den = 0.0;
    for (const auto& [k, s] : sizes) {
      num += s - static_cast<double>(parts[k].size());
      den += s - 1.0;
    }
    undefined = den == 0.0;
    return undefined ? 0.0 : num / den;
  };
  MucScore out;
  out.recall = link_score(gold, pred, out.recall_undefined);
  out.precision = link_score(pred, gold, out.precision_undefined);
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

PairCounts pair_counts(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  const auto c = contingency(pred, gold);
  double same_both = 0.0, same_pred = 0.0, same_gold = 0.0;
  for (const auto& [cell, k] : c.cells) {
    (void)cell;
    same_both += comb2(k);
  }
  for (double k : c.row_sum) same_pred += comb2(k);
  for (double k : c.col_sum) same_gold += comb2(k);
  PairCounts out;
  out.same_both = same_both;
  out.same_pred_only = same_pred - same_both;
  out.same_gold_only = same_gold - same_both;
  out.different_both = comb2(c.n) - same_pred - same_gold + same_both;
  return out;
}

double adjusted_rand(const std::vector<int>& pred, const std::vector<int>& gold) {
  const auto pc = pair_counts(pred, gold);
  if (pred.size() < 2) throw std::invalid_argument("adjusted rand needs at least two documents");
  const double index = pc.same_both;
  const double sp = pc.same_both + pc.same_pred_only, sg = pc.same_both + pc.same_gold_only;
  const double total = comb2(static_cast<double>(pred.size()));
  const double expected = sp * sg / total;
  const double max_index = 0.5 * (sp + sg);
  // both sides all singletons, or both a single cluster: perfect agreement
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double fowlkes_mallows(const std::vector<int>& pred, const std::vector<int>& gold) {
  const auto pc = pair_counts(pred, gold);
  if (pred.size() < 2) throw std::invalid_argument("fowlkes-mallows needs at least two documents");
  const double a = pc.same_both;
  if (a == 0.0) return 0.0;
  return a / std::sqrt((a + pc.same_pred_only) * (a + pc.same_gold_only));
}

double entropy(const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  const auto canon = canonical_labels(labels);
  std::vector<double> counts(static_cast<std::size_t>(count_clusters(canon)), 0.0);
  for (int l : canon) counts[l] += 1.0;
  return entropy_of(counts, static_cast<double>(labels.size()));
}

double mutual_information(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  return mi_of(contingency(pred, gold));
}

double expected_mutual_information(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  const auto c = contingency(pred, gold);
  const double n = c.n;
  const double lg_n = std::lgamma(n + 1.0);
  double emi = 0.0;
  for (double a : c.row_sum) {
    for (double b : c.col_sum) {
      const double lo = std::max(1.0, a + b - n), hi = std::min(a, b);
      const double base = std::lgamma(a + 1) + std::lgamma(b + 1) + std::lgamma(n - a + 1) + std::lgamma(n - b + 1) - lg_n;
      for (double k = lo; k <= hi; k += 1.0) {
        const double log_p = base - std::lgamma(k + 1) - std::lgamma(a - k + 1) - std::lgamma(b - k + 1) -
                             std::lgamma(n - a - b + k + 1);
        emi += (k / n) * (std::log(n * k) - std::log(a * b)) * std::exp(log_p);
      }
    }
  }
  return emi;
}

VMeasure v_measure(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  const auto c = contingency(pred, gold);
  const double h_gold = entropy_of(c.col_sum, c.n), h_pred = entropy_of(c.row_sum, c.n);
  const double mi = mi_of(c);
  VMeasure out;
  // H(gold | pred) = H(gold) - MI; a constant side is perfectly homogeneous/complete
  out.homogeneity = h_gold == 0.0 ? 1.0 : std::clamp(mi / h_gold, 0.0, 1.0);
  out.completeness = h_pred == 0.0 ? 1.0 : std::clamp(mi / h_pred, 0.0, 1.0);
  out.v = harmonic_mean(out.homogeneity, out.completeness);
  return out;
}

double adjusted_mutual_info(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  const auto c = contingency(pred, gold);
  // identical partitions (including the all-singleton and one-cluster cases,
  // where the chance-corrected ratio is 0/0) score 1
  if (c.pred == c.gold) return 1.0;
  if (c.rows == 1 && c.cols == 1) return 1.0;
  const double h_gold = entropy_of(c.col_sum, c.n), h_pred = entropy_of(c.row_sum, c.n);
  const double mi = mi_of(c);
  const double emi = expected_mutual_information(pred, gold);
  double denom = 0.5 * (h_gold + h_pred) - emi;
  const double eps = 2.220446049250313e-16;
  denom = denom < 0 ? std::min(denom, -eps) : std::max(denom, eps);
  return (mi - emi) / denom;
}

EvalReport evaluate(const std::vector<int>& pred, const std::vector<int>& gold) {
  check_pair(pred, gold);
  EvalReport r;
  r.documents = pred.size();
  r.cn = count_clusters(pred);
  r.gold_cn = count_clusters(gold);
  r.bcubed = bcubed(pred, gold);
  r.ceafe = ceafe(pred, gold);
  r.muc = muc(pred, gold);
  if (pred.size() >= 2) {
    r.ari = adjusted_rand(pred, gold);
    r.fowlkes_mallows = fowlkes_mallows(pred, gold);
  } else {
    r.ari = r.fowlkes_mallows = 1.0;
  }
  r.v_measure = v_measure(pred, gold);
  r.ami = adjusted_mutual_info(pred, gold);
  return r;
}

EvalReport evaluate(const Partition& pred, const Partition& gold) {
  const auto aligned = align_partitions(pred, gold);
  return evaluate(aligned.pred, aligned.gold);
}

nlohmann::json to_json(const EvalReport& r) {
  auto prf = [](const Prf& p) { return nlohmann::json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; };
  nlohmann::json j;
  j["documents"] = r.documents;
  j["CN"] = r.cn;
  j["gold_CN"] = r.gold_cn;
  j["bcubed"] = prf(r.bcubed);
  j["ceafe"] = prf(r.ceafe);
  j["muc"] = prf(r.muc);
  j["muc"]["precision_undefined"] = r.muc.precision_undefined;
  j["muc"]["recall_undefined"] = r.muc.recall_undefined;
  j["adjusted_rand"] = {{"score", r.ari}};
  j["fowlkes_mallows"] = {{"score", r.fowlkes_mallows}};
  j["v_measure"] = {{"score", r.v_measure.v},
                    {"homogeneity", r.v_measure.homogeneity},
                    {"completeness", r.v_measure.completeness}};
  j["adjusted_mutual_info"] = {{"score", r.ami}};
  return j;
}

std::string to_table(const EvalReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %10s %10s %10s %10s\n", "metric", "precision", "recall", "score", "score x100");
  out << line;
  auto prf = [&](const char* name, const Prf& p, const char* note = "") {
    std::snprintf(line, sizeof line, "%-22s %10.4f %10.4f %10.4f %10.2f%s\n", name, p.precision, p.recall, p.f1,
                  100.0 * p.f1, note);
    out << line;
  };
  auto single = [&](const char* name, double v) {
    std::snprintf(line, sizeof line, "%-22s %10s %10s %10.4f %10.2f\n", name, "-", "-", v, 100.0 * v);
    out << line;
  };
  prf("B-Cubed F1", r.bcubed);
  prf("CEAF-e F1", r.ceafe);
  prf("MUC F1", r.muc, r.muc.precision_undefined || r.muc.recall_undefined ? "  (undefined: no links)" : "");
  single("Adjusted Rand", r.ari);
  single("Fowlkes-Mallows", r.fowlkes_mallows);
  single("V-measure", r.v_measure.v);
  single("Adjusted Mutual Info", r.ami);
  std::snprintf(line, sizeof line, "%-22s %10d (gold %d, documents %zu)\n", "CN", r.cn, r.gold_cn, r.documents);
  out << line;
  return out.str();
}

}  // namespace tdt
