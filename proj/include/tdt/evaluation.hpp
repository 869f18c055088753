#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace tdt {

/// doc id -> cluster label
using Partition = std::map<std::string, std::string>;

struct AlignedLabels {
  std::vector<std::string> ids;
  std::vector<int> pred;
  std::vector<int> gold;
};

/// Both partitions must cover exactly the same ids. Labels are renumbered in
/// order of first appearance (ids in sorted order).
AlignedLabels align_partitions(const Partition& pred, const Partition& gold);

/// Relabels clusters 0, 1, ... in order of first appearance.
std::vector<int> canonical_labels(const std::vector<int>& labels);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

double harmonic_mean(double a, double b);

Prf bcubed(const std::vector<int>& pred, const std::vector<int>& gold);

/// Entity-based CEAF with phi4 similarity and an optimal one-to-one alignment.
Prf ceafe(const std::vector<int>& pred, const std::vector<int>& gold);

struct MucScore : Prf {
  bool precision_undefined = false;  // pred has no links; precision reported as 0
  bool recall_undefined = false;     // gold has no links; recall reported as 0
};

MucScore muc(const std::vector<int>& pred, const std::vector<int>& gold);

struct PairCounts {
  double same_both = 0;       // a
  double same_pred_only = 0;  // b
  double same_gold_only = 0;  // c
  double different_both = 0;  // d
};

PairCounts pair_counts(const std::vector<int>& pred, const std::vector<int>& gold);
double adjusted_rand(const std::vector<int>& pred, const std::vector<int>& gold);
double fowlkes_mallows(const std::vector<int>& pred, const std::vector<int>& gold);

struct VMeasure {
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v = 0.0;
};

double entropy(const std::vector<int>& labels);
double mutual_information(const std::vector<int>& pred, const std::vector<int>& gold);
/// Expected mutual information under the hypergeometric model with fixed marginals.
double expected_mutual_information(const std::vector<int>& pred, const std::vector<int>& gold);

VMeasure v_measure(const std::vector<int>& pred, const std::vector<int>& gold);
double adjusted_mutual_info(const std::vector<int>& pred, const std::vector<int>& gold);

struct EvalReport {
  std::size_t documents = 0;
  int cn = 0;       // predicted clusters, singletons included
  int gold_cn = 0;
  Prf bcubed;
  Prf ceafe;
  MucScore muc;
  double ari = 0.0;
  double fowlkes_mallows = 0.0;
  VMeasure v_measure;
  double ami = 0.0;
};

EvalReport evaluate(const Partition& pred, const Partition& gold);
EvalReport evaluate(const std::vector<int>& pred, const std::vector<int>& gold);

nlohmann::json to_json(const EvalReport& report);
std::string to_table(const EvalReport& report);

}  // namespace tdt
