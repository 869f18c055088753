#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tdt/corpus.hpp"
#include "tdt/features.hpp"
#include "tdt/fusion.hpp"

namespace tdt {

/// Cluster ids are handed out in increasing order and never reused.
struct ClusterPool {
  std::map<std::int64_t, Cluster> clusters;
  std::int64_t next_id = 0;
  std::optional<Timestamp> last_timestamp;
  std::size_t processed = 0;

  std::int64_t create(const FeatureBundle& doc);
  void merge(std::int64_t id, const FeatureBundle& doc);
};

struct LinearModel {
  std::array<double, kNumFeatures> weights{};
  double bias = 0.0;

  double score(const SimilarityFeatures& f) const;
};

struct RankerModel : LinearModel {
  double margin = 0.5;
  double learning_rate = 0.0;
};

/// Predicts "this document starts a new event".
struct CreationModel : LinearModel {
  double threshold = 0.5;
  double learning_rate = 0.0;

  double probability(const SimilarityFeatures& f) const;
  bool creates(const SimilarityFeatures& f) const { return probability(f) >= threshold; }
};

using ClusterScorer = std::function<double(const FeatureBundle&, const Cluster&, const SimilarityFeatures&)>;
/// Returns true when a new cluster should be created instead of merging into `best`.
using CreationDecider = std::function<bool(const FeatureBundle&, const Cluster& best, const SimilarityFeatures&)>;

ClusterScorer make_scorer(const RankerModel& ranker);
CreationDecider make_decider(const CreationModel& creator);

struct RankedCluster {
  std::int64_t cluster_id = 0;
  double score = 0.0;
  SimilarityFeatures features{};
};

/// Highest-scoring cluster (ties to the lower id), or nothing for an empty pool.
std::optional<RankedCluster> rank_clusters(const FeatureBundle& doc, const ClusterPool& pool, const ClusterScorer& scorer,
                                           double sigma_days = kDefaultSigmaDays);
std::optional<RankedCluster> rank_clusters(const FeatureBundle& doc, const ClusterPool& pool, const RankerModel& ranker,
                                           double sigma_days = kDefaultSigmaDays);

struct AssignmentEvent {
  std::string doc_id;
  std::int64_t cluster_id = 0;
  bool created = false;
};

/// Sparse features from the vocabulary plus, when an encoder is given, its dense embedding.
FeatureBundle make_bundle(const Document& doc, const Vocabulary& vocab, const FusionModel* encoder);

class OnlinePipeline {
 public:
  OnlinePipeline(std::shared_ptr<const Vocabulary> vocab, std::shared_ptr<const FusionModel> encoder, ClusterScorer scorer,
                 CreationDecider decider, double sigma_days = kDefaultSigmaDays);

  /// Documents must arrive in non-decreasing timestamp order.
  AssignmentEvent process(const Document& doc);
  AssignmentEvent process(const FeatureBundle& doc);
  std::vector<AssignmentEvent> process_stream(const std::vector<Document>& docs);

  FeatureBundle featurize(const Document& doc) const;
  ClusterPool& pool() { return pool_; }
  const ClusterPool& pool() const { return pool_; }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::shared_ptr<const FusionModel> encoder_;
  ClusterScorer scorer_;
  CreationDecider decider_;
  double sigma_days_;
  ClusterPool pool_;
};

nlohmann::json pool_to_json(const ClusterPool& pool);
ClusterPool pool_from_json(const nlohmann::json& j);
void save_pool(const ClusterPool& pool, const std::filesystem::path& path);
ClusterPool load_pool(const std::filesystem::path& path);

std::string assignment_line(const AssignmentEvent& e);

// --- training data from a gold-labelled replay ---

struct RankerPair {
  SimilarityFeatures positive{};
  SimilarityFeatures negative{};
};

/// Replays `stream` (chronological) with gold assignments. For each document
/// whose event already has a cluster, pairs the features against that cluster
/// with the features against every other cluster.
std::vector<RankerPair> make_ranker_examples(const std::vector<FeatureBundle>& stream, const std::vector<std::string>& gold,
                                             double sigma_days = kDefaultSigmaDays);

struct CreationExample {
  SimilarityFeatures features{};
  int label = 0;  // 1 = the document's event is new at this point
};

struct CreationExamples {
  std::vector<CreationExample> examples;
  std::size_t positives = 0;  // before balancing
  std::size_t negatives = 0;
  bool single_class = false;  // balancing impossible; examples emitted as-is
};

/// Same replay; features are taken against the best cluster under `scorer`.
/// The first document (empty pool) yields no example. The majority class is
/// downsampled (seeded) to the size of the minority class.
CreationExamples make_creation_examples(const std::vector<FeatureBundle>& stream, const std::vector<std::string>& gold,
                                        const ClusterScorer& scorer, std::uint64_t seed,
                                        double sigma_days = kDefaultSigmaDays);

double ranker_loss(const LinearModel& model, const std::vector<RankerPair>& pairs, double margin);
double ranker_accuracy(const LinearModel& model, const std::vector<RankerPair>& pairs);

struct RankerTrainConfig {
  std::vector<double> margins{0.1, 0.5, 1.0};
  std::vector<double> learning_rates{0.01, 0.1, 1.0};
  int epochs = 500;
  int folds = 5;
  std::uint64_t seed = 0;
};

struct RankerTrainResult {
  RankerModel model;
  double cv_accuracy = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Full-batch gradient descent on the mean hinge loss; stops early at zero loss.
RankerModel fit_ranker(const std::vector<RankerPair>& pairs, double margin, double learning_rate, int epochs,
                       std::uint64_t seed);
/// Picks margin and learning rate by k-fold ranking accuracy, then refits on everything.
RankerTrainResult train_ranker(const std::vector<RankerPair>& pairs, const RankerTrainConfig& config = {});

double creation_log_loss(const CreationModel& model, const std::vector<CreationExample>& examples);
double creation_accuracy(const CreationModel& model, const std::vector<CreationExample>& examples);

struct CreationTrainConfig {
  std::vector<double> learning_rates{0.1, 1.0, 5.0};
  int epochs = 1000;
  int folds = 5;
  std::uint64_t seed = 0;
};

struct CreationTrainResult {
  CreationModel model;
  double cv_log_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Logistic regression by full-batch gradient descent from zero weights.
CreationModel fit_creation_model(const std::vector<CreationExample>& examples, double learning_rate, int epochs);
CreationTrainResult train_creation_model(const std::vector<CreationExample>& examples,
                                         const CreationTrainConfig& config = {});

struct OnlineModels {
  RankerModel ranker;
  CreationModel creation;
  double sigma_days = kDefaultSigmaDays;
};

nlohmann::json models_to_json(const OnlineModels& m);
OnlineModels models_from_json(const nlohmann::json& j);
void save_online_models(const OnlineModels& m, const std::filesystem::path& path);
OnlineModels load_online_models(const std::filesystem::path& path);

}  // namespace tdt
