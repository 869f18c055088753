#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tdt/corpus.hpp"
#include "tdt/fusion.hpp"
#include "tdt/params.hpp"

namespace tdt {

/// u.v / (|u||v|), clamped to [-1, 1]. Throws std::invalid_argument on a zero vector.
double cosine_sim(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// max(0, sim(a, n) - sim(a, p) + margin).
double triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                    const Eigen::VectorXd& negative, double margin);

enum class MiningRegime : std::uint8_t {
  BatchHard,
  BatchAll,
  BatchSemiHard,
  BatchHardSoftMargin,
  EPEN,  // easiest positive, easiest negative
  EPHN,
  HPEN,
  HPHN,  // hardest positive, hardest negative
};

MiningRegime parse_mining_regime(std::string_view name);
std::string_view to_string(MiningRegime m);
/// Offline regimes mine over the whole epoch's embedding table instead of a batch.
bool is_offline(MiningRegime m);

/// Indices into the mined embedding set.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  bool operator==(const Triplet&) const = default;
};

/// Selects triplets by cosine similarity (distance = 1 - cosine). Ties go to
/// the lower index. Anchors lacking a positive or a negative are skipped.
std::vector<Triplet> mine_batch(const std::vector<Eigen::VectorXd>& embeddings, const std::vector<int>& labels,
                                MiningRegime regime, double margin);

/// Mean loss over `triplets` (hinge, or log(1 + exp(.)) when `soft_margin`).
/// When `grads` is non-null it receives d(loss)/d(embedding) per input row.
double triplet_batch_loss(const std::vector<Eigen::VectorXd>& embeddings, const std::vector<Triplet>& triplets,
                          double margin, bool soft_margin, std::vector<Eigen::VectorXd>* grads);

struct TrainConfig {
  double margin = 0.5;
  int batch_events = 4;     // P
  int docs_per_event = 8;   // K
  int epochs = 3;
  double learning_rate = 1e-3;
  MiningRegime mining = MiningRegime::BatchHard;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adam with lazy updates for row-sparse tensors (only rows with a gradient move).
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<ParamRef>& params, const ParamGrads& grads);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

struct BatchLoss {
  int epoch = 0;
  int batch = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<BatchLoss> history;
  std::vector<double> epoch_means;
  int best_epoch = 0;
};

/// Fine-tunes `model` with triplet loss. Leaves the parameters of the epoch
/// with the lowest mean training loss in place.
TrainResult train(FusionModel& model, const Corpus& corpus, const TrainConfig& config);

std::string loss_history_csv(const TrainResult& result);

}  // namespace tdt
