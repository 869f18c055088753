#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tdt/corpus.hpp"
#include "tdt/params.hpp"
#include "tdt/text_encoder.hpp"
#include "tdt/time_encoding.hpp"

namespace tdt {

/// A: pool(text + time); AM: pool(att(text + time)); CM: pool(att([text, time]));
/// ACM: pool(att([text, time] + [time, time])). Concatenation is along features.
enum class FusionStrategy : std::uint8_t { A, AM, CM, ACM };

FusionStrategy parse_fusion_strategy(std::string_view name);
std::string_view to_string(FusionStrategy s);

/// Input width of the attention block for a strategy (d or 2d).
int attention_input_width(FusionStrategy s, int d_model);

struct AttentionParams {
  int n_heads = 1;
  Eigen::MatrixXd wq;  // in x in, heads are column slices
  Eigen::MatrixXd wk;
  Eigen::MatrixXd wv;
  Eigen::MatrixXd wo;  // in x out

  Eigen::Index input_width() const { return wq.rows(); }
  Eigen::Index head_width() const { return wq.cols() / n_heads; }
};

AttentionParams make_attention(int in_width, int out_width, int n_heads, double stddev, std::mt19937_64& rng);

struct AttentionTrace {
  Eigen::MatrixXd x;
  std::vector<Eigen::MatrixXd> q, k, v, p;
  Eigen::MatrixXd h;
};

/// Scaled dot-product self-attention per head, heads concatenated and projected by wo.
Eigen::MatrixXd multi_head_attention(const Eigen::MatrixXd& x, const AttentionParams& params,
                                     AttentionTrace* trace = nullptr);

/// Accumulation targets for attention parameter gradients.
struct AttentionGrads {
  Eigen::MatrixXd& wq;
  Eigen::MatrixXd& wk;
  Eigen::MatrixXd& wv;
  Eigen::MatrixXd& wo;
};

/// Returns d(loss)/dx and accumulates parameter gradients into `grads`.
Eigen::MatrixXd multi_head_attention_backward(const AttentionTrace& trace, const AttentionParams& params,
                                              const Eigen::MatrixXd& grad_out, AttentionGrads& grads);

/// `seq_len` copies of the time embedding as rows.
Eigen::MatrixXd build_time_matrix(const Eigen::VectorXd& te, Eigen::Index seq_len);

struct FusionModelConfig {
  FusionStrategy strategy = FusionStrategy::CM;
  TimeEncoderConfig time;
  BackendKind backend = BackendKind::ToyTrainable;
  std::size_t vocab_buckets = 1 << 16;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  int n_heads = 4;
  double attention_init_std = 0.02;
  std::uint64_t seed = 0;
  Timestamp epoch;
  std::shared_ptr<const PrecomputedTable> precomputed;
};

/// Indices of each tensor in `FusionModel::parameters()`; -1 when absent.
struct ParamLayout {
  int entity_present = 0;
  int entity_absent = 1;
  int token_table = -1;
  int learnpe_table = -1;
  int t2v_omega = -1;
  int t2v_phi = -1;
  int wq = -1, wk = -1, wv = -1, wo = -1;
};

struct FusionModel {
  FusionStrategy strategy = FusionStrategy::CM;
  TimeEncoderConfig time;
  EncoderBackend backend;
  AttentionParams attention;    // unused for strategy A
  Eigen::MatrixXd learnpe_table;  // max_position x d, LearnPE only
  Eigen::MatrixXd t2v_omega;      // 1 x d, Time2Vec only
  Eigen::MatrixXd t2v_phi;        // 1 x d
  Timestamp epoch;                // timestep origin
  std::size_t max_seq_len = kDefaultMaxSeqLen;

  int d_model() const { return backend.d_model; }
  bool uses_attention() const { return strategy != FusionStrategy::A; }

  std::vector<ParamRef> parameters();
  ParamLayout layout() const;

  std::int64_t step_of(Timestamp t) const { return timestep(t, epoch, time.granularity); }
  Eigen::VectorXd time_embedding(std::int64_t step) const;
};

FusionModel make_fusion_model(const FusionModelConfig& config);

/// Fuses a text matrix with a time matrix of the same shape into a d_model vector.
Eigen::VectorXd fuse(const Eigen::MatrixXd& text, const Eigen::MatrixXd& time, const FusionModel& model,
                     AttentionTrace* trace = nullptr);

struct FuseInputGrads {
  Eigen::MatrixXd text;       // seq_len x d
  Eigen::VectorXd time_row;   // d, summed over the repeated rows
};

/// Backward through pooling, attention and the strategy's combination step.
/// Attention gradients are accumulated into `grads` (aligned with parameters()).
FuseInputGrads fuse_backward(const FusionModel& model, const AttentionTrace& trace, Eigen::Index seq_len,
                             const Eigen::VectorXd& grad_ef, ParamGrads& grads);

/// Everything needed to backpropagate one document embedding.
struct EmbedTrace {
  std::vector<Token> tokens;
  std::int64_t step = 0;
  Eigen::Index seq_len = 0;
  AttentionTrace attention;
};

/// Full document path: tokenize, encode, time-encode at `step`, fuse.
Eigen::VectorXd embed_at(const FusionModel& model, const Document& doc, std::int64_t step,
                         EmbedTrace* trace = nullptr);
/// As embed_at with the document's own timestep relative to the model epoch.
Eigen::VectorXd embed(const FusionModel& model, const Document& doc, EmbedTrace* trace = nullptr);

/// Accumulates d(loss)/d(every model parameter) given d(loss)/d(e_f).
void embed_backward(const FusionModel& model, const EmbedTrace& trace, const Eigen::VectorXd& grad_ef,
                    ParamGrads& grads);

std::string serialize_model(const FusionModel& model);
FusionModel parse_model(std::string_view bytes, std::shared_ptr<const PrecomputedTable> precomputed = nullptr);
void save_model(const FusionModel& model, const std::filesystem::path& path);
FusionModel load_model(const std::filesystem::path& path,
                       std::shared_ptr<const PrecomputedTable> precomputed = nullptr);

}  // namespace tdt
