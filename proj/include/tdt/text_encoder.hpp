#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tdt/corpus.hpp"
#include "tdt/params.hpp"

namespace tdt {

inline constexpr std::size_t kDefaultMaxSeqLen = 230;

struct Token {
  std::string text;  // lower-cased
  Field field = Field::Title;
  std::size_t begin = 0;  // byte offsets within the field
  std::size_t end = 0;
  bool entity = false;
};

/// Splits title then body on whitespace and ASCII punctuation, truncating to
/// `max_seq_len`. An empty document yields a single synthetic non-entity token.
std::vector<Token> tokenize(const Document& doc, std::size_t max_seq_len = kDefaultMaxSeqLen);

/// Token matrices exported by an external model, keyed by document id.
struct PrecomputedTable {
  int d_model = 0;
  std::vector<std::string> order;
  std::unordered_map<std::string, Eigen::MatrixXd> matrices;
};

// TEB1: "TEB1", u32 doc_count, u32 d_model, then per doc u16 id_len, id,
// u32 seq_len, seq_len*d_model f32 row-major. Little-endian throughout.
PrecomputedTable parse_teb1(std::string_view bytes);
std::string serialize_teb1(const PrecomputedTable& table);
PrecomputedTable load_precomputed(const std::filesystem::path& path);
void save_precomputed(const PrecomputedTable& table, const std::filesystem::path& path);

enum class BackendKind : std::uint8_t { Precomputed, ToyTrainable, HashedRandom };

BackendKind parse_backend_kind(std::string_view name);
std::string_view to_string(BackendKind k);

std::uint64_t fnv1a(std::string_view s);
std::size_t token_bucket(std::string_view token, std::size_t buckets);

struct EncoderBackend {
  BackendKind kind = BackendKind::HashedRandom;
  int d_model = 0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd entity_present;  // 1 x d
  Eigen::MatrixXd entity_absent;   // 1 x d
  Eigen::MatrixXd token_table;     // buckets x d, ToyTrainable only
  std::shared_ptr<const PrecomputedTable> precomputed;

  std::vector<ParamRef> parameters();
};

EncoderBackend make_hashed_backend(int d_model, std::uint64_t seed);
EncoderBackend make_toy_backend(int d_model, std::size_t buckets, std::uint64_t seed);
EncoderBackend make_precomputed_backend(std::shared_ptr<const PrecomputedTable> table, std::uint64_t seed);

/// Deterministic N(0, 1/d) vector seeded from the token text.
Eigen::RowVectorXd hashed_token_vector(std::string_view token, std::uint64_t seed, int d_model);

/// Base token vectors plus the entity presence or absence vector per row.
Eigen::MatrixXd encode(const Document& doc, const std::vector<Token>& tokens, const EncoderBackend& backend);

/// Accumulates d(loss)/d(backend params) given d(loss)/d(M_text). `grads` is
/// aligned with `backend.parameters()`.
void encode_backward(const std::vector<Token>& tokens, const EncoderBackend& backend,
                     const Eigen::MatrixXd& grad_text, ParamGrads& grads);

}  // namespace tdt
