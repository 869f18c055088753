#include "tdt/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "tdt/io_util.hpp"

namespace tdt {
namespace {

bool is_separator(unsigned char c) { return c < 0x80 && !std::isalnum(c); }

struct ByteSpan {
  std::size_t begin;
  std::size_t end;
};

void tokenize_field(const std::string& text, Field field, const std::vector<ByteSpan>& entity_spans,
                    std::size_t max_seq_len, std::vector<Token>& out) {
  std::size_t i = 0;
  while (i < text.size() && out.size() < max_seq_len) {
    while (i < text.size() && is_separator(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    const std::size_t begin = i;
    while (i < text.size() && !is_separator(static_cast<unsigned char>(text[i]))) ++i;
    Token tok;
    tok.field = field;
    tok.begin = begin;
    tok.end = i;
    tok.text.reserve(i - begin);
    for (std::size_t k = begin; k < i; ++k) {
      tok.text.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[k]))));
    }
    for (const auto& s : entity_spans) {
      if (s.begin < tok.end && tok.begin < s.end) {
        tok.entity = true;
        break;
      }
    }
    out.push_back(std::move(tok));
  }
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform01(std::uint64_t& state) {
  return (static_cast<double>(splitmix64(state) >> 11) + 0.5) * 0x1.0p-53;
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

void init_entity_vectors(EncoderBackend& b) {
  std::mt19937_64 rng(b.seed ^ 0xE7717E5ULL);
  b.entity_present = gaussian_matrix(1, b.d_model, 0.02, rng);
  b.entity_absent = gaussian_matrix(1, b.d_model, 0.02, rng);
}

}  // namespace

std::vector<Token> tokenize(const Document& doc, std::size_t max_seq_len) {
  std::vector<ByteSpan> title_spans;
  std::vector<ByteSpan> body_spans;
  for (const auto& e : doc.entities) {
    const std::string& text = e.field == Field::Title ? doc.title : doc.body;
    ByteSpan s{utf8_byte_offset(text, e.start), utf8_byte_offset(text, e.end)};
    (e.field == Field::Title ? title_spans : body_spans).push_back(s);
  }
  std::vector<Token> out;
  if (max_seq_len == 0) max_seq_len = 1;
  tokenize_field(doc.title, Field::Title, title_spans, max_seq_len, out);
  tokenize_field(doc.body, Field::Body, body_spans, max_seq_len, out);
  if (out.empty()) out.push_back(Token{"<empty>", Field::Body, 0, 0, false});
  return out;
}

PrecomputedTable parse_teb1(std::string_view bytes) {
  ByteReader in(bytes);
  if (in.remaining() < 4 || in.bytes(4) != "TEB1") throw FormatError("TEB1: bad magic");
  PrecomputedTable t;
  const std::uint32_t count = in.u32();
  t.d_model = static_cast<int>(in.u32());
  if (t.d_model <= 0) throw FormatError("TEB1: d_model must be positive");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint16_t id_len = in.u16();
    std::string id(in.bytes(id_len));
    const std::uint32_t seq_len = in.u32();
    if (static_cast<std::uint64_t>(seq_len) * static_cast<std::uint64_t>(t.d_model) * 4 > in.remaining()) {
      throw FormatError("TEB1: truncated payload in record '" + id + "'");
    }
    Eigen::MatrixXd m(seq_len, t.d_model);
    for (std::uint32_t r = 0; r < seq_len; ++r) {
      for (int c = 0; c < t.d_model; ++c) m(r, c) = in.f32();
    }
    if (!t.matrices.emplace(id, std::move(m)).second) throw FormatError("TEB1: duplicate id '" + id + "'");
    t.order.push_back(std::move(id));
  }
  if (!in.done()) throw FormatError("TEB1: trailing bytes after last record");
  return t;
}

std::string serialize_teb1(const PrecomputedTable& table) {
  ByteWriter out;
  out.bytes("TEB1");
  out.u32(static_cast<std::uint32_t>(table.order.size()));
  out.u32(static_cast<std::uint32_t>(table.d_model));
  for (const auto& id : table.order) {
    const auto& m = table.matrices.at(id);
    if (id.size() > 0xFFFF) throw Error("TEB1: id too long");
    if (m.cols() != table.d_model) throw Error("TEB1: matrix width mismatch for '" + id + "'");
    out.u16(static_cast<std::uint16_t>(id.size()));
    out.bytes(id);
    out.u32(static_cast<std::uint32_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.f32(static_cast<float>(m(r, c)));
    }
  }
  return out.str();
}

PrecomputedTable load_precomputed(const std::filesystem::path& path) { return parse_teb1(read_file(path)); }

void save_precomputed(const PrecomputedTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_teb1(table));
}

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "precomputed") return BackendKind::Precomputed;
  if (name == "toy") return BackendKind::ToyTrainable;
  if (name == "hashed") return BackendKind::HashedRandom;
  throw std::invalid_argument("unknown encoder backend '" + std::string(name) + "'");
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Precomputed: return "precomputed";
    case BackendKind::ToyTrainable: return "toy";
    case BackendKind::HashedRandom: return "hashed";
  }
  return "?";
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t token_bucket(std::string_view token, std::size_t buckets) {
  return static_cast<std::size_t>(fnv1a(token) % buckets);
}

std::vector<ParamRef> EncoderBackend::parameters() {
  std::vector<ParamRef> out{{"entity_present", &entity_present, false}, {"entity_absent", &entity_absent, false}};
  if (kind == BackendKind::ToyTrainable) out.push_back({"token_table", &token_table, true});
  return out;
}

EncoderBackend make_hashed_backend(int d_model, std::uint64_t seed) {
  EncoderBackend b;
  b.kind = BackendKind::HashedRandom;
  b.d_model = d_model;
  b.seed = seed;
  init_entity_vectors(b);
  return b;
}

EncoderBackend make_toy_backend(int d_model, std::size_t buckets, std::uint64_t seed) {
  if (buckets == 0) throw std::invalid_argument("toy backend needs at least one bucket");
  EncoderBackend b;
  b.kind = BackendKind::ToyTrainable;
  b.d_model = d_model;
  b.seed = seed;
  init_entity_vectors(b);
  std::mt19937_64 rng(seed);
  b.token_table = gaussian_matrix(static_cast<Eigen::Index>(buckets), d_model, 1.0 / std::sqrt(d_model), rng);
  return b;
}

EncoderBackend make_precomputed_backend(std::shared_ptr<const PrecomputedTable> table, std::uint64_t seed) {
  if (!table) throw std::invalid_argument("precomputed backend needs a table");
  EncoderBackend b;
  b.kind = BackendKind::Precomputed;
  b.d_model = table->d_model;
  b.seed = seed;
  b.precomputed = std::move(table);
  init_entity_vectors(b);
  return b;
}

Eigen::RowVectorXd hashed_token_vector(std::string_view token, std::uint64_t seed, int d_model) {
  std::uint64_t state = fnv1a(token) ^ (seed * 0x9E3779B97F4A7C15ULL);
  Eigen::RowVectorXd v(d_model);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_model));
  for (int c = 0; c < d_model; c += 2) {
    const double u1 = uniform01(state);
    const double u2 = uniform01(state);
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[c] = scale * r * std::cos(2.0 * std::numbers::pi * u2);
    if (c + 1 < d_model) v[c + 1] = scale * r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return v;
}

Eigen::MatrixXd encode(const Document& doc, const std::vector<Token>& tokens, const EncoderBackend& backend) {
  Eigen::MatrixXd m;
  switch (backend.kind) {
    case BackendKind::Precomputed: {
      auto it = backend.precomputed->matrices.find(doc.id);
      if (it == backend.precomputed->matrices.end()) {
        throw Error("precomputed embeddings missing document '" + doc.id + "'");
      }
      m = it->second;
      if (m.rows() == 0) m = Eigen::MatrixXd::Zero(1, backend.d_model);
      break;
    }
    case BackendKind::ToyTrainable: {
      m.resize(static_cast<Eigen::Index>(tokens.size()), backend.d_model);
      const auto buckets = static_cast<std::size_t>(backend.token_table.rows());
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) =
            backend.token_table.row(static_cast<Eigen::Index>(token_bucket(tokens[i].text, buckets)));
      }
      break;
    }
    case BackendKind::HashedRandom: {
      m.resize(static_cast<Eigen::Index>(tokens.size()), backend.d_model);
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = hashed_token_vector(tokens[i].text, backend.seed, backend.d_model);
      }
      break;
    }
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const bool entity = static_cast<std::size_t>(r) < tokens.size() && tokens[static_cast<std::size_t>(r)].entity;
    m.row(r) += entity ? backend.entity_present.row(0) : backend.entity_absent.row(0);
  }
  return m;
}

void encode_backward(const std::vector<Token>& tokens, const EncoderBackend& backend,
                     const Eigen::MatrixXd& grad_text, ParamGrads& grads) {
  for (Eigen::Index r = 0; r < grad_text.rows(); ++r) {
    const bool entity = static_cast<std::size_t>(r) < tokens.size() && tokens[static_cast<std::size_t>(r)].entity;
    grads[entity ? 0 : 1].add_row(0, grad_text.row(r));
  }
  if (backend.kind == BackendKind::ToyTrainable) {
    const auto buckets = static_cast<std::size_t>(backend.token_table.rows());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      grads[2].add_row(static_cast<Eigen::Index>(token_bucket(tokens[i].text, buckets)),
                       grad_text.row(static_cast<Eigen::Index>(i)));
    }
  }
}

}  // namespace tdt
