#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tdt {

/// UTC instant at second precision, stored as seconds since 1970-01-01T00:00:00Z.
struct Timestamp {
  std::int64_t seconds = 0;

  auto operator<=>(const Timestamp&) const = default;
};

/// Parses ISO-8601 (`YYYY-MM-DD`, optionally `THH:MM[:SS[.fff]]` with `Z` or
/// `±HH:MM`). A bare date reads as midnight UTC. Throws FormatError.
Timestamp parse_iso8601(std::string_view text);

/// Canonical `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Timestamp t);

enum class Field : std::uint8_t { Title, Body };

struct EntitySpan {
  std::string surface;
  std::size_t start = 0;  // code points, inclusive
  std::size_t end = 0;    // code points, exclusive
  std::string kind;
  Field field = Field::Body;

  bool operator==(const EntitySpan&) const = default;
};

struct Document {
  std::string id;
  std::string title;
  std::string body;
  Timestamp timestamp;
  std::vector<EntitySpan> entities;
  std::optional<std::string> gold_event;

  bool operator==(const Document&) const = default;
};

struct Corpus {
  std::vector<Document> documents;
  Timestamp epoch;  // earliest timestamp present

  bool operator==(const Corpus&) const = default;
  bool has_labels() const;
};

enum class Granularity : std::uint8_t { Hourly, Daily, Bidaily, Weekly, Monthly };

/// Bucket width in hours: 1, 24, 48, 168, 720.
std::int64_t bucket_hours(Granularity g);
Granularity parse_granularity(std::string_view name);
std::string_view to_string(Granularity g);

/// Number of whole granularity buckets between `epoch` and `t`.
/// Throws std::invalid_argument when t < epoch.
std::int64_t timestep(Timestamp t, Timestamp epoch, Granularity g);

/// Checks span bounds and overlap for one document; throws FormatError naming
/// the document id.
void validate_document(const Document& doc);

Corpus parse_corpus(std::string_view text);
Corpus load_corpus(const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Builds a corpus from documents, recomputing the epoch. Checks id uniqueness.
Corpus make_corpus(std::vector<Document> docs);

/// Stable sort by (timestamp, id).
Corpus sort_chronological(Corpus corpus);
bool is_chronological(const Corpus& corpus);

/// Number of Unicode code points in a UTF-8 string.
std::size_t utf8_length(std::string_view s);
/// Byte offset of code point `cp` in `s` (clamped to s.size()).
std::size_t utf8_byte_offset(std::string_view s, std::size_t cp);

}  // namespace tdt
