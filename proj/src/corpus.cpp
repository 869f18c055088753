#include "tdt/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "tdt/io_util.hpp"

namespace tdt {
namespace {

using nlohmann::json;

// Days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

int read_digits(std::string_view s, std::size_t pos, std::size_t n, std::string_view whole) {
  if (pos + n > s.size()) throw FormatError("unparseable timestamp '" + std::string(whole) + "'");
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + n, v);
  if (ec != std::errc{} || ptr != s.data() + pos + n) {
    throw FormatError("unparseable timestamp '" + std::string(whole) + "'");
  }
  return v;
}

void expect_char(std::string_view s, std::size_t pos, char c, std::string_view whole) {
  if (pos >= s.size() || s[pos] != c) {
    throw FormatError("unparseable timestamp '" + std::string(whole) + "'");
  }
}

}  // namespace

Timestamp parse_iso8601(std::string_view text) {
  const auto bad = [&] { return FormatError("unparseable timestamp '" + std::string(text) + "'"); };
  if (text.size() < 10) throw bad();
  const int year = read_digits(text, 0, 4, text);
  expect_char(text, 4, '-', text);
  const int month = read_digits(text, 5, 2, text);
  expect_char(text, 7, '-', text);
  const int day = read_digits(text, 8, 2, text);
  if (month < 1 || month > 12 || day < 1 ||
      static_cast<unsigned>(day) > days_in_month(year, static_cast<unsigned>(month))) {
    throw bad();
  }
  std::int64_t secs = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400;
  std::size_t pos = 10;
  if (pos == text.size()) return Timestamp{secs};
  if (text[pos] != 'T' && text[pos] != 't' && text[pos] != ' ') throw bad();
  ++pos;
  const int hh = read_digits(text, pos, 2, text);
  expect_char(text, pos + 2, ':', text);
  const int mm = read_digits(text, pos + 3, 2, text);
  pos += 5;
  int ss = 0;
  if (pos < text.size() && text[pos] == ':') {
    ss = read_digits(text, pos + 1, 2, text);
    pos += 3;
    if (pos < text.size() && (text[pos] == '.' || text[pos] == ',')) {
      ++pos;
      const auto start = pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
      if (pos == start) throw bad();
    }
  }
  if (hh > 23 || mm > 59 || ss > 60) throw bad();
  secs += hh * 3600 + mm * 60 + ss;
  if (pos == text.size()) return Timestamp{secs};
  if (text[pos] == 'Z' || text[pos] == 'z') {
    if (pos + 1 != text.size()) throw bad();
    return Timestamp{secs};
  }
  if (text[pos] == '+' || text[pos] == '-') {
    const int sign = text[pos] == '+' ? 1 : -1;
    const int oh = read_digits(text, pos + 1, 2, text);
    std::size_t p = pos + 3;
    int om = 0;
    if (p < text.size()) {
      if (text[p] == ':') ++p;
      om = read_digits(text, p, 2, text);
      p += 2;
    }
    if (p != text.size() || oh > 23 || om > 59) throw bad();
    return Timestamp{secs - sign * (oh * 3600 + om * 60)};
  }
  throw bad();
}

std::string format_iso8601(Timestamp t) {
  std::int64_t days = t.seconds / 86400;
  std::int64_t rem = t.seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y = 0;
  unsigned m = 0;
  unsigned d = 0;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

bool Corpus::has_labels() const {
  return !documents.empty() &&
         std::all_of(documents.begin(), documents.end(), [](const Document& d) { return d.gold_event.has_value(); });
}

std::int64_t bucket_hours(Granularity g) {
  switch (g) {
    case Granularity::Hourly: return 1;
    case Granularity::Daily: return 24;
    case Granularity::Bidaily: return 48;
    case Granularity::Weekly: return 168;
    case Granularity::Monthly: return 720;
  }
  throw std::invalid_argument("unknown granularity");
}

Granularity parse_granularity(std::string_view name) {
  if (name == "hourly") return Granularity::Hourly;
  if (name == "daily") return Granularity::Daily;
  if (name == "bidaily") return Granularity::Bidaily;
  if (name == "weekly") return Granularity::Weekly;
  if (name == "monthly") return Granularity::Monthly;
  throw std::invalid_argument("unknown granularity '" + std::string(name) + "'");
}

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::Hourly: return "hourly";
    case Granularity::Daily: return "daily";
    case Granularity::Bidaily: return "bidaily";
    case Granularity::Weekly: return "weekly";
    case Granularity::Monthly: return "monthly";
  }
  return "?";
}

std::int64_t timestep(Timestamp t, Timestamp epoch, Granularity g) {
  if (t < epoch) {
    throw std::invalid_argument("timestamp " + format_iso8601(t) + " precedes epoch " + format_iso8601(epoch));
  }
  return (t.seconds - epoch.seconds) / (bucket_hours(g) * 3600);
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::size_t utf8_byte_offset(std::string_view s, std::size_t cp) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (seen == cp) return i;
      ++seen;
    }
  }
  return s.size();
}

void validate_document(const Document& doc) {
  const std::size_t title_len = utf8_length(doc.title);
  const std::size_t body_len = utf8_length(doc.body);
  for (const auto& e : doc.entities) {
    const std::size_t limit = e.field == Field::Title ? title_len : body_len;
    if (!(e.start < e.end && e.end <= limit)) {
      throw FormatError("document '" + doc.id + "': entity span [" + std::to_string(e.start) + ", " +
                        std::to_string(e.end) + ") out of bounds");
    }
  }
  for (std::size_t i = 0; i < doc.entities.size(); ++i) {
    for (std::size_t j = i + 1; j < doc.entities.size(); ++j) {
      const auto& a = doc.entities[i];
      const auto& b = doc.entities[j];
      if (a.field == b.field && a.start < b.end && b.start < a.end) {
        throw FormatError("document '" + doc.id + "': overlapping entity spans");
      }
    }
  }
}

namespace {

Document document_from_json(const json& j) {
  Document doc;
  doc.id = j.at("id").get<std::string>();
  doc.title = j.value("title", std::string{});
  doc.body = j.value("body", std::string{});
  doc.timestamp = parse_iso8601(j.at("date").get<std::string>());
  if (auto it = j.find("entities"); it != j.end() && !it->is_null()) {
    for (const auto& e : *it) {
      EntitySpan span;
      span.surface = e.at("text").get<std::string>();
      const auto start = e.at("start").get<std::int64_t>();
      const auto end = e.at("end").get<std::int64_t>();
      if (start < 0 || end < 0) throw FormatError("document '" + doc.id + "': negative entity offset");
      span.start = static_cast<std::size_t>(start);
      span.end = static_cast<std::size_t>(end);
      span.kind = e.value("type", std::string{});
      const auto field = e.value("field", std::string{"body"});
      if (field == "title") {
        span.field = Field::Title;
      } else if (field == "body") {
        span.field = Field::Body;
      } else {
        throw FormatError("document '" + doc.id + "': entity field must be title or body");
      }
      doc.entities.push_back(std::move(span));
    }
  }
  if (auto it = j.find("event"); it != j.end() && !it->is_null()) doc.gold_event = it->get<std::string>();
  validate_document(doc);
  return doc;
}

json document_to_json(const Document& doc) {
  json ents = json::array();
  for (const auto& e : doc.entities) {
    ents.push_back({{"text", e.surface},
                    {"start", e.start},
                    {"end", e.end},
                    {"type", e.kind},
                    {"field", e.field == Field::Title ? "title" : "body"}});
  }
  json j = {{"id", doc.id},
            {"title", doc.title},
            {"body", doc.body},
            {"date", format_iso8601(doc.timestamp)},
            {"entities", std::move(ents)}};
  j["event"] = doc.gold_event ? json(*doc.gold_event) : json(nullptr);
  return j;
}

}  // namespace

Corpus make_corpus(std::vector<Document> docs) {
  std::unordered_set<std::string> seen;
  for (const auto& d : docs) {
    if (!seen.insert(d.id).second) throw FormatError("duplicate document id '" + d.id + "'");
  }
  Corpus c;
  c.documents = std::move(docs);
  if (!c.documents.empty()) {
    c.epoch = std::min_element(c.documents.begin(), c.documents.end(), [](const Document& a, const Document& b) {
                return a.timestamp < b.timestamp;
              })->timestamp;
  }
  return c;
}

Corpus parse_corpus(std::string_view text) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    Document doc;
    try {
      doc = document_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(doc.id).second) {
      throw FormatError("line " + std::to_string(line_no) + ": duplicate document id '" + doc.id + "'");
    }
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw FormatError("empty corpus");
  return make_corpus(std::move(docs));
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.documents) {
    out += document_to_json(d).dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

Corpus sort_chronological(Corpus corpus) {
  std::stable_sort(corpus.documents.begin(), corpus.documents.end(), [](const Document& a, const Document& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.id < b.id;
  });
  return corpus;
}

bool is_chronological(const Corpus& corpus) {
  return std::is_sorted(corpus.documents.begin(), corpus.documents.end(),
                        [](const Document& a, const Document& b) { return a.timestamp < b.timestamp; });
}

}  // namespace tdt
