#include "tdt/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "tdt/io_util.hpp"
#include "tdt/text_encoder.hpp"

namespace tdt {
namespace {

using nlohmann::json;

using TermLists = std::array<std::vector<std::string>, kNumSubvectors>;

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

TermLists extract_terms(const Document& doc, const std::unordered_set<std::string>& stop_words) {
  TermLists out;
  for (const auto& tok : tokenize(doc, std::numeric_limits<std::size_t>::max())) {
    if (tok.text == "<empty>") continue;  // synthetic placeholder, never a real term
    if (stop_words.contains(tok.text)) continue;
    const Section sec = tok.field == Field::Title ? Section::Title : Section::Body;
    std::string lemma = stem(tok.text);
    out[subvector_slot(Channel::Tokens, sec)].push_back(tok.text);
    out[subvector_slot(Channel::Tokens, Section::All)].push_back(tok.text);
    if (!stop_words.contains(lemma)) {
      out[subvector_slot(Channel::Lemmas, sec)].push_back(lemma);
      out[subvector_slot(Channel::Lemmas, Section::All)].push_back(std::move(lemma));
    }
  }
  for (const auto& e : doc.entities) {
    const Section sec = e.field == Field::Title ? Section::Title : Section::Body;
    std::string term = lower(e.surface);
    if (term.empty()) continue;
    out[subvector_slot(Channel::Entities, sec)].push_back(term);
    out[subvector_slot(Channel::Entities, Section::All)].push_back(std::move(term));
  }
  return out;
}

std::array<std::string_view, 3> kChannelNames = {"tokens", "lemmas", "entities"};

Channel parse_channel(std::string_view name) {
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    if (kChannelNames[c] == name) return static_cast<Channel>(c);
  }
  throw FormatError("vocabulary: unknown channel '" + std::string(name) + "'");
}

}  // namespace

std::string_view to_string(Channel c) { return kChannelNames[static_cast<std::size_t>(c)]; }

std::string subvector_name(std::size_t slot) {
  static constexpr std::array<std::string_view, 3> kSections = {"title", "body", "all"};
  return std::string(kChannelNames[slot / 3]) + "_" + std::string(kSections[slot % 3]);
}

const std::unordered_set<std::string>& default_stop_words() {
  static const std::unordered_set<std::string> kWords = {
      "a",      "about", "above", "after", "again", "against", "all",   "am",    "an",     "and",   "any",
      "are",    "as",    "at",    "be",    "because", "been",  "before", "being", "below", "between", "both",
      "but",    "by",    "can",   "could", "did",   "do",      "does",  "doing", "down",  "during", "each",
      "few",    "for",   "from",  "further", "had", "has",     "have",  "having", "he",   "her",    "here",
      "hers",   "him",   "his",   "how",   "i",     "if",      "in",    "into",  "is",    "it",     "its",
      "itself", "just",  "me",    "more",  "most",  "my",      "no",    "nor",   "not",   "now",    "of",
      "off",    "on",    "once",  "only",  "or",    "other",   "our",   "ours",  "out",   "over",   "own",
      "same",   "she",   "should", "so",   "some",  "such",    "than",  "that",  "the",   "their",  "theirs",
      "them",   "then",  "there", "these", "they",  "this",    "those", "through", "to",  "too",    "under",
      "until",  "up",    "very",  "was",   "we",    "were",    "what",  "when",  "where", "which",  "while",
      "who",    "whom",  "why",   "will",  "with",  "would",   "you",   "your",  "yours", "said",   "says",
      "also",   "s",     "t"};
  return kWords;
}

std::string stem(std::string_view word) {
  std::string w(word);
  const auto ends = [&](std::string_view suf) { return w.size() >= suf.size() && w.ends_with(suf); };
  const auto strip = [&](std::size_t n, std::string_view add = {}) {
    w.resize(w.size() - n);
    w += add;
  };
  if (w.size() <= 3) return w;
  if (ends("sses")) {
    strip(2);
  } else if (ends("ies") && w.size() > 4) {
    strip(3, "y");
  } else if (ends("ing") && w.size() >= 6) {
    strip(3);
  } else if (ends("ed") && w.size() >= 5) {
    strip(2);
  } else if (ends("ly") && w.size() >= 5) {
    strip(2);
  } else if (ends("s") && !ends("ss") && !ends("us") && !ends("is")) {
    strip(1);
  }
  return w;
}

Vocabulary build_vocabulary(const Corpus& corpus, std::size_t max_terms,
                            const std::unordered_set<std::string>& stop_words) {
  if (corpus.documents.empty()) throw std::invalid_argument("build_vocabulary: empty corpus");
  Vocabulary v;
  v.num_docs = corpus.documents.size();
  std::array<std::map<std::string, std::uint32_t>, kNumChannels> df;
  for (const auto& doc : corpus.documents) {
    const TermLists terms = extract_terms(doc, stop_words);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const auto& all = terms[c * 3 + static_cast<std::size_t>(Section::All)];
      std::unordered_set<std::string_view> seen(all.begin(), all.end());
      for (auto t : seen) ++df[c][std::string(t)];
    }
  }
  const double n1 = static_cast<double>(v.num_docs) + 1.0;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    std::vector<std::pair<std::string, std::uint32_t>> ranked(df[c].begin(), df[c].end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > max_terms) ranked.resize(max_terms);
    auto& cv = v.channels[c];
    for (auto& [term, count] : ranked) {
      cv.index.emplace(term, static_cast<std::uint32_t>(cv.terms.size()));
      cv.terms.push_back(term);
      cv.df.push_back(count);
      cv.idf.push_back(std::log(n1 / (static_cast<double>(count) + 1.0)) + 1.0);
    }
  }
  return v;
}

std::string vocabulary_to_json(const Vocabulary& vocab) {
  json terms = json::array();
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const auto& cv = vocab.channels[c];
    for (std::size_t i = 0; i < cv.terms.size(); ++i) {
      terms.push_back({{"channel", kChannelNames[c]}, {"term", cv.terms[i]}, {"df", cv.df[i]}, {"idf", cv.idf[i]}});
    }
  }
  return json{{"num_docs", vocab.num_docs}, {"terms", std::move(terms)}}.dump(1);
}

Vocabulary vocabulary_from_json(std::string_view text) {
  Vocabulary v;
  try {
    const json j = json::parse(text);
    v.num_docs = j.at("num_docs").get<std::size_t>();
    for (const auto& t : j.at("terms")) {
      auto& cv = v.channels[static_cast<std::size_t>(parse_channel(t.at("channel").get<std::string>()))];
      auto term = t.at("term").get<std::string>();
      if (!cv.index.emplace(term, static_cast<std::uint32_t>(cv.terms.size())).second) {
        throw FormatError("vocabulary: duplicate term '" + term + "'");
      }
      cv.terms.push_back(std::move(term));
      cv.df.push_back(t.at("df").get<std::uint32_t>());
      cv.idf.push_back(t.at("idf").get<double>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("vocabulary: ") + e.what());
  }
  return v;
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  write_file_atomic(path, vocabulary_to_json(vocab));
}

Vocabulary load_vocabulary(const std::filesystem::path& path) { return vocabulary_from_json(read_file(path)); }

Subvectors featurize(const Document& doc, const Vocabulary& vocab) {
  const TermLists terms = extract_terms(doc, default_stop_words());
  Subvectors out;
  for (std::size_t slot = 0; slot < kNumSubvectors; ++slot) {
    const auto& cv = vocab.channels[slot / 3];
    std::map<std::uint32_t, double> tf;
    for (const auto& t : terms[slot]) {
      if (auto it = cv.index.find(t); it != cv.index.end()) tf[it->second] += 1.0;
    }
    std::vector<SparseVector::Entry> entries;
    entries.reserve(tf.size());
    for (const auto& [idx, count] : tf) entries.emplace_back(idx, count * cv.idf[idx]);
    out[slot] = SparseVector(std::move(entries)).normalized();
  }
  return out;
}

double time_similarity(Timestamp a, Timestamp b, double sigma_days) {
  const double days = std::abs(static_cast<double>(a.seconds - b.seconds)) / 86400.0;
  const double v = std::exp(-(days * days) / (2.0 * sigma_days * sigma_days));
  return std::max(v, std::numeric_limits<double>::min());
}

void Cluster::add(const FeatureBundle& doc) {
  members.push_back(doc.doc_id);
  for (std::size_t s = 0; s < kNumSubvectors; ++s) sums[s] += doc.subvectors[s];
  if (dense_sum.size() == 0) {
    dense_sum = doc.dense;
  } else {
    dense_sum += doc.dense;
  }
  newest = std::max(newest, doc.timestamp);
}

Eigen::VectorXd Cluster::dense_centroid() const {
  if (members.empty()) return dense_sum;
  return dense_sum / static_cast<double>(members.size());
}

Cluster make_cluster(std::int64_t id, const FeatureBundle& first) {
  Cluster c;
  c.id = id;
  c.newest = first.timestamp;
  c.add(first);
  return c;
}

double dense_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0 || a.size() != b.size()) return 0.0;
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

SimilarityFeatures doc_cluster_features(const FeatureBundle& doc, const Cluster& cluster, double sigma_days) {
  if (cluster.members.empty()) throw std::invalid_argument("doc_cluster_features: empty cluster");
  SimilarityFeatures f{};
  for (std::size_t s = 0; s < kNumSubvectors; ++s) f[s] = sparse_cosine(doc.subvectors[s], cluster.sums[s]);
  f[kDenseFeature] = dense_cosine(doc.dense, cluster.dense_centroid());
  f[kTimeFeature] = time_similarity(doc.timestamp, cluster.newest, sigma_days);
  return f;
}

}  // namespace tdt
