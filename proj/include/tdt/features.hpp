#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "tdt/corpus.hpp"
#include "tdt/sparse_vector.hpp"

namespace tdt {

enum class Channel : std::uint8_t { Tokens, Lemmas, Entities };
enum class Section : std::uint8_t { Title, Body, All };

inline constexpr std::size_t kNumChannels = 3;
inline constexpr std::size_t kNumSubvectors = 9;
/// Subvector slots, then one dense cosine and one time score.
inline constexpr std::size_t kNumFeatures = kNumSubvectors + 2;
inline constexpr std::size_t kDenseFeature = kNumSubvectors;
inline constexpr std::size_t kTimeFeature = kNumSubvectors + 1;
inline constexpr std::size_t kDefaultMaxTerms = 50000;
inline constexpr double kDefaultSigmaDays = 3.0;

constexpr std::size_t subvector_slot(Channel c, Section s) {
  return static_cast<std::size_t>(c) * 3 + static_cast<std::size_t>(s);
}
std::string subvector_name(std::size_t slot);
std::string_view to_string(Channel c);

using Subvectors = std::array<SparseVector, kNumSubvectors>;
using SimilarityFeatures = std::array<double, kNumFeatures>;

const std::unordered_set<std::string>& default_stop_words();

/// Deterministic suffix stripper standing in for a lemmatizer.
std::string stem(std::string_view word);

struct ChannelVocab {
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::string> terms;
  std::vector<std::uint32_t> df;
  std::vector<double> idf;
};

struct Vocabulary {
  std::size_t num_docs = 0;
  std::array<ChannelVocab, kNumChannels> channels;

  const ChannelVocab& channel(Channel c) const { return channels[static_cast<std::size_t>(c)]; }
};

/// Per channel: document frequencies, idf = ln((N+1)/(df+1)) + 1, stop words
/// removed from tokens and lemmas, truncated to the `max_terms` highest-df terms.
Vocabulary build_vocabulary(const Corpus& corpus, std::size_t max_terms = kDefaultMaxTerms,
                            const std::unordered_set<std::string>& stop_words = default_stop_words());

std::string vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(std::string_view text);
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

/// Nine L2-normalised tf-idf subvectors: {tokens, lemmas, entities} x {title, body, all}.
Subvectors featurize(const Document& doc, const Vocabulary& vocab);

/// exp(-days^2 / (2 sigma^2)), floored at the smallest normal double so it stays in (0, 1].
double time_similarity(Timestamp a, Timestamp b, double sigma_days = kDefaultSigmaDays);

struct FeatureBundle {
  std::string doc_id;
  Subvectors subvectors;
  Eigen::VectorXd dense;
  Timestamp timestamp;
};

/// Event cluster with running sums; centroids are renormalised on read.
struct Cluster {
  std::int64_t id = 0;
  std::vector<std::string> members;
  Subvectors sums;
  Eigen::VectorXd dense_sum;
  Timestamp newest;

  void add(const FeatureBundle& doc);
  SparseVector centroid(std::size_t slot) const { return sums[slot].normalized(); }
  Eigen::VectorXd dense_centroid() const;
};

Cluster make_cluster(std::int64_t id, const FeatureBundle& first);

/// Per-subvector cosines against the cluster centroids, dense cosine against
/// the dense centroid, and time similarity against the newest member.
SimilarityFeatures doc_cluster_features(const FeatureBundle& doc, const Cluster& cluster,
                                        double sigma_days = kDefaultSigmaDays);

/// Dense cosine with the same empty-side convention as the sparse features.
double dense_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace tdt
