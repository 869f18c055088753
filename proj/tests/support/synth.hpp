#pragma once

// Synthetic corpora and point sets shared by the unit tests and the acceptance suite.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tdt/corpus.hpp"

namespace synth {

struct EventSpec {
  std::string name;
  int topic = 0;         // events with the same topic draw from the same word list
  double day = 0.0;      // centre, in days after the base date
  int docs = 8;
  double spread_days = 3.0;
};

struct CorpusOptions {
  tdt::Timestamp base = tdt::Timestamp{1356998400};  // 2013-01-01
  int topic_vocab = 12;
  int topic_words = 10;  // per document
  int noise_words = 6;
  int noise_vocab = 400;
  std::string noise_tag = "a";  // different tags give disjoint noise vocabularies
  std::string id_prefix = "d";
  bool entities = true;
  std::uint64_t seed = 0;
};

std::string topic_word(int topic, int k);

/// Documents of each event in generation order (not sorted by time).
tdt::Corpus make_corpus(const std::vector<EventSpec>& events, const CorpusOptions& options);

/// `n_events` distinct topics spaced `gap_days` apart.
std::vector<EventSpec> distinct_events(int n_events, int docs_per_event, double gap_days, double spread_days = 2.0);

/// Two recurring pairs (same topic, >= 120 days apart) plus two one-off events.
std::vector<EventSpec> recurring_events(int recurring_docs, int unique_docs);

std::vector<Eigen::VectorXd> gaussian_blobs(const std::vector<Eigen::VectorXd>& centres, int per_blob, double spread,
                                            std::mt19937_64& rng);

std::vector<int> random_partition(int n, int max_clusters, std::mt19937_64& rng);

}  // namespace synth
