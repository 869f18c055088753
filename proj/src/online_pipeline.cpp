#include "tdt/online_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tdt/io_util.hpp"

namespace tdt {

std::int64_t ClusterPool::create(const FeatureBundle& doc) {
  const std::int64_t id = next_id++;
  clusters.emplace(id, make_cluster(id, doc));
  return id;
}

void ClusterPool::merge(std::int64_t id, const FeatureBundle& doc) {
  auto it = clusters.find(id);
  if (it == clusters.end()) throw Error("no cluster with id " + std::to_string(id));
  it->second.add(doc);
}

double LinearModel::score(const SimilarityFeatures& f) const {
  double s = bias;
  for (std::size_t i = 0; i < kNumFeatures; ++i) s += weights[i] * f[i];
  return s;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double CreationModel::probability(const SimilarityFeatures& f) const { return sigmoid(score(f)); }

ClusterScorer make_scorer(const RankerModel& ranker) {
  return [ranker](const FeatureBundle&, const Cluster&, const SimilarityFeatures& f) { return ranker.score(f); };
}

CreationDecider make_decider(const CreationModel& creator) {
  return [creator](const FeatureBundle&, const Cluster&, const SimilarityFeatures& f) { return creator.creates(f); };
}

std::optional<RankedCluster> rank_clusters(const FeatureBundle& doc, const ClusterPool& pool, const ClusterScorer& scorer,
                                           double sigma_days) {
  std::optional<RankedCluster> best;
  // ascending ids, strict comparison: ties keep the lower id
  for (const auto& [id, cluster] : pool.clusters) {
    const auto f = doc_cluster_features(doc, cluster, sigma_days);
    const double s = scorer(doc, cluster, f);
    if (!best || s > best->score) best = RankedCluster{id, s, f};
  }
  return best;
}

std::optional<RankedCluster> rank_clusters(const FeatureBundle& doc, const ClusterPool& pool, const RankerModel& ranker,
                                           double sigma_days) {
  return rank_clusters(doc, pool, make_scorer(ranker), sigma_days);
}

FeatureBundle make_bundle(const Document& doc, const Vocabulary& vocab, const FusionModel* encoder) {
  FeatureBundle b;
  b.doc_id = doc.id;
  b.subvectors = featurize(doc, vocab);
  b.timestamp = doc.timestamp;
  if (encoder) b.dense = embed(*encoder, doc);
  return b;
}

OnlinePipeline::OnlinePipeline(std::shared_ptr<const Vocabulary> vocab, std::shared_ptr<const FusionModel> encoder,
                               ClusterScorer scorer, CreationDecider decider, double sigma_days)
    : vocab_(std::move(vocab)),
      encoder_(std::move(encoder)),
      scorer_(std::move(scorer)),
      decider_(std::move(decider)),
      sigma_days_(sigma_days) {
  if (!vocab_) throw std::invalid_argument("online pipeline needs a vocabulary");
}

FeatureBundle OnlinePipeline::featurize(const Document& doc) const { return make_bundle(doc, *vocab_, encoder_.get()); }

AssignmentEvent OnlinePipeline::process(const Document& doc) {
  if (pool_.last_timestamp && doc.timestamp < *pool_.last_timestamp)
    throw Error("document " + doc.id + " is older than the previous document (" + format_iso8601(doc.timestamp) + " < " +
                format_iso8601(*pool_.last_timestamp) + ")");
  return process(featurize(doc));
}

AssignmentEvent OnlinePipeline::process(const FeatureBundle& doc) {
  if (pool_.last_timestamp && doc.timestamp < *pool_.last_timestamp)
    throw Error("document " + doc.doc_id + " arrived out of timestamp order");
  AssignmentEvent ev{doc.doc_id, 0, false};
  const auto best = rank_clusters(doc, pool_, scorer_, sigma_days_);
  if (!best || decider_(doc, pool_.clusters.at(best->cluster_id), best->features)) {
    ev.cluster_id = pool_.create(doc);
    ev.created = true;
  } else {
    ev.cluster_id = best->cluster_id;
    pool_.merge(best->cluster_id, doc);
  }
  pool_.last_timestamp = doc.timestamp;
  ++pool_.processed;
  return ev;
}

std::vector<AssignmentEvent> OnlinePipeline::process_stream(const std::vector<Document>& docs) {
  std::vector<AssignmentEvent> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(process(d));
  return out;
}

nlohmann::json pool_to_json(const ClusterPool& pool) {
  nlohmann::json j;
  j["next_id"] = pool.next_id;
  j["processed"] = pool.processed;
  j["last_timestamp"] = pool.last_timestamp ? nlohmann::json(pool.last_timestamp->seconds) : nlohmann::json();
  auto& arr = j["clusters"] = nlohmann::json::array();
  for (const auto& [id, c] : pool.clusters) {
    nlohmann::json cj;
    cj["id"] = id;
    cj["members"] = c.members;
    cj["newest"] = c.newest.seconds;
    cj["dense_sum"] = std::vector<double>(c.dense_sum.data(), c.dense_sum.data() + c.dense_sum.size());
    auto& sums = cj["sums"] = nlohmann::json::array();
    for (const auto& s : c.sums) {
      auto entries = nlohmann::json::array();
      for (const auto& [idx, w] : s.entries()) entries.push_back({idx, w});
      sums.push_back(std::move(entries));
    }
    arr.push_back(std::move(cj));
  }
  return j;
}

ClusterPool pool_from_json(const nlohmann::json& j) {
  try {
    ClusterPool pool;
    pool.next_id = j.at("next_id").get<std::int64_t>();
    pool.processed = j.at("processed").get<std::size_t>();
    if (!j.at("last_timestamp").is_null()) pool.last_timestamp = Timestamp{j["last_timestamp"].get<std::int64_t>()};
    for (const auto& cj : j.at("clusters")) {
      Cluster c;
      c.id = cj.at("id").get<std::int64_t>();
      if (c.id >= pool.next_id) throw FormatError("cluster id " + std::to_string(c.id) + " not below next_id");
      c.members = cj.at("members").get<std::vector<std::string>>();
      if (c.members.empty()) throw FormatError("cluster " + std::to_string(c.id) + " has no members");
      c.newest = Timestamp{cj.at("newest").get<std::int64_t>()};
      const auto dense = cj.at("dense_sum").get<std::vector<double>>();
      c.dense_sum = Eigen::Map<const Eigen::VectorXd>(dense.data(), static_cast<Eigen::Index>(dense.size()));
      const auto& sums = cj.at("sums");
      if (sums.size() != kNumSubvectors) throw FormatError("cluster sums must have 9 subvectors");
      for (std::size_t s = 0; s < kNumSubvectors; ++s) {
        std::vector<SparseVector::Entry> entries;
        for (const auto& e : sums[s]) entries.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
        c.sums[s] = SparseVector(std::move(entries));
      }
      if (!pool.clusters.emplace(c.id, std::move(c)).second) throw FormatError("duplicate cluster id in snapshot");
    }
    return pool;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed pool snapshot: ") + e.what());
  }
}

void save_pool(const ClusterPool& pool, const std::filesystem::path& path) {
  write_file_atomic(path, pool_to_json(pool).dump());
}

ClusterPool load_pool(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return pool_from_json(j);
}

std::string assignment_line(const AssignmentEvent& e) {
  return nlohmann::json{{"doc_id", e.doc_id}, {"cluster_id", e.cluster_id}, {"created", e.created}}.dump();
}

namespace {

void check_replay(const std::vector<FeatureBundle>& stream, const std::vector<std::string>& gold) {
  if (stream.size() != gold.size()) throw std::invalid_argument("one gold label per document required");
  for (std::size_t i = 1; i < stream.size(); ++i)
    if (stream[i].timestamp < stream[i - 1].timestamp) throw std::invalid_argument("replay stream is not chronological");
}

// Pool indexed by gold event, plus the event of each cluster id.
struct GoldReplay {
  ClusterPool pool;
  std::map<std::string, std::int64_t> cluster_of;

  void add(const FeatureBundle& doc, const std::string& event) {
    if (auto it = cluster_of.find(event); it != cluster_of.end()) {
      pool.merge(it->second, doc);
    } else {
      cluster_of[event] = pool.create(doc);
    }
    pool.last_timestamp = doc.timestamp;
    ++pool.processed;
  }
};

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto k = static_cast<std::size_t>(std::max(1, folds));
  std::vector<std::vector<std::size_t>> out(std::min(k, n));
  for (std::size_t i = 0; i < n; ++i) out[i % out.size()].push_back(order[i]);
  return out;
}

template <class T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& items, const std::vector<std::size_t>& held_out) {
  std::vector<bool> held(items.size(), false);
  for (auto i : held_out) held[i] = true;
  std::vector<T> train, test;
  for (std::size_t i = 0; i < items.size(); ++i) (held[i] ? test : train).push_back(items[i]);
  return {std::move(train), std::move(test)};
}

}  // namespace

std::vector<RankerPair> make_ranker_examples(const std::vector<FeatureBundle>& stream, const std::vector<std::string>& gold,
                                             double sigma_days) {
  check_replay(stream, gold);
  GoldReplay replay;
  std::vector<RankerPair> pairs;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    auto it = replay.cluster_of.find(gold[i]);
    if (it != replay.cluster_of.end()) {
      const auto pos = doc_cluster_features(stream[i], replay.pool.clusters.at(it->second), sigma_days);
      for (const auto& [id, c] : replay.pool.clusters) {
        if (id == it->second) continue;
        pairs.push_back(RankerPair{pos, doc_cluster_features(stream[i], c, sigma_days)});
      }
    }
    replay.add(stream[i], gold[i]);
  }
  return pairs;
}

CreationExamples make_creation_examples(const std::vector<FeatureBundle>& stream, const std::vector<std::string>& gold,
                                        const ClusterScorer& scorer, std::uint64_t seed, double sigma_days) {
  check_replay(stream, gold);
  GoldReplay replay;
  std::vector<CreationExample> all;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (const auto best = rank_clusters(stream[i], replay.pool, scorer, sigma_days))
      all.push_back(CreationExample{best->features, replay.cluster_of.count(gold[i]) ? 0 : 1});
    replay.add(stream[i], gold[i]);
  }

  CreationExamples out;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < all.size(); ++i) (all[i].label == 1 ? pos : neg).push_back(i);
  out.positives = pos.size();
  out.negatives = neg.size();
  if (pos.empty() || neg.empty()) {
    out.single_class = true;
    out.examples = std::move(all);
    return out;
  }
  auto& major = pos.size() > neg.size() ? pos : neg;
  const auto keep = std::min(pos.size(), neg.size());
  std::mt19937_64 rng(seed);
  std::shuffle(major.begin(), major.end(), rng);
  major.resize(keep);
  std::vector<std::size_t> kept(pos);
  kept.insert(kept.end(), neg.begin(), neg.end());
  std::sort(kept.begin(), kept.end());
  for (auto i : kept) out.examples.push_back(all[i]);
  return out;
}

double ranker_loss(const LinearModel& model, const std::vector<RankerPair>& pairs, double margin) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) total += std::max(0.0, margin - (model.score(p.positive) - model.score(p.negative)));
  return total / static_cast<double>(pairs.size());
}

double ranker_accuracy(const LinearModel& model, const std::vector<RankerPair>& pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& p : pairs) ok += model.score(p.positive) > model.score(p.negative) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

RankerModel fit_ranker(const std::vector<RankerPair>& pairs, double margin, double learning_rate, int epochs,
                       std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("cannot train a ranker without pairs");
  RankerModel m;
  m.margin = margin;
  m.learning_rate = learning_rate;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, 0.01);
  for (auto& w : m.weights) w = init(rng);
  const double n = static_cast<double>(pairs.size());
  for (int e = 0; e < epochs; ++e) {
    std::array<double, kNumFeatures> grad{};
    bool active = false;
    for (const auto& p : pairs) {
      if (margin - (m.score(p.positive) - m.score(p.negative)) <= 0.0) continue;
      active = true;
      for (std::size_t i = 0; i < kNumFeatures; ++i) grad[i] -= (p.positive[i] - p.negative[i]) / n;
    }
    if (!active) break;
    for (std::size_t i = 0; i < kNumFeatures; ++i) m.weights[i] -= learning_rate * grad[i];
  }
  // the bias cancels in every pair; it only matters for reporting raw scores
  m.bias = 0.0;
  return m;
}

RankerTrainResult train_ranker(const std::vector<RankerPair>& pairs, const RankerTrainConfig& config) {
  if (pairs.empty()) throw std::invalid_argument("cannot train a ranker without pairs");
  if (config.margins.empty() || config.learning_rates.empty()) throw std::invalid_argument("empty hyperparameter grid");
  const auto folds = make_folds(pairs.size(), config.folds, config.seed);
  double best_acc = -1.0, best_margin = config.margins.front(), best_lr = config.learning_rates.front();
  for (double margin : config.margins) {
    for (double lr : config.learning_rates) {
      double acc = 0.0;
      if (folds.size() < 2) {
        acc = ranker_accuracy(fit_ranker(pairs, margin, lr, config.epochs, config.seed), pairs);
      } else {
        for (const auto& held : folds) {
          auto [train, test] = split(pairs, held);
          acc += ranker_accuracy(fit_ranker(train, margin, lr, config.epochs, config.seed), test);
        }
        acc /= static_cast<double>(folds.size());
      }
      if (acc > best_acc) {
        best_acc = acc;
        best_margin = margin;
        best_lr = lr;
      }
    }
  }
  RankerTrainResult r;
  r.model = fit_ranker(pairs, best_margin, best_lr, config.epochs, config.seed);
  r.cv_accuracy = best_acc;
  r.train_loss = ranker_loss(r.model, pairs, best_margin);
  r.train_accuracy = ranker_accuracy(r.model, pairs);
  return r;
}

double creation_log_loss(const CreationModel& model, const std::vector<CreationExample>& examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : examples) {
    const double z = model.score(e.features);
    // log(1 + exp(-z)) for label 1, log(1 + exp(z)) for label 0
    const double s = e.label == 1 ? -z : z;
    total += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  }
  return total / static_cast<double>(examples.size());
}

double creation_accuracy(const CreationModel& model, const std::vector<CreationExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& e : examples) ok += (model.creates(e.features) ? 1 : 0) == e.label ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(examples.size());
}

namespace {

void check_classes(const std::vector<CreationExample>& examples) {
  bool pos = false, neg = false;
  for (const auto& e : examples) (e.label == 1 ? pos : neg) = true;
  if (!pos || !neg) throw std::invalid_argument("creation model needs both classes");
}

}  // namespace

CreationModel fit_creation_model(const std::vector<CreationExample>& examples, double learning_rate, int epochs) {
  check_classes(examples);
  CreationModel m;
  m.learning_rate = learning_rate;
  const double n = static_cast<double>(examples.size());
  for (int e = 0; e < epochs; ++e) {
    std::array<double, kNumFeatures> grad{};
    double grad_b = 0.0;
    for (const auto& ex : examples) {
      const double r = (m.probability(ex.features) - ex.label) / n;
      for (std::size_t i = 0; i < kNumFeatures; ++i) grad[i] += r * ex.features[i];
      grad_b += r;
    }
    for (std::size_t i = 0; i < kNumFeatures; ++i) m.weights[i] -= learning_rate * grad[i];
    m.bias -= learning_rate * grad_b;
  }
  return m;
}

CreationTrainResult train_creation_model(const std::vector<CreationExample>& examples, const CreationTrainConfig& config) {
  check_classes(examples);
  if (config.learning_rates.empty()) throw std::invalid_argument("empty learning-rate grid");
  const auto folds = make_folds(examples.size(), config.folds, config.seed);
  double best_loss = std::numeric_limits<double>::infinity(), best_lr = config.learning_rates.front();
  for (double lr : config.learning_rates) {
    double loss = 0.0;
    int used = 0;
    for (const auto& held : folds) {
      auto [train, test] = split(examples, held);
      bool pos = false, neg = false;
      for (const auto& e : train) (e.label == 1 ? pos : neg) = true;
      if (!pos || !neg || test.empty()) continue;
      loss += creation_log_loss(fit_creation_model(train, lr, config.epochs), test);
      ++used;
    }
    loss = used > 0 ? loss / used : creation_log_loss(fit_creation_model(examples, lr, config.epochs), examples);
    if (loss < best_loss) {
      best_loss = loss;
      best_lr = lr;
    }
  }
  CreationTrainResult r;
  r.model = fit_creation_model(examples, best_lr, config.epochs);
  r.cv_log_loss = best_loss;
  r.train_accuracy = creation_accuracy(r.model, examples);
  return r;
}

nlohmann::json models_to_json(const OnlineModels& m) {
  nlohmann::json j;
  j["sigma_days"] = m.sigma_days;
  j["ranker"] = {{"weights", m.ranker.weights},
                 {"bias", m.ranker.bias},
                 {"margin", m.ranker.margin},
                 {"learning_rate", m.ranker.learning_rate}};
  j["creation"] = {{"weights", m.creation.weights},
                   {"bias", m.creation.bias},
                   {"threshold", m.creation.threshold},
                   {"learning_rate", m.creation.learning_rate}};
  return j;
}

OnlineModels models_from_json(const nlohmann::json& j) {
  try {
    OnlineModels m;
    m.sigma_days = j.at("sigma_days").get<double>();
    const auto& r = j.at("ranker");
    m.ranker.weights = r.at("weights").get<std::array<double, kNumFeatures>>();
    m.ranker.bias = r.at("bias").get<double>();
    m.ranker.margin = r.at("margin").get<double>();
    m.ranker.learning_rate = r.at("learning_rate").get<double>();
    const auto& c = j.at("creation");
    m.creation.weights = c.at("weights").get<std::array<double, kNumFeatures>>();
    m.creation.bias = c.at("bias").get<double>();
    m.creation.threshold = c.at("threshold").get<double>();
    m.creation.learning_rate = c.at("learning_rate").get<double>();
    auto finite = [](const LinearModel& lm) {
      return std::isfinite(lm.bias) && std::all_of(lm.weights.begin(), lm.weights.end(), [](double w) { return std::isfinite(w); });
    };
    if (!finite(m.ranker) || !finite(m.creation)) throw FormatError("online model weights must be finite");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed online model: ") + e.what());
  }
}

void save_online_models(const OnlineModels& m, const std::filesystem::path& path) {
  write_file_atomic(path, models_to_json(m).dump(2));
}

OnlineModels load_online_models(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return models_from_json(j);
}

}  // namespace tdt
