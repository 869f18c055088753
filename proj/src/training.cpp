#include "tdt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tdt {

double cosine_sim(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_sim: size mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine_sim: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

double triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                    const Eigen::VectorXd& negative, double margin) {
  return std::max(0.0, cosine_sim(anchor, negative) - cosine_sim(anchor, positive) + margin);
}

MiningRegime parse_mining_regime(std::string_view name) {
  static const std::map<std::string_view, MiningRegime> kNames = {
      {"BatchHard", MiningRegime::BatchHard},
      {"BatchAll", MiningRegime::BatchAll},
      {"BatchSemiHard", MiningRegime::BatchSemiHard},
      {"BatchHardSoftMargin", MiningRegime::BatchHardSoftMargin},
      {"EPEN", MiningRegime::EPEN},
      {"EPHN", MiningRegime::EPHN},
      {"HPEN", MiningRegime::HPEN},
      {"HPHN", MiningRegime::HPHN},
  };
  auto it = kNames.find(name);
  if (it == kNames.end()) throw std::invalid_argument("unknown mining regime '" + std::string(name) + "'");
  return it->second;
}

std::string_view to_string(MiningRegime m) {
  switch (m) {
    case MiningRegime::BatchHard: return "BatchHard";
    case MiningRegime::BatchAll: return "BatchAll";
    case MiningRegime::BatchSemiHard: return "BatchSemiHard";
    case MiningRegime::BatchHardSoftMargin: return "BatchHardSoftMargin";
    case MiningRegime::EPEN: return "EPEN";
    case MiningRegime::EPHN: return "EPHN";
    case MiningRegime::HPEN: return "HPEN";
    case MiningRegime::HPHN: return "HPHN";
  }
  return "?";
}

bool is_offline(MiningRegime m) {
  return m == MiningRegime::EPEN || m == MiningRegime::EPHN || m == MiningRegime::HPEN || m == MiningRegime::HPHN;
}

namespace {

Eigen::MatrixXd similarity_matrix(const std::vector<Eigen::VectorXd>& emb) {
  const auto n = static_cast<Eigen::Index>(emb.size());
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      s(i, j) = s(j, i) = cosine_sim(emb[static_cast<std::size_t>(i)], emb[static_cast<std::size_t>(j)]);
    }
  }
  return s;
}

// Lowest index wins ties: only strictly better candidates replace the current pick.
std::size_t pick(const Eigen::MatrixXd& s, std::size_t a, const std::vector<std::size_t>& cands, bool most_similar) {
  std::size_t best = cands.front();
  for (std::size_t c : cands) {
    const double v = s(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
    const double b = s(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(best));
    if (most_similar ? v > b : v < b) best = c;
  }
  return best;
}

}  // namespace

std::vector<Triplet> mine_batch(const std::vector<Eigen::VectorXd>& embeddings, const std::vector<int>& labels,
                                MiningRegime regime, double margin) {
  if (embeddings.size() != labels.size()) throw std::invalid_argument("mine_batch: labels/embeddings mismatch");
  const Eigen::MatrixXd s = similarity_matrix(embeddings);
  const std::size_t n = embeddings.size();
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? pos : neg).push_back(j);
    }
    if (pos.empty() || neg.empty()) continue;
    const auto ai = static_cast<Eigen::Index>(a);
    switch (regime) {
      case MiningRegime::BatchHard:
      case MiningRegime::BatchHardSoftMargin:
      case MiningRegime::HPHN: out.push_back({a, pick(s, a, pos, false), pick(s, a, neg, true)}); break;
      case MiningRegime::EPEN: out.push_back({a, pick(s, a, pos, true), pick(s, a, neg, false)}); break;
      case MiningRegime::EPHN: out.push_back({a, pick(s, a, pos, true), pick(s, a, neg, true)}); break;
      case MiningRegime::HPEN: out.push_back({a, pick(s, a, pos, false), pick(s, a, neg, false)}); break;
      case MiningRegime::BatchAll:
        for (std::size_t p : pos) {
          for (std::size_t q : neg) out.push_back({a, p, q});
        }
        break;
      case MiningRegime::BatchSemiHard:
        for (std::size_t p : pos) {
          const double sap = s(ai, static_cast<Eigen::Index>(p));
          std::vector<std::size_t> semi;
          for (std::size_t q : neg) {
            const double san = s(ai, static_cast<Eigen::Index>(q));
            if (san < sap && san - sap + margin > 0.0) semi.push_back(q);
          }
          if (!semi.empty()) out.push_back({a, p, pick(s, a, semi, true)});
        }
        break;
    }
  }
  return out;
}

double triplet_batch_loss(const std::vector<Eigen::VectorXd>& embeddings, const std::vector<Triplet>& triplets,
                          double margin, bool soft_margin, std::vector<Eigen::VectorXd>* grads) {
  if (grads) {
    grads->assign(embeddings.size(), Eigen::VectorXd::Zero(embeddings.empty() ? 0 : embeddings[0].size()));
  }
  if (triplets.empty()) return 0.0;
  const double inv_count = 1.0 / static_cast<double>(triplets.size());
  // d cos(x, y) / dx = y / (|x||y|) - cos * x / |x|^2
  const auto add_cos_grad = [&](std::size_t x, std::size_t y, double cos, double g) {
    const auto& ex = embeddings[x];
    const auto& ey = embeddings[y];
    const double nx = ex.norm();
    const double ny = ey.norm();
    (*grads)[x] += g * (ey / (nx * ny) - cos * ex / (nx * nx));
    (*grads)[y] += g * (ex / (nx * ny) - cos * ey / (ny * ny));
  };
  double total = 0.0;
  for (const auto& t : triplets) {
    const double sap = cosine_sim(embeddings[t.anchor], embeddings[t.positive]);
    const double san = cosine_sim(embeddings[t.anchor], embeddings[t.negative]);
    double coef = 0.0;  // d(loss_t)/d(san); d/d(sap) is its negation
    if (soft_margin) {
      const double z = san - sap;
      total += z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      coef = 1.0 / (1.0 + std::exp(-z));
    } else {
      const double v = san - sap + margin;
      if (v > 0.0) {
        total += v;
        coef = 1.0;
      }
    }
    if (grads && coef != 0.0) {
      add_cos_grad(t.anchor, t.negative, san, coef * inv_count);
      add_cos_grad(t.anchor, t.positive, sap, -coef * inv_count);
    }
  }
  return total * inv_count;
}

void TrainConfig::validate() const {
  const bool hinge = mining != MiningRegime::BatchHardSoftMargin;
  if (hinge && margin < 0.0) throw std::invalid_argument("margin must be non-negative");
  if (batch_events < 2) throw std::invalid_argument("batch_events must be >= 2");
  if (docs_per_event < 2) throw std::invalid_argument("docs_per_event must be >= 2");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

void Adam::step(std::vector<ParamRef>& params, const ParamGrads& grads) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto update_row = [&](std::size_t k, Eigen::Index r, const Eigen::Ref<const Eigen::RowVectorXd>& g) {
    auto m = m_[k].row(r);
    auto v = v_[k].row(r);
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    params[k].value->row(r).array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& g = grads[k];
    if (g.row_sparse) {
      for (const auto& [r, gr] : g.rows) update_row(k, r, gr);
    } else {
      for (Eigen::Index r = 0; r < g.dense.rows(); ++r) update_row(k, r, g.dense.row(r));
    }
  }
}

namespace {

struct LabeledCorpus {
  std::vector<int> labels;
  std::vector<std::vector<std::size_t>> members;  // per event
};

LabeledCorpus label_corpus(const Corpus& corpus) {
  if (!corpus.has_labels()) throw std::invalid_argument("training corpus needs gold event labels on every document");
  std::map<std::string, int> ids;
  LabeledCorpus lc;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    auto [it, inserted] = ids.try_emplace(*corpus.documents[i].gold_event, static_cast<int>(ids.size()));
    if (inserted) lc.members.emplace_back();
    lc.labels.push_back(it->second);
    lc.members[static_cast<std::size_t>(it->second)].push_back(i);
  }
  return lc;
}

// One optimisation step over a set of documents and triplets indexing into them.
double train_step(FusionModel& model, const Corpus& corpus, const std::vector<std::size_t>& docs,
                  const std::vector<Triplet>* fixed_triplets, const std::vector<int>& batch_labels,
                  const TrainConfig& config, Adam& adam) {
  std::vector<EmbedTrace> traces(docs.size());
  std::vector<Eigen::VectorXd> emb(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) emb[i] = embed(model, corpus.documents[docs[i]], &traces[i]);
  const std::vector<Triplet> triplets =
      fixed_triplets ? *fixed_triplets : mine_batch(emb, batch_labels, config.mining, config.margin);
  std::vector<Eigen::VectorXd> demb;
  const bool soft = config.mining == MiningRegime::BatchHardSoftMargin;
  const double loss = triplet_batch_loss(emb, triplets, config.margin, soft, &demb);
  if (triplets.empty()) return loss;
  auto params = model.parameters();
  ParamGrads grads = zero_grads(params);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!demb[i].isZero(0.0)) embed_backward(model, traces[i], demb[i], grads);
  }
  adam.step(params, grads);
  return loss;
}

}  // namespace

TrainResult train(FusionModel& model, const Corpus& corpus, const TrainConfig& config) {
  config.validate();
  const LabeledCorpus lc = label_corpus(corpus);
  std::vector<std::size_t> eligible;
  for (std::size_t e = 0; e < lc.members.size(); ++e) {
    if (lc.members[e].size() >= 2) eligible.push_back(e);
  }
  if (eligible.size() < 2) {
    throw std::invalid_argument("batch construction impossible: need >= 2 events with >= 2 documents each");
  }
  std::mt19937_64 rng(config.seed);
  Adam adam(config.learning_rate);
  TrainResult result;
  std::vector<Eigen::MatrixXd> best;
  double best_loss = std::numeric_limits<double>::infinity();
  const std::size_t n_docs = corpus.documents.size();
  const auto batch_docs = static_cast<std::size_t>(config.batch_events * config.docs_per_event);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<double> losses;
    if (!is_offline(config.mining)) {
      const std::size_t n_batches = std::max<std::size_t>(1, (n_docs + batch_docs - 1) / batch_docs);
      std::vector<std::size_t> queue;
      for (std::size_t b = 0; b < n_batches; ++b) {
        std::vector<std::size_t> events;
        const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(config.batch_events), eligible.size());
        while (events.size() < want) {
          if (queue.empty()) {
            queue = eligible;
            std::shuffle(queue.begin(), queue.end(), rng);
          }
          const std::size_t e = queue.back();
          queue.pop_back();
          if (std::find(events.begin(), events.end(), e) == events.end()) events.push_back(e);
        }
        std::vector<std::size_t> docs;
        std::vector<int> labels;
        for (std::size_t e : events) {
          auto members = lc.members[e];
          std::shuffle(members.begin(), members.end(), rng);
          members.resize(std::min(members.size(), static_cast<std::size_t>(config.docs_per_event)));
          for (std::size_t d : members) {
            docs.push_back(d);
            labels.push_back(static_cast<int>(e));
          }
        }
        losses.push_back(train_step(model, corpus, docs, nullptr, labels, config, adam));
      }
    } else {
      std::vector<Eigen::VectorXd> table(n_docs);
      for (std::size_t i = 0; i < n_docs; ++i) table[i] = embed(model, corpus.documents[i]);
      std::vector<Triplet> all = mine_batch(table, lc.labels, config.mining, config.margin);
      std::shuffle(all.begin(), all.end(), rng);
      for (std::size_t start = 0; start < all.size(); start += batch_docs) {
        const std::size_t stop = std::min(all.size(), start + batch_docs);
        // Re-index the batch's triplets onto its distinct documents.
        std::map<std::size_t, std::size_t> local;
        std::vector<std::size_t> docs;
        const auto local_id = [&](std::size_t global) {
          auto [it, inserted] = local.try_emplace(global, docs.size());
          if (inserted) docs.push_back(global);
          return it->second;
        };
        std::vector<Triplet> batch;
        for (std::size_t k = start; k < stop; ++k) {
          batch.push_back({local_id(all[k].anchor), local_id(all[k].positive), local_id(all[k].negative)});
        }
        losses.push_back(train_step(model, corpus, docs, &batch, {}, config, adam));
      }
      if (losses.empty()) losses.push_back(0.0);
    }
    double sum = 0.0;
    for (std::size_t b = 0; b < losses.size(); ++b) {
      result.history.push_back({epoch, static_cast<int>(b), losses[b]});
      sum += losses[b];
    }
    const double mean = sum / static_cast<double>(losses.size());
    result.epoch_means.push_back(mean);
    if (mean < best_loss) {
      best_loss = mean;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : model.parameters()) best.push_back(*p.value);
    }
  }
  auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) *params[k].value = std::move(best[k]);
  return result;
}

std::string loss_history_csv(const TrainResult& result) {
  std::string out = "epoch,batch,loss\n";
  char buf[96];
  for (const auto& h : result.history) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", h.epoch, h.batch, h.loss);
    out += buf;
  }
  return out;
}

}  // namespace tdt
