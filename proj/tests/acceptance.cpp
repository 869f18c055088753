// Acceptance suite: one [PASS]/[FAIL] line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "synth.hpp"
#include "tdt/assignment.hpp"
#include "tdt/evaluation.hpp"
#include "tdt/hdbscan.hpp"
#include "tdt/online_pipeline.hpp"
#include "tdt/probe.hpp"
#include "tdt/training.hpp"

using namespace tdt;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the first failure message; later checks still run.
struct Checker {
  Outcome out;
  void require(bool ok, const std::string& what) {
    if (!ok && out.pass) {
      out.pass = false;
      out.detail = what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::vector<int> gold_ids(const Corpus& c) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  for (const auto& d : c.documents) out.push_back(ids.try_emplace(*d.gold_event, static_cast<int>(ids.size())).first->second);
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  Checker c;
  double worst = 0;
  int runs = 0;
  for (auto strategy : {FusionStrategy::A, FusionStrategy::AM, FusionStrategy::CM, FusionStrategy::ACM}) {
    for (auto time : {TimeMethod::SinPE, TimeMethod::LearnPE, TimeMethod::Time2Vec}) {
      for (std::uint64_t seed : {11, 12, 13}) {
        const auto r = gradcheck::check(strategy, time, seed);
        ++runs;
        worst = std::max(worst, r.worst);
        for (const auto& t : r.tensors)
          c.require(t.rel_error <= 1e-4, std::string(to_string(strategy)) + "/" + std::string(to_string(time)) + " " +
                                             t.name + fmt(" rel error %.3g", t.rel_error));
      }
    }
  }
  if (c.out.pass) c.out.detail = fmt("%.0f configurations, worst relative error %.3g (limit 1e-4)", runs, worst);
  return c.out;
}

Outcome metric_oracles() {
  Checker c;
  std::mt19937_64 rng(20240);
  std::uniform_int_distribution<int> size(1, 12);
  double worst = 0;
  auto cmp = [&](double got, double want, const char* name) {
    const double e = std::abs(got - want);
    worst = std::max(worst, e);
    c.require(e <= 1e-12, std::string(name) + fmt(" off by %.3g", e));
  };
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::max(2, size(rng));
    const auto p = synth::random_partition(n, 6, rng);
    const auto g = synth::random_partition(n, 6, rng);
    const auto b = bcubed(p, g);
    const auto ob = oracle::bcubed(p, g);
    cmp(b.precision, ob.p, "bcubed precision");
    cmp(b.recall, ob.r, "bcubed recall");
    cmp(b.f1, ob.f, "bcubed f1");
    const auto e = ceafe(p, g);
    const auto oe = oracle::ceafe(p, g);
    cmp(e.precision, oe.p, "ceafe precision");
    cmp(e.recall, oe.r, "ceafe recall");
    cmp(e.f1, oe.f, "ceafe f1");
    const auto m = muc(p, g);
    const auto om = oracle::muc(p, g);
    cmp(m.precision, om.p, "muc precision");
    cmp(m.recall, om.r, "muc recall");
    cmp(m.f1, om.f, "muc f1");
    cmp(adjusted_rand(p, g), oracle::ari(p, g), "adjusted rand");
    cmp(fowlkes_mallows(p, g), oracle::fowlkes_mallows(p, g), "fowlkes-mallows");
    cmp(v_measure(p, g).v, oracle::v_measure(p, g), "v-measure");
    cmp(adjusted_mutual_info(p, g), oracle::ami(p, g), "adjusted mutual info");
  }
  if (c.out.pass) c.out.detail = fmt("200 partitions, n <= 12, max deviation %.3g (limit 1e-12)", worst);
  return c.out;
}

Outcome hungarian() {
  Checker c;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 7);
  std::uniform_real_distribution<double> w(0, 100);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd cost(dim(rng), dim(rng));
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost(i) = trial % 4 == 0 ? std::floor(w(rng) / 10) : w(rng);
    const double got = min_cost_assignment(cost).total;
    const double want = oracle::exhaustive_min_assignment(cost);
    const double e = std::abs(got - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, e);
    c.require(e <= 1e-12, fmt("%.0fx%.0f instance differs by %.3g", static_cast<double>(cost.rows()),
                              static_cast<double>(cost.cols()), e));
  }
  if (c.out.pass) c.out.detail = fmt("100 instances up to 7x7, max relative deviation %.3g", worst);
  return c.out;
}

Outcome hdbscan_suite() {
  Checker c;
  std::mt19937_64 rng(3);
  auto v2 = [](double x, double y) { return Eigen::Vector2d(x, y).eval(); };
  const auto blobs = synth::gaussian_blobs({v2(0, 0), v2(25, 25)}, 20, 0.6, rng);
  const auto r = hdbscan(blobs, HdbscanParams{.min_cluster_size = 5, .metric = Metric::Euclidean});
  c.require(r.cn == 2 && r.noise == 0, fmt("blobs gave %.0f clusters and %.0f noise", r.cn, r.noise));

  std::uniform_real_distribution<double> u(0, 10);
  std::vector<Eigen::VectorXd> scatter;
  for (int i = 0; i < 10; ++i) scatter.push_back(v2(u(rng), u(rng)));
  const auto s = hdbscan(scatter, HdbscanParams{.min_cluster_size = 8, .metric = Metric::Euclidean});
  c.require(s.cn == 0 && s.noise == 10, fmt("scatter gave %.0f clusters", s.cn));

  std::normal_distribution<double> g;
  for (std::size_t n : {10, 60, 200}) {
    std::vector<Eigen::VectorXd> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(Eigen::Vector3d(g(rng), g(rng), g(rng)));
    const auto d = DistanceMatrixView(pts, Metric::Euclidean).materialize();
    const auto mr = mutual_reachability(d, core_distances(d, 5));
    bool dominates = true;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j)
        if (i != j && mr(i, j) < d(i, j)) dominates = false;
    c.require(dominates, "mutual reachability below base distance");
    double total = 0;
    for (const auto& e : prim_mst(mr)) total += e.weight;
    const double want = oracle::kruskal_weight(mr);
    c.require(std::abs(total - want) <= 1e-9 * std::max(1.0, want), fmt("MST weight %.12g vs %.12g", total, want));
  }
  if (c.out.pass) c.out.detail = "2 blobs -> 2 clusters/0 noise, scatter -> all noise, d_mr >= d, Prim = Kruskal (n <= 200)";
  return c.out;
}

// Six events; two pairs share a topic but are months apart. Returns B-Cubed F1
// of HDBSCAN over held-out embeddings.
double recurring_f1(TimeMethod method, std::uint64_t seed) {
  synth::CorpusOptions o;
  o.seed = 100 + seed;
  o.noise_tag = "a";
  const auto train_corpus = synth::make_corpus(synth::recurring_events(20, 8), o);
  o.seed = 200 + seed;
  o.noise_tag = "b";
  const auto test_corpus = synth::make_corpus(synth::recurring_events(20, 8), o);

  FusionModelConfig mc;
  mc.strategy = FusionStrategy::CM;
  mc.time.method = method;
  mc.time.d_model = 64;
  mc.time.granularity = Granularity::Weekly;
  mc.vocab_buckets = 4096;
  mc.seed = seed;
  mc.epoch = o.base;
  auto model = make_fusion_model(mc);
  TrainConfig tc;
  tc.epochs = 5;
  tc.learning_rate = 1e-3;
  tc.seed = seed;
  train(model, train_corpus, tc);

  std::vector<Eigen::VectorXd> emb;
  for (const auto& d : test_corpus.documents) emb.push_back(embed(model, d));
  const auto h = hdbscan(emb, HdbscanParams{});
  return bcubed(h.expanded, gold_ids(test_corpus)).f1;
}

Outcome recurring() {
  Checker c;
  std::string detail = "B-Cubed F1 time-aware / text-only:";
  for (std::uint64_t seed : {0, 1, 2}) {
    const double aware = recurring_f1(TimeMethod::SinPE, seed);
    const double text = recurring_f1(TimeMethod::Disabled, seed);
    detail += fmt(" %.3f/%.3f", aware, text);
    c.require(aware >= 0.95, fmt("seed %.0f: time-aware F1 %.4f < 0.95", static_cast<double>(seed), aware));
    c.require(text <= 0.75, fmt("seed %.0f: text-only F1 %.4f > 0.75", static_cast<double>(seed), text));
  }
  if (c.out.pass) c.out.detail = detail + " (limits >= 0.95 / <= 0.75)";
  return c.out;
}

Outcome probe_decay() {
  Checker c;
  synth::CorpusOptions o;
  o.seed = 31;
  const auto corpus = synth::make_corpus(synth::distinct_events(4, 8, 20), o);
  FusionModelConfig mc;
  mc.strategy = FusionStrategy::CM;
  mc.time.d_model = 32;
  mc.vocab_buckets = 1024;
  mc.seed = 3;
  mc.epoch = o.base;
  auto model = make_fusion_model(mc);
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 3;
  train(model, corpus, tc);
  std::vector<int> offsets(1001);
  std::iota(offsets.begin(), offsets.end(), 0);
  const auto pts = probe_similarity(model, corpus.documents.front(), offsets);
  double near = 0, far = 0;
  for (const auto& p : pts) {
    if (p.offset_days <= 100) near += p.cosine / 101.0;
    if (p.offset_days >= 500) far += p.cosine / 501.0;
  }
  c.require(std::abs(pts[0].cosine - 1.0) <= 1e-12, fmt("offset 0 cosine %.17g", pts[0].cosine));
  c.require(far < near, fmt("mean cosine [500,1000] %.4f not below [0,100] %.4f", far, near));

  mc.time.method = TimeMethod::Time2Vec;
  auto t2v = make_fusion_model(mc);
  t2v.t2v_omega.setConstant(2 * std::acos(-1.0) / 365.0);
  t2v.t2v_omega(0, 0) = 0.0;
  const auto periodic = probe_similarity(t2v, corpus.documents.front(), {180, 365});
  c.require(periodic[1].cosine > periodic[0].cosine,
            fmt("Time2Vec cosine at 365 (%.4f) not above 180 (%.4f)", periodic[1].cosine, periodic[0].cosine));
  if (c.out.pass)
    c.out.detail = fmt("SinPE mean cosine [0,100] %.4f > [500,1000] %.4f; Time2Vec 365d %.4f", near, far, periodic[1].cosine) +
                   fmt(" > 180d %.4f", periodic[0].cosine);
  return c.out;
}

Outcome online_oracle() {
  Checker c;
  synth::CorpusOptions o;
  o.seed = 41;
  const auto events = synth::distinct_events(20, 15, 10, 2.0);
  const auto train_corpus = sort_chronological(synth::make_corpus(events, o));
  o.seed = 42;
  o.noise_tag = "b";
  o.id_prefix = "t";
  const auto test_corpus = sort_chronological(synth::make_corpus(events, o));
  const auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(train_corpus));
  FusionModelConfig mc;
  mc.backend = BackendKind::HashedRandom;
  mc.time.d_model = 32;
  mc.epoch = o.base;
  const auto encoder = std::make_shared<const FusionModel>(make_fusion_model(mc));

  // gold-oracle scoring
  std::map<std::string, std::string> event_of;
  for (const auto& d : test_corpus.documents) event_of[d.id] = *d.gold_event;
  auto head_event = [&](const Cluster& cl) { return event_of.at(cl.members.front()); };
  OnlinePipeline oracle_pipe(
      vocab, encoder,
      [&](const FeatureBundle& d, const Cluster& cl, const SimilarityFeatures&) {
        return event_of.at(d.doc_id) == head_event(cl) ? 1.0 : 0.0;
      },
      [&](const FeatureBundle& d, const Cluster& cl, const SimilarityFeatures&) { return event_of.at(d.doc_id) != head_event(cl); });
  std::vector<int> pred;
  for (const auto& ev : oracle_pipe.process_stream(test_corpus.documents)) pred.push_back(static_cast<int>(ev.cluster_id));
  const auto gold = gold_ids(test_corpus);
  const double oracle_f1 = bcubed(pred, gold).f1;
  c.require(oracle_f1 == 1.0, fmt("gold-oracle stream F1 %.17g", oracle_f1));

  // trained ranker and creation model
  std::vector<FeatureBundle> stream;
  std::vector<std::string> labels;
  for (const auto& d : train_corpus.documents) {
    stream.push_back(make_bundle(d, *vocab, encoder.get()));
    labels.push_back(*d.gold_event);
  }
  const auto ranker = train_ranker(make_ranker_examples(stream, labels));
  const auto ex = make_creation_examples(stream, labels, make_scorer(ranker.model), 5);
  std::size_t pos = 0, neg = 0;
  for (const auto& e : ex.examples) (e.label == 1 ? pos : neg) += 1;
  c.require(!ex.single_class && pos == neg, fmt("balanced examples %.0f positive / %.0f negative", pos, neg));
  const auto creator = train_creation_model(ex.examples);
  OnlinePipeline pipe(vocab, encoder, make_scorer(ranker.model), make_decider(creator.model));
  pred.clear();
  for (const auto& ev : pipe.process_stream(test_corpus.documents)) pred.push_back(static_cast<int>(ev.cluster_id));
  const double trained_f1 = bcubed(pred, gold).f1;
  c.require(trained_f1 >= 0.9, fmt("trained stream F1 %.4f < 0.9", trained_f1));
  if (c.out.pass)
    c.out.detail = fmt("oracle F1 %.4f; trained F1 %.4f on %.0f docs / 20 events", oracle_f1, trained_f1,
                       static_cast<double>(test_corpus.documents.size())) +
                   fmt("; balanced %.0f/%.0f", pos, neg);
  return c.out;
}

Outcome mining() {
  Checker c;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> classes(2, 5), size(4, 24);
  const std::pair<MiningRegime, std::pair<bool, bool>> regimes[] = {
      {MiningRegime::BatchHard, {true, true}},
      {MiningRegime::EPEN, {false, false}},
      {MiningRegime::EPHN, {false, true}},
      {MiningRegime::HPEN, {true, false}},
  };
  for (int batch = 0; batch < 100; ++batch) {
    const int n = size(rng), k = classes(rng);
    std::vector<Eigen::VectorXd> emb;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      emb.push_back(Eigen::VectorXd::NullaryExpr(6, [&] { return g(rng); }));
      labels.push_back(std::uniform_int_distribution<int>(0, k - 1)(rng));
    }
    for (const auto& [regime, flags] : regimes) {
      const auto got = mine_batch(emb, labels, regime, 0.5);
      const auto want = oracle::extreme_triplets(emb, labels, flags.first, flags.second);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i)
        same = got[i].anchor == want[i].a && got[i].positive == want[i].p && got[i].negative == want[i].n;
      c.require(same, std::string(to_string(regime)) + fmt(" differs from brute force on batch %.0f", batch));
    }
    std::map<int, std::size_t> count;
    for (int l : labels) ++count[l];
    std::size_t expected = 0;
    for (const auto& [l, m] : count) expected += m * (m - 1) * (static_cast<std::size_t>(n) - m);
    const auto all = mine_batch(emb, labels, MiningRegime::BatchAll, 0.5).size();
    c.require(all == expected, fmt("BatchAll gave %.0f triplets, formula %.0f", all, expected));
  }
  if (c.out.pass) c.out.detail = "100 batches: hardest/easiest selections match brute force; BatchAll = sum m(m-1)(n-m)";
  return c.out;
}

Outcome determinism() {
  Checker c;
  synth::CorpusOptions o;
  o.seed = 8;
  const auto corpus = synth::make_corpus(synth::distinct_events(8, 8, 15), o);
  FusionModelConfig mc;
  mc.time.d_model = 16;
  mc.vocab_buckets = 512;
  mc.seed = 21;
  mc.epoch = o.base;
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 21;
  auto m1 = make_fusion_model(mc);
  auto m2 = make_fusion_model(mc);
  const auto h1 = train(m1, corpus, tc).history;
  const auto h2 = train(m2, corpus, tc).history;
  bool identical = h1.size() == h2.size();
  for (std::size_t i = 0; identical && i < h1.size(); ++i) identical = h1[i].loss == h2[i].loss;
  c.require(identical && !h1.empty(), "loss histories differ between identical runs");

  const auto path = std::filesystem::temp_directory_path() / "tdt_acceptance_model.bin";
  save_model(m1, path);
  const auto loaded = load_model(path);
  std::filesystem::remove(path);
  bool bitwise = true;
  for (const auto& d : corpus.documents) bitwise = bitwise && embed(m1, d) == embed(loaded, d);
  c.require(bitwise, "reloaded model gives different embeddings");

  const auto stream = sort_chronological(corpus);
  const auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(stream));
  OnlineModels om;
  om.ranker.weights.fill(1.0);
  om.creation.weights[subvector_slot(Channel::Tokens, Section::All)] = -12.0;
  om.creation.bias = 3.0;
  auto make = [&] { return OnlinePipeline(vocab, nullptr, make_scorer(om.ranker), make_decider(om.creation)); };
  auto full = make();
  const auto expected = full.process_stream(stream.documents);
  auto first = make();
  const std::size_t cut = stream.documents.size() / 2;
  for (std::size_t i = 0; i < cut; ++i) first.process(stream.documents[i]);
  const auto snap = std::filesystem::temp_directory_path() / "tdt_acceptance_pool.json";
  save_pool(first.pool(), snap);
  auto resumed = make();
  resumed.pool() = load_pool(snap);
  std::filesystem::remove(snap);
  bool same = true;
  for (std::size_t i = cut; i < stream.documents.size(); ++i) {
    const auto ev = resumed.process(stream.documents[i]);
    same = same && ev.cluster_id == expected[i].cluster_id && ev.created == expected[i].created;
  }
  c.require(same && pool_to_json(resumed.pool()) == pool_to_json(full.pool()), "resumed stream diverges");
  if (c.out.pass)
    c.out.detail = fmt("%.0f-step loss histories identical; reload bit-exact; resume at doc %.0f matches", h1.size(),
                       static_cast<double>(cut));
  return c.out;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gradient correctness", gradients},
      {"metric oracle suite", metric_oracles},
      {"hungarian vs exhaustive search", hungarian},
      {"hdbscan behaviour", hdbscan_suite},
      {"recurring-event separation", recurring},
      {"probe decay", probe_decay},
      {"online pipeline oracle", online_oracle},
      {"mining vs brute force", mining},
      {"determinism and persistence", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = Outcome{false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
