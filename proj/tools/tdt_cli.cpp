// tdt: command-line front end for the event-detection engine.
//
// Every subcommand accepts --config FILE, a JSON object whose keys are the
// subcommand's long option names. Config values are applied first and
// command-line flags override them. Unknown keys are rejected.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tdt/corpus.hpp"
#include "tdt/evaluation.hpp"
#include "tdt/features.hpp"
#include "tdt/fusion.hpp"
#include "tdt/hdbscan.hpp"
#include "tdt/io_util.hpp"
#include "tdt/online_pipeline.hpp"
#include "tdt/probe.hpp"
#include "tdt/retro_clustering.hpp"
#include "tdt/text_encoder.hpp"
#include "tdt/training.hpp"

using nlohmann::json;
using namespace tdt;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void log(const std::string& msg) { std::cerr << "tdt: " << msg << '\n'; }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Empty or whitespace-only files give an empty corpus instead of an error.
Corpus load_corpus_or_empty(const std::string& path) {
  const std::string text = read_file(path);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return Corpus{};
  return parse_corpus(text);
}

Corpus load_chronological(const std::string& path, bool sort) {
  Corpus c = load_corpus_or_empty(path);
  if (sort) return sort_chronological(std::move(c));
  if (!is_chronological(c)) throw Error(path + ": documents are not in timestamp order (pass --sort to reorder)");
  return c;
}

std::shared_ptr<const PrecomputedTable> maybe_table(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<const PrecomputedTable>(load_precomputed(path));
}

std::vector<int> gold_labels(const Corpus& c) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  for (const auto& d : c.documents) {
    if (!d.gold_event) throw Error("document '" + d.id + "' has no gold event");
    out.push_back(ids.try_emplace(*d.gold_event, static_cast<int>(ids.size())).first->second);
  }
  return out;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_file_atomic(path, j.dump(2) + "\n");
  }
}

// --- config injection -------------------------------------------------------

std::string config_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return fmt_double(v.get<double>());
  throw UsageError("config values must be strings or numbers (booleans are allowed for flags)");
}

// Turns a config object into arguments placed ahead of the real ones, so that
// later (command-line) occurrences win.
std::vector<std::string> config_args(const CLI::App& sub, const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError(path + ": config must be a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw UsageError(path + ": config files cannot nest");
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt) throw UsageError(path + ": unknown key '" + key + "' for " + sub.get_name());
    if (opt->get_expected_max() == 0) {
      if (!value.is_boolean()) throw UsageError(path + ": '" + key + "' is a flag and needs true or false");
      if (value.get<bool>()) out.push_back("--" + key);
      continue;
    }
    out.push_back("--" + key);
    out.push_back(config_value(value));
  }
  return out;
}

// --- shared option groups ---------------------------------------------------

struct EncoderOptions {
  std::string strategy = "CM";
  std::string time_method = "sinpe";
  std::string granularity = "daily";
  std::string backend = "toy";
  std::string embeddings;
  int d_model = 64;
  int max_position = 4096;
  std::size_t vocab_buckets = 1 << 16;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  int heads = 4;

  void add(CLI::App* app) {
    app->add_option("--strategy", strategy, "Fusion strategy")->check(CLI::IsMember({"A", "AM", "CM", "ACM"}));
    app->add_option("--time-method", time_method, "Time encoding")
        ->check(CLI::IsMember({"sinpe", "learnpe", "time2vec", "none"}));
    app->add_option("--granularity", granularity, "Timestep width")
        ->check(CLI::IsMember({"hourly", "daily", "bidaily", "weekly", "monthly"}));
    app->add_option("--backend", backend, "Token encoder")->check(CLI::IsMember({"toy", "hashed", "precomputed"}));
    app->add_option("--d-model", d_model, "Hidden width (ignored for precomputed embeddings)");
    app->add_option("--max-position", max_position, "LearnPE table rows");
    app->add_option("--vocab-buckets", vocab_buckets, "Hash buckets of the toy token table");
    app->add_option("--max-seq-len", max_seq_len, "Tokens per document");
    app->add_option("--heads", heads, "Attention heads");
  }
};

void add_embeddings_option(CLI::App* app, std::string& path) {
  app->add_option("--embeddings", path, "TEB1 token matrices for the precomputed backend")->check(CLI::ExistingFile);
}

// --- subcommands ------------------------------------------------------------

struct IngestArgs {
  std::string corpus, out, vocab;
  bool sort = false;
  std::size_t max_terms = kDefaultMaxTerms;
};

int cmd_ingest(const IngestArgs& a) {
  Corpus c = load_corpus(a.corpus);
  if (a.sort) c = sort_chronological(std::move(c));
  if (!a.out.empty()) save_corpus(c, a.out);
  std::size_t labelled = 0;
  std::map<std::string, int> events;
  for (const auto& d : c.documents)
    if (d.gold_event) ++labelled, ++events[*d.gold_event];
  json report{{"documents", c.documents.size()},
              {"labelled", labelled},
              {"events", events.size()},
              {"chronological", is_chronological(c)},
              {"first", format_iso8601(c.epoch)}};
  if (!a.vocab.empty()) {
    const auto v = build_vocabulary(c, a.max_terms);
    save_vocabulary(v, a.vocab);
    report["vocabulary"] = {{"tokens", v.channel(Channel::Tokens).terms.size()},
                            {"lemmas", v.channel(Channel::Lemmas).terms.size()},
                            {"entities", v.channel(Channel::Entities).terms.size()}};
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

struct TrainEncoderArgs {
  std::string corpus, out, loss_csv, report;
  EncoderOptions enc;
  double margin = 0.5, lr = 1e-3;
  int epochs = 3, batch_events = 4, docs_per_event = 8;
  std::string mining = "BatchHard";
  std::uint64_t seed = 0;
};

int cmd_train_encoder(const TrainEncoderArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  FusionModelConfig mc;
  mc.strategy = parse_fusion_strategy(a.enc.strategy);
  mc.time.method = parse_time_method(a.enc.time_method);
  mc.time.granularity = parse_granularity(a.enc.granularity);
  mc.time.d_model = a.enc.d_model;
  mc.time.max_position = a.enc.max_position;
  mc.backend = parse_backend_kind(a.enc.backend);
  mc.vocab_buckets = a.enc.vocab_buckets;
  mc.max_seq_len = a.enc.max_seq_len;
  mc.n_heads = a.enc.heads;
  mc.seed = a.seed;
  mc.epoch = corpus.epoch;
  if (mc.backend == BackendKind::Precomputed) {
    if (a.enc.embeddings.empty()) throw UsageError("--backend precomputed needs --embeddings");
    mc.precomputed = maybe_table(a.enc.embeddings);
    mc.time.d_model = mc.precomputed->d_model;
  }
  FusionModel model = make_fusion_model(mc);

  TrainConfig tc;
  tc.margin = a.margin;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.batch_events = a.batch_events;
  tc.docs_per_event = a.docs_per_event;
  tc.mining = parse_mining_regime(a.mining);
  tc.seed = a.seed;
  const TrainResult r = train(model, corpus, tc);
  save_model(model, a.out);
  if (!a.loss_csv.empty()) write_file_atomic(a.loss_csv, loss_history_csv(r));
  for (std::size_t e = 0; e < r.epoch_means.size(); ++e)
    log("epoch " + std::to_string(e) + " mean loss " + fmt_double(r.epoch_means[e]));
  write_json(a.report, json{{"seed", a.seed},
                            {"epochs", a.epochs},
                            {"best_epoch", r.best_epoch},
                            {"epoch_means", r.epoch_means},
                            {"batches", r.history.size()},
                            {"model", a.out}});
  return 0;
}

struct EmbedArgs {
  std::string model, corpus, out, embeddings;
};

int cmd_embed(const EmbedArgs& a) {
  const FusionModel model = load_model(a.model, maybe_table(a.embeddings));
  const Corpus corpus = load_corpus(a.corpus);
  std::string out;
  for (const auto& d : corpus.documents) {
    const Eigen::VectorXd e = embed(model, d);
    out += json{{"id", d.id}, {"embedding", std::vector<double>(e.data(), e.data() + e.size())}}.dump() + "\n";
  }
  write_file_atomic(a.out, out);
  log("embedded " + std::to_string(corpus.documents.size()) + " documents");
  return 0;
}

json report_json(const EvalReport& r) { return to_json(r); }

std::string assignments_text(const Corpus& c, const std::vector<int>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    out += json{{"doc_id", c.documents[i].id}, {"cluster_id", labels[i]}}.dump() + "\n";
  return out;
}

struct ClusterArgs {
  std::string model, corpus, embeddings, algo = "hdbscan", metric = "cosine", out, report;
  int k = 0, min_cluster_size = 5, min_samples = 0;
  double bucket_days = 30.0;
  std::uint64_t seed = 0;
};

int cmd_cluster_retro(const ClusterArgs& a) {
  if ((a.algo == "kmeans" || a.algo == "gac") && a.k < 1) throw UsageError("--algo " + a.algo + " requires --k");
  const FusionModel model = load_model(a.model, maybe_table(a.embeddings));
  const Corpus corpus = load_corpus(a.corpus);
  std::vector<Eigen::VectorXd> emb;
  std::vector<Timestamp> times;
  for (const auto& d : corpus.documents) {
    emb.push_back(embed(model, d));
    times.push_back(d.timestamp);
  }
  const Metric metric = parse_metric(a.metric);
  ClusteringResult res;
  json params{{"algo", a.algo}, {"metric", a.metric}, {"seed", a.seed}};
  if (a.algo == "hdbscan") {
    res = hdbscan(emb, HdbscanParams{a.min_cluster_size, a.min_samples, metric});
    params["min_cluster_size"] = a.min_cluster_size;
    params["min_samples"] = a.min_samples;
  } else if (a.algo == "kmeans") {
    res = kmeans(emb, a.k, a.seed, metric);
    params["k"] = a.k;
  } else {
    GacParams gp;
    gp.k = a.k;
    gp.bucket_days = a.bucket_days;
    gp.metric = metric;
    res = gac(emb, times, gp);
    params["k"] = a.k;
    params["bucket_days"] = a.bucket_days;
  }
  write_file_atomic(a.out, assignments_text(corpus, res.expanded));
  json report{{"params", params}, {"documents", corpus.documents.size()}, {"clusters", res.cn}, {"noise", res.noise}};
  if (corpus.has_labels()) {
    const auto r = evaluate(res.expanded, gold_labels(corpus));
    report["evaluation"] = report_json(r);
    std::cerr << to_table(r);
  }
  write_json(a.report, report);
  return 0;
}

struct TrainOnlineArgs {
  std::string corpus, model, embeddings, vocab, out, report;
  double sigma_days = kDefaultSigmaDays;
  std::size_t max_terms = kDefaultMaxTerms;
  std::uint64_t seed = 0;
};

int cmd_train_online(const TrainOnlineArgs& a) {
  const Corpus corpus = sort_chronological(load_corpus(a.corpus));
  std::shared_ptr<const FusionModel> encoder;
  if (!a.model.empty()) encoder = std::make_shared<const FusionModel>(load_model(a.model, maybe_table(a.embeddings)));
  const Vocabulary vocab = build_vocabulary(corpus, a.max_terms);
  std::vector<FeatureBundle> stream;
  std::vector<std::string> gold;
  for (const auto& d : corpus.documents) {
    if (!d.gold_event) throw Error("document '" + d.id + "' has no gold event");
    stream.push_back(make_bundle(d, vocab, encoder.get()));
    gold.push_back(*d.gold_event);
  }
  const auto pairs = make_ranker_examples(stream, gold, a.sigma_days);
  if (pairs.empty()) throw Error("no ranker pairs: every event is a singleton or only one event exists");
  RankerTrainConfig rc;
  rc.seed = a.seed;
  const auto ranker = train_ranker(pairs, rc);
  const auto ex = make_creation_examples(stream, gold, make_scorer(ranker.model), a.seed, a.sigma_days);
  if (ex.single_class)
    throw Error("creation examples contain a single class (" + std::to_string(ex.positives) + " new, " +
                std::to_string(ex.negatives) + " merge); cannot train the creation model");
  CreationTrainConfig cc;
  cc.seed = a.seed;
  const auto creation = train_creation_model(ex.examples, cc);

  OnlineModels m{ranker.model, creation.model, a.sigma_days};
  save_online_models(m, a.out);
  save_vocabulary(vocab, a.vocab);
  write_json(a.report, json{{"seed", a.seed},
                            {"ranker", {{"pairs", pairs.size()},
                                        {"margin", ranker.model.margin},
                                        {"learning_rate", ranker.model.learning_rate},
                                        {"cv_accuracy", ranker.cv_accuracy},
                                        {"train_accuracy", ranker.train_accuracy}}},
                            {"creation", {{"positives", ex.positives},
                                          {"negatives", ex.negatives},
                                          {"balanced_examples", ex.examples.size()},
                                          {"learning_rate", creation.model.learning_rate},
                                          {"cv_log_loss", creation.cv_log_loss},
                                          {"train_accuracy", creation.train_accuracy}}}});
  return 0;
}

struct RunOnlineArgs {
  std::string corpus, vocab, models, model, embeddings, out, report, snapshot;
  bool sort = false, resume = false;
  long stop_after = -1;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

int cmd_run_online(const RunOnlineArgs& a) {
  if ((a.resume || a.stop_after >= 0) && a.snapshot.empty()) throw UsageError("--resume and --stop-after need --snapshot");
  const Corpus corpus = load_chronological(a.corpus, a.sort);
  const auto models = load_online_models(a.models);
  auto vocab = std::make_shared<const Vocabulary>(load_vocabulary(a.vocab));
  std::shared_ptr<const FusionModel> encoder;
  if (!a.model.empty()) encoder = std::make_shared<const FusionModel>(load_model(a.model, maybe_table(a.embeddings)));
  OnlinePipeline pipe(vocab, encoder, make_scorer(models.ranker), make_decider(models.creation), models.sigma_days);

  std::vector<std::string> lines;
  if (a.resume) {
    pipe.pool() = load_pool(a.snapshot);
    lines = read_lines(a.out);
    if (lines.size() != pipe.pool().processed)
      throw Error(a.out + " holds " + std::to_string(lines.size()) + " assignments but the snapshot has " +
                  std::to_string(pipe.pool().processed));
    log("resuming after " + std::to_string(lines.size()) + " documents");
  }
  const std::size_t start = pipe.pool().processed;
  if (start > corpus.documents.size()) throw Error("snapshot is ahead of the corpus");
  std::size_t end = corpus.documents.size();
  if (a.stop_after >= 0) end = std::min(end, start + static_cast<std::size_t>(a.stop_after));
  for (std::size_t i = start; i < end; ++i) lines.push_back(assignment_line(pipe.process(corpus.documents[i])));

  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file_atomic(a.out, text);
  if (!a.snapshot.empty()) save_pool(pipe.pool(), a.snapshot);
  if (end < corpus.documents.size()) {
    log("stopped after " + std::to_string(end) + " of " + std::to_string(corpus.documents.size()) + " documents");
    return 0;
  }

  json report{{"documents", corpus.documents.size()}, {"clusters", pipe.pool().clusters.size()}};
  if (corpus.documents.empty()) {
    report["empty"] = true;
    log("empty corpus: nothing to assign");
  } else if (corpus.has_labels()) {
    std::vector<int> pred;
    for (const auto& l : lines) pred.push_back(json::parse(l).at("cluster_id").get<int>());
    const auto r = evaluate(pred, gold_labels(corpus));
    report["evaluation"] = report_json(r);
    std::cerr << to_table(r);
  }
  write_json(a.report, report);
  return 0;
}

struct EvaluateArgs {
  std::string pred, gold, out;
};

Partition read_assignments(const std::string& path) {
  Partition p;
  for (const auto& line : read_lines(path)) {
    json j;
    try {
      j = json::parse(line);
      const auto& cid = j.at("cluster_id");
      const std::string label = cid.is_string() ? cid.get<std::string>() : cid.dump();
      if (!p.emplace(j.at("doc_id").get<std::string>(), label).second)
        throw FormatError(path + ": duplicate doc_id " + j["doc_id"].dump());
    } catch (const json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
  }
  return p;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const Partition pred = read_assignments(a.pred);
  Partition gold;
  for (const auto& d : load_corpus(a.gold).documents) {
    if (!d.gold_event) throw Error("gold corpus document '" + d.id + "' has no event");
    gold.emplace(d.id, *d.gold_event);
  }
  const auto r = evaluate(pred, gold);
  std::cerr << to_table(r);
  write_json(a.out, report_json(r));
  return 0;
}

struct ProbeArgs {
  std::string model, corpus, doc, embeddings, out;
  int days = 1000;
};

int cmd_probe_time(const ProbeArgs& a) {
  if (a.days < 0) throw UsageError("--days must be non-negative");
  const FusionModel model = load_model(a.model, maybe_table(a.embeddings));
  const Corpus corpus = load_corpus(a.corpus);
  const auto it = std::find_if(corpus.documents.begin(), corpus.documents.end(),
                               [&](const Document& d) { return d.id == a.doc; });
  if (it == corpus.documents.end()) throw Error("unknown document id '" + a.doc + "'");
  std::vector<int> offsets(static_cast<std::size_t>(a.days) + 1);
  std::iota(offsets.begin(), offsets.end(), 0);
  const std::string csv = probe_to_csv(probe_similarity(model, *it, offsets));
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_file_atomic(a.out, csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-aware news event detection", "tdt"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config;

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON file with option values; flags override it")->check(CLI::ExistingFile);
  };

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Validate a corpus, optionally sort it and build the tf-idf vocabulary");
  with_config(s_ingest);
  s_ingest->add_option("--corpus", ingest.corpus, "Corpus (JSON lines)")->required()->check(CLI::ExistingFile);
  s_ingest->add_option("--out", ingest.out, "Write the normalised corpus here");
  s_ingest->add_option("--vocab", ingest.vocab, "Write the vocabulary here");
  s_ingest->add_option("--max-terms", ingest.max_terms, "Vocabulary size per channel");
  s_ingest->add_flag("--sort", ingest.sort, "Sort chronologically");

  TrainEncoderArgs tenc;
  auto* s_tenc = app.add_subcommand("train-encoder", "Fine-tune the time-aware encoder with triplet loss");
  with_config(s_tenc);
  s_tenc->add_option("--corpus", tenc.corpus, "Labelled corpus")->required()->check(CLI::ExistingFile);
  s_tenc->add_option("--out", tenc.out, "Model file")->required();
  s_tenc->add_option("--loss-csv", tenc.loss_csv, "Per-batch loss history");
  s_tenc->add_option("--report", tenc.report, "JSON report (stdout when absent)");
  tenc.enc.add(s_tenc);
  add_embeddings_option(s_tenc, tenc.enc.embeddings);
  s_tenc->add_option("--epochs", tenc.epochs);
  s_tenc->add_option("--lr", tenc.lr, "Adam learning rate");
  s_tenc->add_option("--margin", tenc.margin);
  s_tenc->add_option("--mining", tenc.mining)
      ->check(CLI::IsMember({"BatchHard", "BatchAll", "BatchSemiHard", "BatchHardSoftMargin", "EPEN", "EPHN", "HPEN",
                             "HPHN"}));
  s_tenc->add_option("--batch-events", tenc.batch_events, "Events per batch (P)");
  s_tenc->add_option("--docs-per-event", tenc.docs_per_event, "Documents per event (K)");
  s_tenc->add_option("--seed", tenc.seed);

  EmbedArgs emb;
  auto* s_emb = app.add_subcommand("embed", "Write one fused embedding per document");
  with_config(s_emb);
  s_emb->add_option("--model", emb.model)->required()->check(CLI::ExistingFile);
  s_emb->add_option("--corpus", emb.corpus)->required()->check(CLI::ExistingFile);
  s_emb->add_option("--out", emb.out, "JSON lines {id, embedding}")->required();
  add_embeddings_option(s_emb, emb.embeddings);

  ClusterArgs cl;
  auto* s_cl = app.add_subcommand("cluster-retro", "Embed a corpus and cluster it offline");
  with_config(s_cl);
  s_cl->add_option("--model", cl.model)->required()->check(CLI::ExistingFile);
  s_cl->add_option("--corpus", cl.corpus)->required()->check(CLI::ExistingFile);
  s_cl->add_option("--out", cl.out, "Assignments (JSON lines)")->required();
  s_cl->add_option("--report", cl.report, "JSON report (stdout when absent)");
  s_cl->add_option("--algo", cl.algo)->check(CLI::IsMember({"hdbscan", "kmeans", "gac"}));
  s_cl->add_option("--k", cl.k, "Number of clusters (kmeans, gac)");
  s_cl->add_option("--metric", cl.metric)->check(CLI::IsMember({"cosine", "euclidean"}));
  s_cl->add_option("--min-cluster-size", cl.min_cluster_size);
  s_cl->add_option("--min-samples", cl.min_samples, "0 means min-cluster-size");
  s_cl->add_option("--bucket-days", cl.bucket_days, "Initial GAC bucket width");
  s_cl->add_option("--seed", cl.seed);
  add_embeddings_option(s_cl, cl.embeddings);

  TrainOnlineArgs ton;
  auto* s_ton = app.add_subcommand("train-online", "Train the cluster ranker and the creation model");
  with_config(s_ton);
  s_ton->add_option("--corpus", ton.corpus, "Labelled corpus")->required()->check(CLI::ExistingFile);
  s_ton->add_option("--out", ton.out, "Online model file")->required();
  s_ton->add_option("--vocab", ton.vocab, "Vocabulary output")->required();
  s_ton->add_option("--model", ton.model, "Encoder for the dense feature")->check(CLI::ExistingFile);
  s_ton->add_option("--report", ton.report, "JSON report (stdout when absent)");
  s_ton->add_option("--sigma-days", ton.sigma_days, "Width of the time similarity");
  s_ton->add_option("--max-terms", ton.max_terms);
  s_ton->add_option("--seed", ton.seed);
  add_embeddings_option(s_ton, ton.embeddings);

  RunOnlineArgs ron;
  auto* s_ron = app.add_subcommand("run-online", "Stream a corpus through the online pipeline");
  with_config(s_ron);
  s_ron->add_option("--corpus", ron.corpus)->required()->check(CLI::ExistingFile);
  s_ron->add_option("--models", ron.models, "Online model file")->required()->check(CLI::ExistingFile);
  s_ron->add_option("--vocab", ron.vocab)->required()->check(CLI::ExistingFile);
  s_ron->add_option("--out", ron.out, "Assignments (JSON lines)")->required();
  s_ron->add_option("--model", ron.model, "Encoder for the dense feature")->check(CLI::ExistingFile);
  s_ron->add_option("--report", ron.report, "JSON report (stdout when absent)");
  s_ron->add_option("--snapshot", ron.snapshot, "Cluster pool snapshot, written at the end of the run");
  s_ron->add_option("--stop-after", ron.stop_after, "Process at most this many documents, then snapshot");
  s_ron->add_flag("--resume", ron.resume, "Continue from --snapshot and the existing --out");
  s_ron->add_flag("--sort", ron.sort, "Sort the corpus instead of rejecting out-of-order input");
  add_embeddings_option(s_ron, ron.embeddings);

  EvaluateArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "Score assignments against gold events");
  with_config(s_ev);
  s_ev->add_option("--pred", ev.pred, "Assignments (JSON lines with doc_id, cluster_id)")->required()->check(CLI::ExistingFile);
  s_ev->add_option("--gold", ev.gold, "Labelled corpus")->required()->check(CLI::ExistingFile);
  s_ev->add_option("--out", ev.out, "JSON report (stdout when absent)");

  ProbeArgs pr;
  auto* s_pr = app.add_subcommand("probe-time", "Cosine between a document and itself moved forward in time");
  with_config(s_pr);
  s_pr->add_option("--model", pr.model)->required()->check(CLI::ExistingFile);
  s_pr->add_option("--corpus", pr.corpus)->required()->check(CLI::ExistingFile);
  s_pr->add_option("--doc", pr.doc, "Document id")->required();
  s_pr->add_option("--days", pr.days, "Largest offset");
  s_pr->add_option("--out", pr.out, "CSV file (stdout when absent)");
  add_embeddings_option(s_pr, pr.embeddings);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // A first pass finds the subcommand and --config; the config is then
    // spliced in right after the subcommand name so that real flags follow it.
    for (std::size_t i = 0; i < args.size(); ++i) {
      auto* sub = app.get_subcommand_no_throw(args[i]);
      if (!sub) continue;
      std::string cfg;
      for (std::size_t k = i + 1; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size()) cfg = args[k + 1];
        if (args[k].rfind("--config=", 0) == 0) cfg = args[k].substr(9);
      }
      if (!cfg.empty()) {
        const auto extra = config_args(*sub, cfg);
        args.insert(args.begin() + static_cast<long>(i) + 1, extra.begin(), extra.end());
      }
      break;
    }
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    log(std::string("usage: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log(e.what());
    return 2;
  }

  try {
    if (*s_ingest) return cmd_ingest(ingest);
    if (*s_tenc) return cmd_train_encoder(tenc);
    if (*s_emb) return cmd_embed(emb);
    if (*s_cl) return cmd_cluster_retro(cl);
    if (*s_ton) return cmd_train_online(ton);
    if (*s_ron) return cmd_run_online(ron);
    if (*s_ev) return cmd_evaluate(ev);
    if (*s_pr) return cmd_probe_time(pr);
  } catch (const UsageError& e) {
    log(std::string("usage: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
  return 2;
}
