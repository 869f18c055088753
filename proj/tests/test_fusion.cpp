#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "tdt/fusion.hpp"
#include "tdt/io_util.hpp"

using namespace tdt;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

FusionModel model_for(FusionStrategy s, TimeMethod t, int d = 8, std::uint64_t seed = 1) {
  FusionModelConfig cfg;
  cfg.strategy = s;
  cfg.time.method = t;
  cfg.time.d_model = d;
  cfg.time.max_position = 64;
  cfg.backend = BackendKind::ToyTrainable;
  cfg.vocab_buckets = 257;
  cfg.seed = seed;
  cfg.attention_init_std = 0.3;
  return make_fusion_model(cfg);
}

Document sample_doc() {
  Document d;
  d.id = "s";
  d.title = "Quake shakes city";
  d.body = "Buildings swayed downtown as the quake struck";
  d.timestamp = Timestamp{12 * 86400};
  d.entities.push_back(EntitySpan{"city", 13, 17, "LOC", Field::Title});
  return d;
}

constexpr FusionStrategy kStrategies[] = {FusionStrategy::A, FusionStrategy::AM, FusionStrategy::CM, FusionStrategy::ACM};

}  // namespace

TEST_CASE("build_time_matrix") {
  Eigen::VectorXd te(3);
  te << 1, 2, 3;
  CHECK(build_time_matrix(te, 1) == te.transpose());
  const auto m = build_time_matrix(te, 5);
  CHECK(m.rows() == 5);
  for (int r = 0; r < 5; ++r) CHECK(m.row(r) == te.transpose());
  CHECK(build_time_matrix(Eigen::VectorXd::Zero(64), 230).rows() == 230);
}

TEST_CASE("multi-head attention") {
  std::mt19937_64 rng(4);
  const auto params = make_attention(8, 4, 2, 0.5, rng);

  SUBCASE("a single row attends only to itself") {
    const auto x = random_matrix(1, 8, rng);
    const auto y = multi_head_attention(x, params);
    CHECK((y - x * params.wv * params.wo).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("permutation equivariance") {
    const auto x = random_matrix(5, 8, rng);
    std::vector<int> perm{3, 0, 4, 1, 2};
    Eigen::MatrixXd px(5, 8);
    for (int i = 0; i < 5; ++i) px.row(i) = x.row(perm[i]);
    const auto y = multi_head_attention(x, params), py = multi_head_attention(px, params);
    for (int i = 0; i < 5; ++i) CHECK((py.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("identity projections, identical rows") {
    AttentionParams id;
    id.n_heads = 1;
    id.wq = id.wk = id.wv = id.wo = Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd x(2, 3);
    x << 0.5, -1, 2, 0.5, -1, 2;
    const auto y = multi_head_attention(x, id);
    CHECK((y - x).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("width mismatch") { CHECK_THROWS_AS(multi_head_attention(random_matrix(2, 5, rng), params), std::invalid_argument); }
}

TEST_CASE("fuse arithmetic for strategy A") {
  auto m = model_for(FusionStrategy::A, TimeMethod::SinPE, 2);
  Eigen::MatrixXd text(2, 2);
  text << 1, 0, 0, 1;
  Eigen::VectorXd t(2);
  t << 1, 1;
  const auto e = fuse(text, build_time_matrix(t, 2), m);
  CHECK(e(0) == 1.5);
  CHECK(e(1) == 1.5);
  const auto zero = fuse(text, Eigen::MatrixXd::Zero(2, 2), m);
  CHECK(zero == text.colwise().mean().transpose());
  CHECK_THROWS(fuse(text, Eigen::MatrixXd::Zero(3, 2), m));
}

TEST_CASE("output width and permutation invariance for every strategy") {
  std::mt19937_64 rng(8);
  for (auto s : kStrategies) {
    const auto m = model_for(s, TimeMethod::SinPE);
    const auto text = random_matrix(6, 8, rng);
    const auto time = build_time_matrix(sinpe(17, 8), 6);
    const auto e = fuse(text, time, m);
    CHECK(e.size() == 8);
    Eigen::MatrixXd shuffled = text.colwise().reverse();
    CHECK((fuse(shuffled, time, m) - e).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fuse(text, time, m) == e);  // deterministic
  }
}

TEST_CASE("CM and AM disagree on the same inputs") {
  std::mt19937_64 rng(2);
  const auto am = model_for(FusionStrategy::AM, TimeMethod::SinPE);
  const auto cm = model_for(FusionStrategy::CM, TimeMethod::SinPE);
  const auto text = random_matrix(4, 8, rng);
  const auto time = build_time_matrix(sinpe(5, 8), 4);
  CHECK((fuse(text, time, am) - fuse(text, time, cm)).norm() > 1e-6);
}

TEST_CASE("parameter inventory") {
  CHECK(model_for(FusionStrategy::CM, TimeMethod::SinPE).layout().learnpe_table == -1);
  CHECK(model_for(FusionStrategy::CM, TimeMethod::SinPE).layout().t2v_omega == -1);
  CHECK(model_for(FusionStrategy::A, TimeMethod::SinPE).layout().wq == -1);
  auto lp = model_for(FusionStrategy::ACM, TimeMethod::LearnPE);
  CHECK(lp.layout().learnpe_table >= 0);
  CHECK(lp.attention.input_width() == 16);
  CHECK(lp.attention.wo.cols() == 8);
  for (auto& p : lp.parameters()) CHECK(p.value->allFinite());
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  for (auto s : kStrategies) {
    auto m = model_for(s, TimeMethod::Time2Vec);
    EmbedTrace trace;
    embed(m, sample_doc(), &trace);
    auto params = m.parameters();
    auto grads = zero_grads(params);
    embed_backward(m, trace, Eigen::VectorXd::Zero(8), grads);
    for (const auto& g : grads) CHECK(g.is_zero());
  }
}

TEST_CASE("analytic gradients match central differences") {
  for (auto s : kStrategies) {
    for (auto t : {TimeMethod::SinPE, TimeMethod::LearnPE, TimeMethod::Time2Vec}) {
      const auto r = gradcheck::check(s, t, 11);
      for (const auto& te : r.tensors) {
        CAPTURE(to_string(s));
        CAPTURE(to_string(t));
        CAPTURE(te.name);
        CHECK(te.rel_error <= 1e-4);
        CHECK(te.entries > 0);
      }
    }
  }
}

TEST_CASE("learnpe: a step on one row leaves the others alone") {
  auto m = model_for(FusionStrategy::CM, TimeMethod::LearnPE);
  const Eigen::VectorXd before2 = m.time_embedding(2), before3 = m.time_embedding(3);
  Document d = sample_doc();
  d.timestamp = Timestamp{3 * 86400};
  EmbedTrace trace;
  embed(m, d, &trace);
  auto params = m.parameters();
  auto grads = zero_grads(params);
  embed_backward(m, trace, Eigen::VectorXd::Ones(8), grads);
  const auto l = m.layout();
  auto& table = *params[l.learnpe_table].value;
  table -= 0.1 * grads[l.learnpe_table].to_dense(table.rows(), table.cols());
  CHECK(m.time_embedding(2) == before2);
  CHECK(m.time_embedding(3) != before3);
}

TEST_CASE("model persistence is bit-exact") {
  const auto dir = std::filesystem::temp_directory_path();
  for (auto s : kStrategies) {
    for (auto t : {TimeMethod::SinPE, TimeMethod::LearnPE, TimeMethod::Time2Vec, TimeMethod::Disabled}) {
      auto m = model_for(s, t, 8, 5);
      const auto path = dir / "tdt_model_roundtrip.bin";
      save_model(m, path);
      const auto back = load_model(path);
      CHECK(back.strategy == s);
      CHECK(back.time.method == t);
      CHECK(embed(back, sample_doc()) == embed(m, sample_doc()));
      CHECK(serialize_model(back) == serialize_model(m));
      std::filesystem::remove(path);
    }
  }
}

TEST_CASE("model file validation") {
  const auto bytes = serialize_model(model_for(FusionStrategy::CM, TimeMethod::SinPE));
  CHECK(bytes.substr(0, 4) == "TEFM");
  CHECK_THROWS_AS(parse_model("XXXX" + bytes.substr(4)), FormatError);
  CHECK_THROWS_AS(parse_model(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(parse_model(bytes + "z"), FormatError);
}
