#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "tdt/io_util.hpp"
#include "tdt/text_encoder.hpp"

using namespace tdt;

namespace {

Document make_doc(std::string id, std::string title, std::string body = "") {
  Document d;
  d.id = std::move(id);
  d.title = std::move(title);
  d.body = std::move(body);
  return d;
}

std::shared_ptr<PrecomputedTable> zero_table(const std::string& id, int rows, int d) {
  auto t = std::make_shared<PrecomputedTable>();
  t->d_model = d;
  t->order.push_back(id);
  t->matrices[id] = Eigen::MatrixXd::Zero(rows, d);
  return t;
}

}  // namespace

TEST_CASE("tokenize") {
  SUBCASE("entity flags by span intersection") {
    auto d = make_doc("t", "Typhoon hits Japan");
    d.entities.push_back(EntitySpan{"Japan", 13, 18, "LOC", Field::Title});
    const auto toks = tokenize(d);
    REQUIRE(toks.size() == 3);
    CHECK(toks[0].text == "typhoon");
    CHECK_FALSE(toks[0].entity);
    CHECK_FALSE(toks[1].entity);
    CHECK(toks[2].entity);
  }
  SUBCASE("partial overlap still flags the token") {
    auto d = make_doc("t", "", "New York-based firm");
    d.entities.push_back(EntitySpan{"York", 4, 8, "LOC", Field::Body});
    const auto toks = tokenize(d);
    REQUIRE(toks.size() == 4);
    CHECK_FALSE(toks[0].entity);
    CHECK(toks[1].entity);
    CHECK_FALSE(toks[2].entity);
  }
  SUBCASE("title spans do not leak into the body") {
    auto d = make_doc("t", "Alpha beta", "Alpha beta");
    d.entities.push_back(EntitySpan{"Alpha", 0, 5, "X", Field::Title});
    const auto toks = tokenize(d);
    REQUIRE(toks.size() == 4);
    CHECK(toks[0].entity);
    CHECK_FALSE(toks[2].entity);
    CHECK(toks[2].field == Field::Body);
  }
  SUBCASE("truncation at the cap") {
    std::string body;
    for (int i = 0; i < 500; ++i) body += "w" + std::to_string(i) + " ";
    CHECK(tokenize(make_doc("t", "", body)).size() == 230);
    CHECK(tokenize(make_doc("t", "", body), 7).size() == 7);
  }
  SUBCASE("empty document gives one synthetic token") {
    const auto toks = tokenize(make_doc("t", "", " ,. "));
    REQUIRE(toks.size() == 1);
    CHECK_FALSE(toks[0].entity);
  }
}

TEST_CASE("encode with the hashed backend") {
  const auto b = make_hashed_backend(16, 9);
  const auto d = make_doc("h", "Market rally continues", "Stocks rose again");
  const auto toks = tokenize(d);
  const auto m1 = encode(d, toks, b);
  const auto m2 = encode(d, toks, b);
  CHECK(m1.rows() == 6);
  CHECK(m1.cols() == 16);
  CHECK(m1 == m2);
  CHECK(m1.allFinite());
  // same word, same vector (up to the entity term)
  const auto again = make_doc("h2", "rally rally");
  const auto m3 = encode(again, tokenize(again), b);
  CHECK(m3.row(0) == m3.row(1));
  CHECK(make_hashed_backend(16, 10).entity_present != b.entity_present);
}

TEST_CASE("entity layer in isolation") {
  const int d = 8;
  auto all = make_doc("all", "Paris London");
  all.entities = {EntitySpan{"Paris", 0, 5, "LOC", Field::Title}, EntitySpan{"London", 6, 12, "LOC", Field::Title}};
  const auto none = make_doc("none", "cats dogs");
  auto table = std::make_shared<PrecomputedTable>();
  table->d_model = d;
  table->order = {"all", "none"};
  table->matrices["all"] = Eigen::MatrixXd::Zero(2, d);
  table->matrices["none"] = Eigen::MatrixXd::Zero(2, d);
  const auto b = make_precomputed_backend(table, 1);
  const auto ma = encode(all, tokenize(all), b);
  const auto mn = encode(none, tokenize(none), b);
  for (int r = 0; r < 2; ++r) {
    CHECK(ma.row(r) == b.entity_present.row(0));
    CHECK(mn.row(r) == b.entity_absent.row(0));
  }
}

TEST_CASE("flipping one entity flag changes exactly one row") {
  const auto b = make_toy_backend(8, 64, 2);
  auto d = make_doc("f", "one two three four");
  auto toks = tokenize(d);
  const auto before = encode(d, toks, b);
  toks[2].entity = !toks[2].entity;
  const auto after = encode(d, toks, b);
  for (Eigen::Index r = 0; r < before.rows(); ++r) CHECK((before.row(r) == after.row(r)) == (r != 2));
}

TEST_CASE("precomputed backend") {
  SUBCASE("shape contract") {
    const auto b = make_precomputed_backend(zero_table("p", 7, 16), 0);
    const auto d = make_doc("p", "whatever");
    const auto m = encode(d, tokenize(d), b);
    CHECK(m.rows() == 7);
    CHECK(m.cols() == 16);
  }
  SUBCASE("768-wide record of 230 rows") {
    const auto b = make_precomputed_backend(zero_table("big", 230, 768), 0);
    const auto d = make_doc("big", "x");
    CHECK(encode(d, tokenize(d), b).rows() == 230);
    CHECK(b.d_model == 768);
  }
  SUBCASE("missing id names the document") {
    const auto b = make_precomputed_backend(zero_table("p", 2, 4), 0);
    const auto d = make_doc("absent-doc", "x");
    CHECK_THROWS_WITH(encode(d, tokenize(d), b), doctest::Contains("absent-doc"));
  }
}

TEST_CASE("TEB1 format") {
  PrecomputedTable t;
  t.d_model = 3;
  t.order = {"a", "bé"};
  t.matrices["a"] = Eigen::MatrixXd::Constant(2, 3, 0.5);
  Eigen::MatrixXd m(1, 3);
  m << 1.0, -2.0, 0.25;
  t.matrices["bé"] = m;
  const auto bytes = serialize_teb1(t);

  SUBCASE("layout") {
    CHECK(bytes.substr(0, 4) == "TEB1");
    ByteReader in(bytes);
    in.bytes(4);
    CHECK(in.u32() == 2);
    CHECK(in.u32() == 3);
    CHECK(in.u16() == 1);
    CHECK(in.bytes(1) == "a");
    CHECK(in.u32() == 2);
    CHECK(in.f32() == 0.5f);
    CHECK(bytes.size() == 4 + 4 + 4 + (2 + 1 + 4 + 6 * 4) + (2 + 3 + 4 + 3 * 4));
  }
  SUBCASE("round trip") {
    const auto back = parse_teb1(bytes);
    CHECK(back.d_model == 3);
    CHECK(back.order == t.order);
    CHECK(back.matrices.at("bé") == m);
    const auto path = std::filesystem::temp_directory_path() / "tdt_teb1_roundtrip.bin";
    save_precomputed(t, path);
    CHECK(load_precomputed(path).matrices.at("a") == t.matrices.at("a"));
    std::filesystem::remove(path);
  }
  SUBCASE("empty file is a valid empty table") {
    PrecomputedTable e;
    e.d_model = 16;
    const auto back = parse_teb1(serialize_teb1(e));
    CHECK(back.matrices.empty());
    CHECK(back.d_model == 16);
  }
  SUBCASE("corrupted magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse_teb1(bad), FormatError);
  }
  SUBCASE("truncated payload") {
    for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() - 1}) CHECK_THROWS_AS(parse_teb1(bytes.substr(0, cut)), FormatError);
  }
  SUBCASE("duplicate id") {
    PrecomputedTable dup = t;
    dup.order = {"a", "a"};
    CHECK_THROWS_AS(parse_teb1(serialize_teb1(dup)), FormatError);
  }
  SUBCASE("trailing bytes") { CHECK_THROWS_AS(parse_teb1(bytes + "x"), FormatError); }
}

TEST_CASE("backend names") {
  for (auto k : {BackendKind::Precomputed, BackendKind::ToyTrainable, BackendKind::HashedRandom})
    CHECK(parse_backend_kind(to_string(k)) == k);
  CHECK_THROWS(parse_backend_kind("bert"));
}
