#include <doctest.h>

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "slu/grammar.hpp"
#include "slu/rng.hpp"
#include "slu/semantics.hpp"

using namespace slu;

namespace {

Vocab default_vocab() { return Grammar::builtin_default().make_vocab(); }

std::string rendered(const SemanticFrame& f, const Vocab& v) {
  return v.render(serialize(f, v));
}

}  // namespace

TEST_CASE("vocab layout: controls first, graphemes, tags, sorted names") {
  Vocab v = Vocab::build({"B_DOM", "A_DOM"}, {"INT2", "INT1"}, {"LBL"});
  CHECK(v.pad() == 0);
  CHECK(v.sos() == 1);
  CHECK(v.eos() == 2);
  CHECK(v.token(0) == "<pad>");
  CHECK(v.token_class(3) == TokenClass::grapheme);
  CHECK(v.token(3) == " ");
  int g = static_cast<int>(Vocab::grapheme_set().size());
  CHECK(v.domain_tag() == 3 + g);
  CHECK(v.intent_tag() == 4 + g);
  CHECK(v.token(5 + g) == "<A_DOM>");  // sorted
  CHECK(v.token(6 + g) == "<B_DOM>");
  CHECK(v.token_class(v.id("<INT1>")) == TokenClass::intent_name);
  CHECK(v.token_class(v.id("<LBL>")) == TokenClass::arg_label);
  CHECK(v.is_semantic_tag(v.id("<LBL>")));
  CHECK(!v.is_semantic_tag(v.id("<A_DOM>")));
  CHECK(v.find("<missing>") == -1);
  CHECK_THROWS_AS(v.id("<missing>"), std::out_of_range);
}

TEST_CASE("grapheme encoding and rendered-text round trip") {
  Vocab v = default_vocab();
  std::string text = "hello 2 p.m. [x_1]'s";
  std::vector<int> ids = v.encode_graphemes(text);
  CHECK(v.render(ids) == text);
  CHECK(v.parse_rendered(v.render(serialize(
            SemanticFrame{"NONE", {}, {}}, v))) ==
        serialize(SemanticFrame{"NONE", {}, {}}, v));
  CHECK_THROWS_AS(v.encode_graphemes("Ä"), std::out_of_range);
  CHECK_THROWS_AS(v.encode_graphemes("X"), std::out_of_range);
}

TEST_CASE("serialization examples render byte-exact") {
  Vocab v = default_vocab();
  CHECK(rendered({"PRODUCTIVITY", "SET_ALARM", {{"DATETIME", "2 p.m."}}}, v) ==
        "<DOMAIN><PRODUCTIVITY><INTENT><SET_ALARM><DATETIME> 2 p.m.");
  CHECK(rendered({"PRODUCTIVITY", "ADD_REMINDER", {{"SUBJECT", "buy milk"}}},
                 v) ==
        "<DOMAIN><PRODUCTIVITY><INTENT><ADD_REMINDER><SUBJECT> buy milk");
  CHECK(rendered({"MEDIA_CONTROL", {}, {}}, v) == "<DOMAIN><MEDIA_CONTROL>");
  CHECK(rendered({"NONE", {}, {}}, v) == "<DOMAIN><NONE>");
}

TEST_CASE("serialize rejects out-of-vocabulary symbols") {
  Vocab v = default_vocab();
  CHECK_THROWS_AS(serialize({"NOT_A_DOMAIN", {}, {}}, v), std::out_of_range);
  CHECK_THROWS_AS(serialize({"NONE", {}, {{"BADLABEL", "x"}}}, v),
                  std::out_of_range);
}

TEST_CASE("round trip is exact over the grammar's full frame space") {
  Grammar grammar = Grammar::builtin_default();
  Vocab v = grammar.make_vocab();
  auto expansions = grammar.enumerate_all();
  CHECK(expansions.size() > 100);
  for (const auto& e : expansions) {
    DeserializeResult ds = deserialize(serialize(e.frame, v), v);
    CHECK(ds.clean());
    CHECK(ds.frame == e.frame);
  }
}

TEST_CASE("deserialize diagnostics and fallbacks") {
  Vocab v = default_vocab();
  SUBCASE("empty input falls back with missing domain") {
    DeserializeResult ds = deserialize({}, v);
    CHECK(ds.frame.domain == "NONE");
    REQUIRE(ds.diagnostics.size() == 1);
    CHECK(ds.diagnostics[0] == "missing domain");
  }
  SUBCASE("dangling domain tag") {
    DeserializeResult ds = deserialize({v.domain_tag()}, v);
    CHECK(!ds.clean());
    CHECK(ds.frame.domain == "NONE");
    CHECK(ds.diagnostics[0] == "dangling tag <DOMAIN>");
  }
  SUBCASE("duplicate argument label keeps the first value") {
    std::vector<int> ids = {v.domain_tag(), v.id("<MEDIA>"),
                            v.id("<SUBJECT>")};
    for (int t : v.encode_graphemes(" jazz")) ids.push_back(t);
    ids.push_back(v.id("<SUBJECT>"));
    for (int t : v.encode_graphemes(" rock")) ids.push_back(t);
    DeserializeResult ds = deserialize(ids, v);
    REQUIRE(ds.frame.args.size() == 1);
    CHECK(ds.frame.args[0].second == "jazz");
    CHECK(!ds.clean());
  }
  SUBCASE("order-agnostic: intent before domain still parses") {
    std::vector<int> ids = {v.intent_tag(), v.id("<SET_ALARM>"),
                            v.domain_tag(), v.id("<PRODUCTIVITY>")};
    DeserializeResult ds = deserialize(ids, v);
    CHECK(ds.clean());
    CHECK(ds.frame.domain == "PRODUCTIVITY");
    CHECK(ds.frame.intent == "SET_ALARM");
  }
  SUBCASE("stray graphemes produce a single diagnostic") {
    std::vector<int> ids = v.encode_graphemes("abc");
    ids.push_back(v.domain_tag());
    ids.push_back(v.id("<NONE>"));
    DeserializeResult ds = deserialize(ids, v);
    CHECK(ds.frame.domain == "NONE");
    int stray = 0;
    for (const std::string& d : ds.diagnostics)
      if (d == "stray graphemes outside any value") ++stray;
    CHECK(stray == 1);
  }
  SUBCASE("control tokens are skipped everywhere") {
    std::vector<int> ids = {v.pad(),        v.domain_tag(), v.id("<MEDIA>"),
                            v.sos(),        v.id("<SUBJECT>")};
    for (int t : v.encode_graphemes(" ja")) ids.push_back(t);
    ids.push_back(v.pad());
    for (int t : v.encode_graphemes("zz")) ids.push_back(t);
    DeserializeResult ds = deserialize(ids, v);
    CHECK(ds.clean());
    REQUIRE(ds.frame.args.size() == 1);
    CHECK(ds.frame.args[0].second == "jazz");
  }
  SUBCASE("empty argument value is recorded with a diagnostic") {
    std::vector<int> ids = {v.domain_tag(), v.id("<MEDIA>"),
                            v.id("<SUBJECT>")};
    DeserializeResult ds = deserialize(ids, v);
    REQUIRE(ds.frame.args.size() == 1);
    CHECK(ds.frame.args[0].second.empty());
    CHECK(!ds.clean());
  }
}

TEST_CASE("deserialize is total over random token soup") {
  Vocab v = default_vocab();
  Rng rng(2024);
  for (int trial = 0; trial < 20000; ++trial) {
    int len = static_cast<int>(rng.below(24));
    std::vector<int> ids;
    for (int i = 0; i < len; ++i)
      ids.push_back(static_cast<int>(rng.below(
          static_cast<std::uint64_t>(v.size()))));
    DeserializeResult ds = deserialize(ids, v);  // must never throw
    CHECK(!ds.frame.domain.empty());
  }
}

TEST_CASE("split_joint_output splits at the first semantic tag") {
  Vocab v = default_vocab();
  std::vector<int> w = v.encode_graphemes("play jazz");
  std::vector<int> s = serialize({"MEDIA", "PLAY_SONG", {{"SUBJECT", "jazz"}}},
                                 v);
  std::vector<int> joint = w;
  joint.insert(joint.end(), s.begin(), s.end());
  auto [left, right] = split_joint_output(joint, v);
  CHECK(left == w);
  CHECK(right == s);
  auto [all, none] = split_joint_output(w, v);
  CHECK(all == w);
  CHECK(none.empty());
  auto [empty, full] = split_joint_output(s, v);
  CHECK(empty.empty());
  CHECK(full == s);
}

TEST_CASE("normalize_value collapses and trims whitespace") {
  CHECK(normalize_value("  a   b\t c ") == "a b c");
  CHECK(normalize_value("") == "");
  CHECK(normalize_value("   ") == "");
  CHECK(normalize_value("abc") == "abc");
}

TEST_CASE("vocab save/load round trip is exact") {
  Vocab v = default_vocab();
  std::string path = "vocab_roundtrip_test.tsv";
  v.save(path);
  Vocab loaded = Vocab::load(path);
  CHECK(loaded == v);
  CHECK(loaded.pad() == v.pad());
  CHECK(loaded.domain_tag() == v.domain_tag());
  std::remove(path.c_str());
}
