#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "protoem/corpus.hpp"
#include "support/fixture_matrix.hpp"
#include "support/test_support.hpp"

using namespace protoem;

namespace {

std::string write_lines(const std::string& name, const std::vector<std::string>& lines) {
  std::string path = std::string("corpus_test_") + name + ".jsonl";
  std::ofstream os(path);
  for (const auto& l : lines) os << l << "\n";
  return path;
}

}  // namespace

TEST_CASE("fixture corpus loads with expected statistics") {
  Corpus corpus = load_corpus(testing::fixture_corpus_path());
  CorpusStats st = corpus.stats();
  CHECK(st.documents == 3);
  CHECK(st.mentions == 8);
  CHECK(st.timex == 1);
  CHECK(st.skipped_relations == 1);  // the TIMEX-anchored relation
  // coreference gold is symmetrized onto both orders
  CHECK(st.gold_entries[static_cast<std::size_t>(Task::Coreference)] == 2);
  CHECK(st.gold_entries[static_cast<std::size_t>(Task::Temporal)] == 4);
}

TEST_CASE("empty file gives an empty corpus") {
  auto path = write_lines("empty", {});
  Corpus corpus = load_corpus(path);
  CHECK(corpus.docs.empty());
  std::remove(path.c_str());
}

TEST_CASE("malformed record names the line") {
  auto path = write_lines("bad", {R"({"id":"d1","tokens":[["a"]],"events":[]})", "{not json"});
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2:"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("duplicate doc ids are an integrity error") {
  const std::string doc = R"({"id":"dup","tokens":[["a"]],"events":[]})";
  auto path = write_lines("dup", {doc, doc});
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("duplicate doc_id"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("mention span outside its sentence is rejected") {
  auto path = write_lines(
      "span", {R"({"id":"d","tokens":[["a","b"]],"events":[{"id":"E","mention":[{"id":"m","sent_id":0,"offset":[1,3]}]}]})"});
  CHECK_THROWS_AS(load_corpus(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("enumerate_pairs produces ordered pairs with projected labels") {
  Corpus corpus = load_corpus(testing::fixture_corpus_path());
  const Document* d1 = corpus.find("fix1");
  REQUIRE(d1 != nullptr);
  auto pairs = enumerate_pairs(*d1);
  CHECK(pairs.size() == 6);  // 3 mentions -> 3*2 ordered pairs

  Taxonomy tax;
  auto find_pair = [&](const std::string& s, const std::string& t) -> const LabeledPair& {
    for (const auto& p : pairs)
      if (p.src == s && p.dst == t) return p;
    REQUIRE(false);
    return pairs.front();
  };
  const auto& ab = find_pair("m_a", "m_b");
  CHECK(tax.task_labels(Task::Temporal)[ab.label(Task::Temporal)] == "Before");
  CHECK(tax.task_labels(Task::Causal)[ab.label(Task::Causal)] == "Cause");
  CHECK(ab.label(Task::Subevent) == 0);
  CHECK(ab.label(Task::Coreference) == 0);
  const auto& ba = find_pair("m_b", "m_a");
  for (Task t : kAllTasks) CHECK(ba.label(t) == 0);
}

TEST_CASE("single-mention and empty documents give no pairs") {
  Document d;
  d.doc_id = "x";
  d.sentences = {{"one", "word"}};
  CHECK(enumerate_pairs(d).empty());
  d.mentions.push_back({"m1", 0, 0, 1, "E1"});
  CHECK(enumerate_pairs(d).empty());
}

TEST_CASE("coreference gold is symmetric") {
  Corpus corpus = load_corpus(testing::fixture_corpus_path());
  const Document* d2 = corpus.find("fix2");
  REQUIRE(d2 != nullptr);
  const auto& coref = d2->gold.task(Task::Coreference);
  CHECK(coref.count({"m_d", "m_e"}) == 1);
  CHECK(coref.count({"m_e", "m_d"}) == 1);
}

TEST_CASE("sample_low_resource sizes and determinism") {
  Corpus corpus = testing::synthetic_corpus(20);
  Corpus half1 = sample_low_resource(corpus, 0.5, 7);
  Corpus half2 = sample_low_resource(corpus, 0.5, 7);
  CHECK(half1.docs.size() == 10);
  REQUIRE(half1.docs.size() == half2.docs.size());
  for (std::size_t i = 0; i < half1.docs.size(); ++i)
    CHECK(half1.docs[i].doc_id == half2.docs[i].doc_id);

  Corpus all = sample_low_resource(corpus, 1.0, 3);
  CHECK(all.docs.size() == corpus.docs.size());
  for (std::size_t i = 0; i < all.docs.size(); ++i)
    CHECK(all.docs[i].doc_id == corpus.docs[i].doc_id);

  // ceil(0.005 * 2913) = 15, the 0.5% low-resource setting
  Corpus big;
  for (int i = 0; i < 2913; ++i) {
    Document d;
    d.doc_id = "d" + std::to_string(i);
    big.docs.push_back(d);
  }
  CHECK(sample_low_resource(big, 0.005, 1).docs.size() == 15);

  CHECK_THROWS_AS(sample_low_resource(corpus, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(sample_low_resource(corpus, 1.5, 1), ConfigError);
}

TEST_CASE("select_examples honors K, availability, and determinism") {
  Taxonomy tax;
  Corpus corpus = testing::synthetic_corpus(6);
  const int cause = tax.node_of(Task::Causal, "Cause");

  auto five = select_examples(corpus, tax, cause, 5, SelectionStrategy::TopK, 0);
  CHECK(five.size() == 5);

  // Overlap appears only in even-numbered documents: 3 gold instances here.
  const int overlap = tax.node_of(Task::Temporal, "Overlap");
  auto capped = select_examples(corpus, tax, overlap, 5, SelectionStrategy::TopK, 0);
  CHECK(capped.size() == 3);

  auto r1 = select_examples(corpus, tax, cause, 3, SelectionStrategy::Random, 7);
  auto r2 = select_examples(corpus, tax, cause, 3, SelectionStrategy::Random, 7);
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].doc_id == r2[i].doc_id);
    CHECK(r1[i].e1_start == r2[i].e1_start);
  }

  // topk is a pure function of the corpus: seed must not matter
  auto t1 = select_examples(corpus, tax, cause, 4, SelectionStrategy::TopK, 1);
  auto t2 = select_examples(corpus, tax, cause, 4, SelectionStrategy::TopK, 99);
  REQUIRE(t1.size() == t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i].doc_id == t2[i].doc_id);

  const int none_temporal = tax.node_of(Task::Temporal, "None");
  CHECK_THROWS_WITH_AS(select_examples(corpus, tax, none_temporal, 5, SelectionStrategy::TopK, 0),
                       doctest::Contains("build_none_prototype"), ConfigError);
}

TEST_CASE("examples cover both mentions and cap trims context only") {
  Taxonomy tax;
  Corpus corpus = load_corpus(testing::fixture_corpus_path());
  const Document* d1 = corpus.find("fix1");
  const EventMention* b = d1->find_mention("m_b");
  const EventMention* c = d1->find_mention("m_c");
  Example ex = make_example(*d1, *b, *c, tax.node_of(Task::Subevent, "Subevent"));
  // spans cover both sentences of fix1
  CHECK(ex.text.size() == 11);
  CHECK(ex.text[static_cast<std::size_t>(ex.e1_start)] == "collapse");
  CHECK(ex.text[static_cast<std::size_t>(ex.e2_start)] == "crumble");

  cap_example(ex, 8);
  CHECK(ex.text.size() == 8);
  CHECK(ex.text[static_cast<std::size_t>(ex.e1_start)] == "collapse");
  CHECK(ex.text[static_cast<std::size_t>(ex.e2_start)] == "crumble");
}

TEST_CASE("explicit coreference pair lists are accepted alongside event clusters") {
  auto path = write_lines(
      "coref_pairs",
      {R"({"id":"d","tokens":[["a","b","c"]],"events":[{"id":"E1","mention":[{"id":"m1","sent_id":0,"offset":[0,1]}]},{"id":"E2","mention":[{"id":"m2","sent_id":0,"offset":[1,2]}]},{"id":"E3","mention":[{"id":"m3","sent_id":0,"offset":[2,3]}]}],"coreference_relations":[["m1","m2"]]})"});
  Corpus corpus = load_corpus(path);
  const auto& coref = corpus.docs[0].gold.task(Task::Coreference);
  CHECK(coref.count({"m1", "m2"}) == 1);
  CHECK(coref.count({"m2", "m1"}) == 1);
  CHECK(coref.count({"m1", "m3"}) == 0);
  std::remove(path.c_str());
}

TEST_CASE("maven-style relation keys load as aliases") {
  auto path = write_lines(
      "maven_alias",
      {R"({"id":"d","tokens":[["a","b"]],"events":[{"id":"E1","mention":[{"id":"m1","sent_id":0,"offset":[0,1]}]},{"id":"E2","mention":[{"id":"m2","sent_id":0,"offset":[1,2]}]}],"temporal_relations":{"BEFORE":[["E1","E2"]]},"causal_relations":{"CAUSE":[["E1","E2"]]},"subevent_relations":[["E1","E2"]]})"});
  Corpus corpus = load_corpus(path);
  Taxonomy tax;
  const auto& doc = corpus.docs[0];
  CHECK(doc.gold.task(Task::Temporal).at({"m1", "m2"}) == "Before");
  CHECK(doc.gold.task(Task::Causal).at({"m1", "m2"}) == "Cause");
  CHECK(doc.gold.task(Task::Subevent).at({"m1", "m2"}) == "Subevent");
  std::remove(path.c_str());
}
