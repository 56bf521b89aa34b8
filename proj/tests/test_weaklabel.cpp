#include <doctest.h>

#include "fixtures.hpp"
#include "wsindex/error.hpp"
#include "wsindex/label_matrix.hpp"
#include "wsindex/rng.hpp"
#include "wsindex/weaklabel.hpp"

using namespace wsindex;

namespace {

ConceptOccurrence occ(std::string pmid, std::string concept_id) {
  ConceptOccurrence o;
  o.pmid = std::move(pmid);
  o.concept_id = std::move(concept_id);
  return o;
}

Corpus corpus_of(std::size_t n) {
  Corpus c;
  for (std::size_t i = 0; i < n; ++i) c.articles.push_back({std::to_string(i + 1), "t", "", {}});
  return c;
}

}  // namespace

TEST_SUITE("weaklabel") {
  TEST_CASE("examples") {
    const auto d = fixtures::alzheimer();
    const auto m = assign_weak_labels(corpus_of(3), {occ("1", "EOAD"), occ("2", "AD"), occ("2", "AD"),
                                                     occ("3", "C0011265")},
                                      d);
    CHECK(m.kind() == LabelMatrix::Kind::Weak);
    CHECK(m.label_ids() == d.concept_ids());
    for (std::size_t c = 0; c < m.cols(); ++c) {
      CHECK(m.at(0, c) == (m.label_ids()[c] == "EOAD"));
      CHECK(m.at(1, c) == (m.label_ids()[c] == "AD"));
    }
    CHECK(m.row_empty(2));
  }

  TEST_CASE("target labels drop zero-support labels and the top concept") {
    const auto d = fixtures::alzheimer();
    // supports from the initial AD dataset, scaled down
    const std::vector<std::pair<std::string, int>> support = {
        {"AD", 50}, {"PD", 15}, {"FAD", 93}, {"EOAD", 67}, {"LOAD", 37}, {"FOAD", 0}, {"ACSD", 0}};
    std::vector<ConceptOccurrence> o;
    int pmid = 0;
    for (const auto& [label, n] : support) {
      for (int i = 0; i < n; ++i) o.push_back(occ(std::to_string(++pmid), label));
    }
    const auto m = assign_weak_labels(corpus_of(pmid), o, d);
    CHECK(target_labels(m, d) == std::vector<std::string>{"PD", "EOAD", "LOAD", "FAD"});
    CHECK(target_labels(m, d, 40) == std::vector<std::string>{"EOAD", "FAD"});
    try {
      target_labels(m, d, 1000);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.rule() == "no-trainable-labels");
    }
  }

  TEST_CASE("Duchenne targets") {
    const auto d = fixtures::duchenne();
    const auto m = assign_weak_labels(corpus_of(3), {occ("1", "DMD"), occ("2", "BMD"), occ("3", "DBMD")}, d);
    CHECK(target_labels(m, d) == std::vector<std::string>{"DMD", "BMD"});
  }

  TEST_CASE("weak cells equal a brute-force scan of the occurrences") {
    const auto d = fixtures::alzheimer();
    const auto ids = d.concept_ids();
    Rng rng(17);
    const auto corpus = corpus_of(80);
    std::vector<ConceptOccurrence> o;
    for (int i = 0; i < 200; ++i) {
      const bool outside = rng.bernoulli(0.1);
      o.push_back(occ(std::to_string(1 + rng.below(80)), outside ? "X" : ids[rng.below(ids.size())]));
    }
    const auto m = assign_weak_labels(corpus, o, d);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        bool expected = false;
        for (const auto& x : o) expected = expected || (x.pmid == m.pmids()[r] && x.concept_id == ids[c]);
        CHECK(m.at(r, c) == expected);
      }
    }
    const auto t = target_labels(m, d);
    CHECK(std::find(t.begin(), t.end(), d.top_concept_id) == t.end());
  }

  TEST_CASE("label matrix serializations round-trip") {
    LabelMatrix m({"3", "1", "2"}, {"PD", "FAD"}, LabelMatrix::Kind::Golden);
    m.set(0, 1, true);
    m.set(2, 0, true);
    m.set(2, 1, true);
    CHECK(label_matrix_from_csv(label_matrix_to_csv(m), LabelMatrix::Kind::Golden) == m);
    CHECK(label_matrix_from_json(label_matrix_to_json(m)) == m);
    CHECK(m.support(1) == 2);
    CHECK(m.select_rows({"2", "3"}).at(0, 0));
    CHECK(m.select_columns({"FAD"}).cols() == 1);
    CHECK_THROWS_AS(label_matrix_from_csv("pmid,A\n1,2\n", LabelMatrix::Kind::Golden), Error);
  }
}
