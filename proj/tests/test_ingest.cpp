#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"
#include "wsindex/error.hpp"
#include "wsindex/ingest.hpp"

using namespace wsindex;
using fixtures::medline_record;
using fixtures::medline_set;

TEST_SUITE("ingest") {
  TEST_CASE("structured abstract sections are joined with a space") {
    const auto r = parse_medline_xml(medline_set({medline_record("1", "T", {"A.", "B."}, {"D000544"})}));
    REQUIRE(r.articles.size() == 1);
    CHECK(r.articles[0].abstract == "A. B.");
    CHECK(r.articles[0].text() == "T A. B.");
  }

  TEST_CASE("missing abstract gives an empty string") {
    const auto r = parse_medline_xml(medline_set({medline_record("2", "Title only", {}, {})}));
    REQUIRE(r.articles.size() == 1);
    CHECK(r.articles[0].abstract.empty());
    CHECK(r.articles[0].title == "Title only");
  }

  TEST_CASE("every MeshHeading descriptor is kept") {
    const auto r = parse_medline_xml(
        medline_set({medline_record("3", "T", {"x"}, {"D1", "D2", "D3", "D4", "D000544"})}));
    CHECK(r.articles[0].descriptor_ids ==
          std::vector<std::string>{"D1", "D2", "D3", "D4", "D000544"});
  }

  TEST_CASE("malformed XML is a parse error at a byte offset") {
    try {
      parse_medline_xml("<PubmedArticleSet><PubmedArticle><MedlineCitation>");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.unit() == ParseError::Unit::Byte);
    }
  }

  TEST_CASE("a record without PMID is rejected and the rest kept") {
    const std::string bad =
        "<PubmedArticle><MedlineCitation><Article><ArticleTitle>x</ArticleTitle></Article>"
        "</MedlineCitation></PubmedArticle>";
    const auto r = parse_medline_xml(medline_set({bad, medline_record("9", "ok", {}, {})}));
    REQUIRE(r.articles.size() == 1);
    CHECK(r.articles[0].pmid == "9");
    CHECK(r.rejected.size() == 1);
  }

  TEST_CASE("attribute order and whitespace do not change the result") {
    const std::string a =
        "<PubmedArticleSet><PubmedArticle><MedlineCitation Status=\"MEDLINE\" Owner=\"NLM\">"
        "<PMID Version=\"1\">5</PMID><Article><ArticleTitle>Tau</ArticleTitle></Article>"
        "<MeshHeadingList><MeshHeading><DescriptorName UI=\"D1\" MajorTopicYN=\"N\">x</DescriptorName>"
        "</MeshHeading></MeshHeadingList></MedlineCitation></PubmedArticle></PubmedArticleSet>";
    const std::string b =
        "<PubmedArticleSet>\n  <PubmedArticle>\n    <MedlineCitation Owner=\"NLM\" Status=\"MEDLINE\">\n"
        "      <PMID Version=\"1\">5</PMID>\n      <Article>\n        <ArticleTitle>Tau</ArticleTitle>\n"
        "      </Article>\n      <MeshHeadingList>\n        <MeshHeading>\n"
        "          <DescriptorName MajorTopicYN=\"N\" UI=\"D1\">x</DescriptorName>\n"
        "        </MeshHeading>\n      </MeshHeadingList>\n    </MedlineCitation>\n"
        "  </PubmedArticle>\n</PubmedArticleSet>\n";
    CHECK(parse_medline_xml(a).articles == parse_medline_xml(b).articles);
  }

  TEST_CASE("JSONL round trip preserves the corpus") {
    fixtures::TempDir tmp;
    Corpus c;
    c.articles.push_back({"10", "Alzheimer \"disease\"", "β-amyloid\nplaques", {"D000544"}});
    c.articles.push_back({"11", "", "", {}});
    save_corpus(c, tmp / "c.jsonl");
    CHECK(load_corpus(tmp / "c.jsonl") == c);
  }

  TEST_CASE("duplicate pmids are rejected") {
    fixtures::TempDir tmp;
    std::ofstream(tmp / "dup.jsonl") << R"({"pmid":"1","title":"a","abstract":"","descriptor_ids":[]})"
                                     << "\n"
                                     << R"({"pmid":"1","title":"b","abstract":"","descriptor_ids":[]})"
                                     << "\n";
    try {
      load_corpus(tmp / "dup.jsonl");
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.rule() == "pmid-unique");
    }
  }

  TEST_CASE("malformed JSONL names the line") {
    fixtures::TempDir tmp;
    std::ofstream(tmp / "bad.jsonl") << R"({"pmid":"1","title":"a","abstract":"","descriptor_ids":[]})"
                                     << "\n{oops\n";
    try {
      load_corpus(tmp / "bad.jsonl");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.unit() == ParseError::Unit::Line);
      CHECK(e.offset() == 2);
    }
  }

  TEST_CASE("an empty file is an empty corpus") {
    fixtures::TempDir tmp;
    std::ofstream(tmp / "e.jsonl");
    CHECK(load_corpus(tmp / "e.jsonl").size() == 0);
  }

  TEST_CASE("descriptor restriction is enforced") {
    Corpus c;
    c.descriptor_id = "D000544";
    c.articles.push_back({"1", "t", "", {"D1"}});
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.articles[0].descriptor_ids.push_back("D000544");
    CHECK_NOTHROW(c.validate());
  }
}
