#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "fixtures.hpp"
#include "wsindex/error.hpp"
#include "wsindex/features.hpp"
#include "wsindex/label_matrix.hpp"
#include "wsindex/recognizer.hpp"
#include "wsindex/rng.hpp"
#include "wsindex/synth.hpp"
#include "wsindex/weaklabel.hpp"

using namespace wsindex;

namespace {

FeatureMatrix dense(const std::vector<std::vector<double>>& rows, std::size_t n_semantic = 0) {
  const std::size_t nf = rows.empty() ? 0 : rows[0].size();
  std::vector<std::pair<FeatureKind, std::string>> defs;
  for (std::size_t f = 0; f < nf; ++f) {
    const bool sem = f >= nf - n_semantic;
    defs.emplace_back(sem ? FeatureKind::Semantic : FeatureKind::Lexical, "f" + std::to_string(f));
  }
  FeatureMatrix m;
  m.space = std::make_shared<const FeatureSpace>(defs);
  m.values = CsrMatrix(nf);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    m.pmids.push_back(std::to_string(r + 1));
    std::vector<CsrMatrix::Entry> e;
    for (std::size_t f = 0; f < nf; ++f) e.emplace_back(static_cast<std::uint32_t>(f), rows[r][f]);
    m.values.add_row(std::move(e));
  }
  return m;
}

LabelMatrix labels(const std::vector<std::vector<int>>& cols, const std::vector<std::string>& ids) {
  const std::size_t n = cols[0].size();
  std::vector<std::string> pmids;
  for (std::size_t r = 0; r < n; ++r) pmids.push_back(std::to_string(r + 1));
  LabelMatrix m(pmids, ids, LabelMatrix::Kind::Weak);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t r = 0; r < n; ++r) m.set(r, c, cols[c][r] != 0);
  }
  return m;
}

// Textbook two-class statistics computed directly from dense columns.
double oracle_chi2(const std::vector<double>& x, const std::vector<int>& y) {
  double o[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    o[y[i]] += x[i];
    n[y[i]] += 1;
  }
  const double total = o[0] + o[1], all = n[0] + n[1];
  double s = 0;
  for (int c = 0; c < 2; ++c) {
    const double e = total * n[c] / all;
    s += (o[c] - e) * (o[c] - e) / e;
  }
  return s;
}

double oracle_anova(const std::vector<double>& x, const std::vector<int>& y) {
  double sum[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum[y[i]] += x[i];
    n[y[i]] += 1;
  }
  const double mean[2] = {sum[0] / n[0], sum[1] / n[1]};
  const double grand = (sum[0] + sum[1]) / (n[0] + n[1]);
  double ssb = 0, ssw = 0;
  for (int c = 0; c < 2; ++c) ssb += n[c] * (mean[c] - grand) * (mean[c] - grand);
  for (std::size_t i = 0; i < x.size(); ++i) ssw += (x[i] - mean[y[i]]) * (x[i] - mean[y[i]]);
  return (ssb / 1.0) / (ssw / (n[0] + n[1] - 2.0));
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("tokenize examples") {
    CHECK(tokenize("Early-onset AD (PS1 mutation)") ==
          std::vector<std::string>{"early", "onset", "ad", "ps1", "mutation"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("β-amyloid") == std::vector<std::string>{"β", "amyloid"});
  }

  TEST_CASE("lexical counts and binary semantic values") {
    Corpus c;
    c.articles = {{"1", "Familial familial", "familial disease", {}},
                  {"2", "familial disease", "", {}},
                  {"3", "", "", {}}};
    std::vector<ConceptOccurrence> occ;
    for (int i = 0; i < 4; ++i) occ.push_back({"1", "FAD", "fad", 0, 3, OccurrenceSource::Imported});
    occ.push_back({"2", "X", "x", 0, 1, OccurrenceSource::Imported});
    const auto m = build_features(c, occ);
    const auto fam = m.space->find(FeatureKind::Lexical, "familial");
    const auto fad = m.space->find(FeatureKind::Semantic, "FAD");
    REQUIRE(fam);
    REQUIRE(fad);
    CHECK(m.values.at(0, *fam) == 3.0);
    CHECK(m.values.at(0, *fad) == 1.0);
    CHECK(m.values.row_indices(2).empty());
    // tokens below the document frequency threshold are dropped
    CHECK_FALSE(m.space->find(FeatureKind::Lexical, "1"));
    CHECK(m.space->find(FeatureKind::Lexical, "disease"));
    CHECK((*m.space)[0].kind == FeatureKind::Lexical);
    CHECK(m.space->features().back().kind == FeatureKind::Semantic);
  }

  TEST_CASE("tfidf examples") {
    auto one = tfidf(dense({{1.0}}));
    CHECK(fit_idf(dense({{1.0}})) == std::vector<double>{1.0});
    CHECK(one.values.at(0, 0) == doctest::Approx(1.0));
    CHECK(one.weighted);

    CHECK(fit_idf(dense({{1, 0}, {2, 1}, {1, 0}}))[0] == doctest::Approx(1.0));
    const auto two = tfidf(dense({{3, 1}, {1, 2}}));
    CHECK(two.values.at(0, 0) == doctest::Approx(3 / std::sqrt(10.0)));
    CHECK(two.values.at(0, 1) == doctest::Approx(1 / std::sqrt(10.0)));
    const auto idf = fit_idf(dense({{1, 0}, {0, 0}, {1, 1}}));
    CHECK(idf[1] == doctest::Approx(std::log(4.0 / 2.0) + 1.0));
  }

  TEST_CASE("weighted rows have unit norm") {
    Rng rng(5);
    std::vector<std::vector<double>> rows(40, std::vector<double>(12, 0.0));
    for (auto& r : rows) {
      for (auto& v : r) v = rng.bernoulli(0.3) ? static_cast<double>(1 + rng.below(5)) : 0.0;
    }
    const auto w = tfidf(dense(rows));
    for (std::size_t r = 0; r < w.values.rows(); ++r) {
      double norm = 0;
      for (double v : w.values.row_values(r)) {
        CHECK(v >= 0.0);
        norm += v * v;
      }
      if (!w.values.row_indices(r).empty()) CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    }
  }

  TEST_CASE("scoring examples") {
    const auto m = dense({{1}, {1}, {0}, {0}});
    const auto y = labels({{1, 1, 0, 0}}, {"A"});
    CHECK(score_features(m, y, {"A"}, SelectionMethod::Chi2).scores[0][0] == doctest::Approx(2.0));
    CHECK(score_features(m, y, {"A"}, SelectionMethod::AnovaF).scores[0][0] ==
          std::numeric_limits<double>::infinity());
    const auto flat = dense({{1}, {2}, {1}, {2}});
    CHECK(score_features(flat, labels({{1, 1, 0, 0}}, {"A"}), {"A"}, SelectionMethod::AnovaF)
              .scores[0][0] == 0.0);
  }

  TEST_CASE("single-class labels score zero and are flagged") {
    const auto s = score_features(dense({{1}, {0}}), labels({{1, 1}}, {"A"}), {"A"}, SelectionMethod::Chi2);
    CHECK(s.scores[0][0] == 0.0);
    CHECK(s.degenerate_labels == std::vector<std::string>{"A"});
  }

  TEST_CASE("scores agree with a brute-force computation") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::vector<double>> rows(20, std::vector<double>(10, 0.0));
      for (auto& r : rows) {
        for (auto& v : r) v = rng.bernoulli(0.6) ? rng.uniform() * 4 : 0.0;
      }
      for (std::size_t f = 0; f < 10; ++f) rows[f][f] += 0.5;  // every column has mass
      std::vector<std::vector<int>> ycols(2, std::vector<int>(20));
      for (auto& col : ycols) {
        for (auto& v : col) v = rng.bernoulli(0.4) ? 1 : 0;
        col[0] = 1;
        col[1] = 0;
      }
      const auto m = dense(rows);
      const auto y = labels(ycols, {"A", "B"});
      const auto chi = score_features(m, y, {"A", "B"}, SelectionMethod::Chi2);
      const auto f = score_features(m, y, {"A", "B"}, SelectionMethod::AnovaF);
      for (std::size_t l = 0; l < 2; ++l) {
        for (std::size_t j = 0; j < 10; ++j) {
          std::vector<double> x;
          for (const auto& r : rows) x.push_back(r[j]);
          const double ec = oracle_chi2(x, ycols[l]);
          const double ef = oracle_anova(x, ycols[l]);
          CHECK(std::abs(chi.scores[l][j] - ec) <= 1e-9 * std::max(1.0, std::abs(ec)));
          CHECK(std::abs(f.scores[l][j] - ef) <= 1e-9 * std::max(1.0, std::abs(ef)));
        }
      }
    }
  }

  TEST_CASE("top-k selection") {
    // feature 2 equals the label, feature 3 is semantic for a C_t concept
    const auto m = dense({{1, 0, 1, 1}, {0, 1, 1, 1}, {1, 1, 0, 0}, {0, 0, 0, 0}}, 1);
    auto space = std::make_shared<const FeatureSpace>(std::vector<std::pair<FeatureKind, std::string>>{
        {FeatureKind::Lexical, "a"}, {FeatureKind::Lexical, "b"}, {FeatureKind::Lexical, "c"},
        {FeatureKind::Semantic, "DMD"}});
    auto fm = m;
    fm.space = space;
    const auto y = labels({{1, 1, 0, 0}}, {"DMD"});
    const auto scores = score_features(fm, y, {"DMD"}, SelectionMethod::AnovaF);
    const auto d = fixtures::duchenne();
    SelectorConfig cfg;
    cfg.k = 1;
    CHECK(select_top_k(scores, *space, cfg, d)[0].id == 2);
    cfg.k = 2;
    const auto both = select_top_k(scores, *space, cfg, d);
    CHECK(both[1].id == 3);
    cfg.exclude_ct_concepts = true;
    cfg.k = 3;
    for (const auto& r : select_top_k(scores, *space, cfg, d)) CHECK(r.id != 3);
    cfg.k = 4;
    try {
      select_top_k(scores, *space, cfg, d);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.rule() == "k-exceeds-features");
    }
    CHECK(select_top_k(scores, *space, {SelectionMethod::AnovaF, 2, false, Aggregation::Max}, d)[0].id ==
          2);
  }

  TEST_CASE("semantic target features rank first and equal the weak columns") {
    SyntheticSpec spec;
    spec.n_articles = 400;
    spec.seed = 21;
    spec.miss_rate = 0.2;
    spec.spurious_rate = 0.05;
    const auto data = generate_synthetic(spec);
    const auto dict = build_dictionary(data.descriptor, Granularity::TermLevel);
    const auto occ = recognize_corpus(data.corpus, dict);
    const auto weak = assign_weak_labels(data.corpus, occ, data.descriptor);
    const auto targets = target_labels(weak, data.descriptor);
    const auto raw = build_features(data.corpus, occ);

    for (const auto& c : data.descriptor.concept_ids()) {
      const auto f = raw.space->find(FeatureKind::Semantic, c);
      if (!f) {
        CHECK(weak.support(*weak.column(c)) == 0);
        continue;
      }
      for (std::size_t r = 0; r < raw.values.rows(); ++r) {
        CHECK((raw.values.at(r, *f) != 0.0) == weak.at(r, *weak.column(c)));
      }
    }

    const auto w = tfidf(raw);
    const auto scores = score_features(w, weak, targets, SelectionMethod::AnovaF);
    SelectorConfig cfg;
    cfg.k = 30;
    const auto top = select_top_k(scores, *w.space, cfg, data.descriptor);
    std::set<std::string> first;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& def = (*w.space)[top[i].id];
      CHECK(def.kind == FeatureKind::Semantic);
      first.insert(def.key);
    }
    CHECK(first == std::set<std::string>(targets.begin(), targets.end()));
    CHECK(top == select_top_k(scores, *w.space, cfg, data.descriptor));
  }

  TEST_CASE("feature bundle round trip and projection") {
    fixtures::TempDir tmp;
    const auto raw = dense({{1, 0, 2}, {0, 3, 0}}, 1);
    FeatureBundle b{raw, fit_idf(raw)};
    save_feature_bundle(b, tmp / "f.json");
    const auto back = load_feature_bundle(tmp / "f.json");
    CHECK(back.matrix.pmids == raw.pmids);
    CHECK(back.matrix.values == raw.values);
    CHECK(*back.matrix.space == *raw.space);
    CHECK(back.matrix.space->digest() == raw.space->digest());
    CHECK(back.idf == b.idf);
    CHECK(*space_from_json(space_to_json(*raw.space)) == *raw.space);

    const auto reduced = reduce_space(*raw.space, b.idf, {2, 0});
    const auto proj = project(raw, reduced);
    CHECK(proj.values.cols() == 2);
    CHECK(proj.values.at(0, 0) == 2.0);
    CHECK(proj.values.at(0, 1) == 1.0);
    CHECK(select_feature_rows(raw, {"2"}).values.at(0, 1) == 3.0);
  }
}
