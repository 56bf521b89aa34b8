#include <doctest.h>

#include <array>
#include <functional>

#include "fixtures.hpp"
#include "wsindex/error.hpp"
#include "wsindex/features.hpp"
#include "wsindex/label_matrix.hpp"
#include "wsindex/learn.hpp"
#include "wsindex/rng.hpp"

using namespace wsindex;

namespace {

struct Dataset {
  FeatureMatrix x;
  LabelMatrix y;
};

FeatureMatrix weighted(const std::vector<std::vector<CsrMatrix::Entry>>& rows, std::size_t nf) {
  std::vector<std::pair<FeatureKind, std::string>> defs;
  for (std::size_t f = 0; f < nf; ++f) defs.emplace_back(FeatureKind::Lexical, "w" + std::to_string(f));
  FeatureMatrix raw;
  raw.space = std::make_shared<const FeatureSpace>(defs);
  raw.values = CsrMatrix(nf);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    raw.pmids.push_back(std::to_string(r + 1));
    raw.values.add_row(rows[r]);
  }
  return tfidf(raw);
}

// Three labels, each driven by two of eight features, with some noise.
Dataset multilabel(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<CsrMatrix::Entry>> rows;
  std::vector<std::array<bool, 3>> ys;
  for (std::size_t r = 0; r < n; ++r) {
    std::array<bool, 3> y{};
    std::vector<CsrMatrix::Entry> e;
    for (std::uint32_t l = 0; l < 3; ++l) {
      y[l] = rng.bernoulli(0.35);
      if (y[l] ? rng.bernoulli(0.9) : rng.bernoulli(0.05)) e.emplace_back(2 * l, 1.0 + rng.below(3));
      if (y[l] ? rng.bernoulli(0.6) : rng.bernoulli(0.1)) e.emplace_back(2 * l + 1, 1.0);
    }
    e.emplace_back(6 + static_cast<std::uint32_t>(rng.below(2)), 1.0);
    rows.push_back(e);
    ys.push_back(y);
  }
  Dataset d{weighted(rows, 8), {}};
  d.y = LabelMatrix(d.x.pmids, {"A", "B", "C"}, LabelMatrix::Kind::Weak);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t l = 0; l < 3; ++l) d.y.set(r, l, ys[r][l]);
  }
  return d;
}

std::vector<TrainConfig> all_configs() {
  std::vector<TrainConfig> out;
  for (auto c : {Classifier::LogReg, Classifier::LinearSvm}) {
    for (auto p : {linear::Penalty::L1, linear::Penalty::L2}) {
      TrainConfig cfg;
      cfg.classifier = c;
      cfg.penalty = p;
      cfg.seed = 3;
      out.push_back(cfg);
    }
  }
  TrainConfig tree;
  tree.classifier = Classifier::DecisionTree;
  out.push_back(tree);
  TrainConfig forest;
  forest.classifier = Classifier::RandomForest;
  forest.tree.n_trees = 15;
  forest.seed = 3;
  out.push_back(forest);
  return out;
}

std::string rule_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.rule();
  }
  return "";
}

}  // namespace

TEST_SUITE("learn") {
  TEST_CASE("names and config validation") {
    CHECK(classifier_from_string("lrc") == Classifier::LogReg);
    CHECK(classifier_from_string("linear_svm") == Classifier::LinearSvm);
    CHECK(classifier_from_string("rfc") == Classifier::RandomForest);
    CHECK_THROWS_AS(classifier_from_string("knn"), ValidationError);
    TrainConfig c;
    c.C = 0;
    CHECK(rule_of([&] { c.validate(); }) == "C-positive");
    c.C = 1;
    c.tree.n_trees = 0;
    CHECK(rule_of([&] { c.validate(); }) == "n-trees");
    c.tree.n_trees = 10;
    c.tree.feature_subsample = 1.5;
    CHECK(rule_of([&] { c.validate(); }) == "feature-subsample");
  }

  TEST_CASE("config json round trip") {
    for (auto cfg : all_configs()) {
      cfg.tree.max_depth = 4;
      cfg.tree.feature_subsample = 0.25;
      const auto back = train_config_from_json(train_config_to_json(cfg));
      CHECK(train_config_to_json(back).dump() == train_config_to_json(cfg).dump());
    }
  }

  TEST_CASE("separable pair reproduces its labels") {
    const auto x = weighted({{{0, 1.0}}, {{1, 1.0}}}, 2);
    LabelMatrix y(x.pmids, {"A"}, LabelMatrix::Kind::Weak);
    y.set(0, 0, true);
    const auto model = train(x, y, {"A"}, TrainConfig{});
    const auto p = predict(model, x);
    CHECK(p.kind() == LabelMatrix::Kind::Predicted);
    CHECK(p.at(0, 0));
    CHECK_FALSE(p.at(1, 0));
  }

  TEST_CASE("zero row with negative intercept predicts nothing") {
    const auto x = weighted({{{0, 1.0}}, {}}, 1);
    OvrModel m;
    m.space = x.space;
    m.label_ids = {"A"};
    m.models.push_back({"A", LinearWeights{{5.0}, -0.5}});
    const auto p = predict(m, x);
    CHECK(p.at(0, 0));
    CHECK_FALSE(p.at(1, 0));
    CHECK(p.row_empty(1));
  }

  TEST_CASE("every classifier learns the multilabel task") {
    const auto train_set = multilabel(300, 1);
    const auto test_set = multilabel(200, 2);
    for (const auto& cfg : all_configs()) {
      CAPTURE(to_string(cfg.classifier));
      const auto model = train(train_set.x, train_set.y, {"A", "B", "C"}, cfg);
      CHECK(model.models.size() == 3);
      const auto p = predict(model, test_set.x);
      std::size_t agree = 0;
      for (std::size_t r = 0; r < p.rows(); ++r) {
        for (std::size_t c = 0; c < 3; ++c) agree += p.at(r, c) == test_set.y.at(r, c);
      }
      CHECK(agree >= 0.85 * 600);
    }
  }

  TEST_CASE("training is deterministic and independent of label order and workers") {
    const auto d = multilabel(150, 3);
    for (const auto& cfg : all_configs()) {
      const auto a = train(d.x, d.y, {"A", "B", "C"}, cfg);
      const auto b = train(d.x, d.y, {"A", "B", "C"}, cfg, {.workers = 3});
      CHECK(model_to_json(a) == model_to_json(b));
      const auto rev = train(d.x, d.y, {"C", "B", "A"}, cfg);
      CHECK(nlohmann::json::parse(model_to_json(rev))["models"][0] ==
            nlohmann::json::parse(model_to_json(a))["models"][2]);
    }
  }

  TEST_CASE("single-class labels are reported together") {
    const auto d = multilabel(40, 4);
    LabelMatrix y(d.x.pmids, {"A", "B", "C"}, LabelMatrix::Kind::Weak);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      y.set(r, 0, r % 2 == 0);
      y.set(r, 1, true);
    }
    try {
      train(d.x, y, {"A", "B", "C"}, TrainConfig{});
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.rule() == "single-class-label");
      CHECK(std::string(e.what()).find("B") != std::string::npos);
      CHECK(std::string(e.what()).find("C") != std::string::npos);
    }
    const auto m = train(d.x, y, {"A", "B", "C"}, TrainConfig{}, {.skip_single_class = true});
    CHECK(m.label_ids == std::vector<std::string>{"A"});
    CHECK(m.warnings.size() == 2);
  }

  TEST_CASE("raw features and foreign spaces are rejected") {
    const auto d = multilabel(30, 5);
    auto raw = d.x;
    raw.weighted = false;
    CHECK(rule_of([&] { train(raw, d.y, {"A"}, TrainConfig{}); }) == "unweighted-features");
    const auto model = train(d.x, d.y, {"A"}, TrainConfig{});
    const auto other = weighted({{{0, 1.0}}}, 3);
    CHECK(rule_of([&] { predict(model, other); }) == "space-mismatch");
  }

  TEST_CASE("non-convergence is a warning") {
    const auto d = multilabel(100, 6);
    TrainConfig cfg;
    cfg.C = 10;
    cfg.optimizer.max_iters = 2;
    const auto m = train(d.x, d.y, {"A", "B", "C"}, cfg);
    CHECK_FALSE(m.warnings.empty());
    CHECK(m.warnings[0].find("did not converge") != std::string::npos);
  }

  TEST_CASE("model json round trip") {
    fixtures::TempDir tmp;
    const auto d = multilabel(80, 7);
    for (const auto& cfg : all_configs()) {
      const auto m = train(d.x, d.y, {"A", "B", "C"}, cfg);
      save_model(m, tmp / "m.json");
      const auto back = load_model(tmp / "m.json");
      CHECK(model_to_json(back) == model_to_json(m));
      CHECK(predict(back, d.x) == predict(m, d.x));
    }
    CHECK_THROWS_AS(model_from_json(R"({"format":"other"})"), ValidationError);
  }

  TEST_CASE("relabeling a perfect model is a fixed point") {
    const auto x = weighted({{{0, 1.0}}, {{0, 2.0}}, {{1, 1.0}}, {{1, 3.0}}}, 2);
    LabelMatrix y(x.pmids, {"A"}, LabelMatrix::Kind::Weak);
    y.set(0, 0, true);
    y.set(1, 0, true);
    const auto first = train(x, y, {"A"}, TrainConfig{});
    const auto r = relabel_and_retrain(first, x, y, TrainConfig{});
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.relabeled.at(i, 0) == r.original.at(i, 0));
    CHECK(model_to_json(r.retrained) == model_to_json(r.first));
    CHECK(r.warnings.empty());
  }

  TEST_CASE("relabeling fills planted false negatives") {
    // 30 weak positives and 10 golden positives whose label term was missed
    // share signature feature 0; 40 negatives carry feature 1 only.
    std::vector<std::vector<CsrMatrix::Entry>> rows;
    for (int i = 0; i < 40; ++i) rows.push_back({{0, 1.0}});
    for (int i = 0; i < 40; ++i) rows.push_back({{1, 1.0}});
    const auto x = weighted(rows, 2);
    LabelMatrix y(x.pmids, {"A"}, LabelMatrix::Kind::Weak);
    for (std::size_t i = 0; i < 30; ++i) y.set(i, 0, true);
    const auto first = train(x, y, {"A"}, TrainConfig{});
    const auto r = relabel_and_retrain(first, x, y, TrainConfig{});
    CHECK(r.relabeled.kind() == LabelMatrix::Kind::Weak);
    for (std::size_t i = 0; i < 80; ++i) {
      const bool planted = i >= 30 && i < 40;
      CHECK((r.relabeled.at(i, 0) != r.original.at(i, 0)) == planted);
    }
  }

  TEST_CASE("a relabeled label without positives is skipped") {
    std::vector<std::vector<CsrMatrix::Entry>> rows;
    for (int i = 0; i < 60; ++i) rows.push_back({{static_cast<std::uint32_t>(i % 3), 1.0}});
    const auto x = weighted(rows, 3);
    LabelMatrix y(x.pmids, {"A", "B"}, LabelMatrix::Kind::Weak);
    for (std::size_t i = 0; i < 60; ++i) y.set(i, 0, i % 3 == 0);
    y.set(1, 1, true);  // one positive: the first model never predicts B
    const TrainConfig cfg;
    const auto first = train(x, y, {"A", "B"}, cfg);
    const auto r = relabel_and_retrain(first, x, y, cfg);
    CHECK(r.retrained.label_ids == std::vector<std::string>{"A"});
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("B") != std::string::npos);
  }
}
