#include "wsindex/learn.hpp"

#include <algorithm>
#include <cmath>

#include "wsindex/digest.hpp"
#include "wsindex/error.hpp"
#include "wsindex/parallel.hpp"
#include "wsindex/rng.hpp"

namespace wsindex {

using json = nlohmann::ordered_json;

std::string_view to_string(Classifier c) {
  switch (c) {
    case Classifier::LogReg: return "logreg";
    case Classifier::LinearSvm: return "linear_svm";
    case Classifier::DecisionTree: return "decision_tree";
    case Classifier::RandomForest: return "random_forest";
  }
  return "?";
}

Classifier classifier_from_string(std::string_view s) {
  if (s == "logreg" || s == "lr" || s == "lrc") return Classifier::LogReg;
  if (s == "linear_svm" || s == "svm" || s == "lsvc") return Classifier::LinearSvm;
  if (s == "decision_tree" || s == "tree" || s == "dtc") return Classifier::DecisionTree;
  if (s == "random_forest" || s == "forest" || s == "rfc") return Classifier::RandomForest;
  throw ValidationError("classifier", "unknown classifier '" + std::string(s) + "'");
}

linear::Penalty penalty_from_string(std::string_view s) {
  if (s == "l1" || s == "L1") return linear::Penalty::L1;
  if (s == "l2" || s == "L2") return linear::Penalty::L2;
  throw ValidationError("penalty", "unknown penalty '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(C > 0) || !std::isfinite(C)) throw ValidationError("C-positive", "C must be a positive number");
  if (tree.n_trees == 0) throw ValidationError("n-trees", "n_trees must be at least 1");
  if (tree.min_leaf == 0) throw ValidationError("min-leaf", "min_leaf must be at least 1");
  if (tree.feature_subsample && !(*tree.feature_subsample > 0 && *tree.feature_subsample <= 1)) {
    throw ValidationError("feature-subsample", "feature_subsample must lie in (0, 1]");
  }
  if (optimizer.max_iters == 0) throw ValidationError("max-iters", "max_iters must be at least 1");
  if (!(optimizer.tol > 0)) throw ValidationError("tol", "tol must be positive");
}

json train_config_to_json(const TrainConfig& c) {
  json tree;
  tree["max_depth"] = c.tree.max_depth ? json(*c.tree.max_depth) : json(nullptr);
  tree["min_leaf"] = c.tree.min_leaf;
  tree["n_trees"] = c.tree.n_trees;
  tree["feature_subsample"] =
      c.tree.feature_subsample ? json(*c.tree.feature_subsample) : json(nullptr);
  json j;
  j["classifier"] = to_string(c.classifier);
  j["penalty"] = linear::to_string(c.penalty);
  j["C"] = c.C;
  j["tree"] = std::move(tree);
  j["seed"] = c.seed;
  j["optimizer"] = {{"max_iters", c.optimizer.max_iters}, {"tol", c.optimizer.tol}};
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("classifier")) c.classifier = classifier_from_string(j["classifier"].get<std::string>());
    if (j.contains("penalty")) c.penalty = penalty_from_string(j["penalty"].get<std::string>());
    if (j.contains("C")) c.C = j["C"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("tree")) {
      const auto& t = j["tree"];
      if (t.contains("max_depth") && !t["max_depth"].is_null()) {
        c.tree.max_depth = t["max_depth"].get<std::size_t>();
      }
      if (t.contains("min_leaf")) c.tree.min_leaf = t["min_leaf"].get<std::size_t>();
      if (t.contains("n_trees")) c.tree.n_trees = t["n_trees"].get<std::size_t>();
      if (t.contains("feature_subsample") && !t["feature_subsample"].is_null()) {
        c.tree.feature_subsample = t["feature_subsample"].get<double>();
      }
    }
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      if (o.contains("max_iters")) c.optimizer.max_iters = o["max_iters"].get<std::size_t>();
      if (o.contains("tol")) c.optimizer.tol = o["tol"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema", std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

std::size_t features_per_split(const TrainConfig& cfg, std::size_t n_features) {
  if (n_features == 0) return 0;
  if (cfg.tree.feature_subsample) {
    const auto m = static_cast<std::size_t>(std::lround(*cfg.tree.feature_subsample * n_features));
    return std::clamp<std::size_t>(m, 1, n_features);
  }
  if (cfg.classifier == Classifier::DecisionTree) return 0;
  const auto m = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n_features))));
  return std::clamp<std::size_t>(m, 1, n_features);
}

BinaryModel train_one(const CsrMatrix& x, const std::vector<bool>& y, const std::string& label,
                      const TrainConfig& cfg) {
  BinaryModel bm;
  bm.label_id = label;
  const std::uint64_t seed = derive_seed(cfg.seed, label);
  if (cfg.classifier == Classifier::LogReg || cfg.classifier == Classifier::LinearSvm) {
    std::vector<double> ys(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) ys[i] = y[i] ? 1.0 : -1.0;
    const auto loss =
        cfg.classifier == Classifier::LogReg ? linear::Loss::Logistic : linear::Loss::Hinge;
    auto fit = linear::fit(x, ys, loss, cfg.penalty,
                           {cfg.C, cfg.optimizer.max_iters, cfg.optimizer.tol, seed});
    bm.converged = fit.converged;
    bm.iterations = fit.iterations;
    bm.objective = fit.objective;
    bm.body = LinearWeights{std::move(fit.w), fit.b};
    return bm;
  }
  // std::vector<bool> is not contiguous
  std::unique_ptr<bool[]> yb(new bool[y.size()]);
  for (std::size_t i = 0; i < y.size(); ++i) yb[i] = y[i];
  const std::span<const bool> ys(yb.get(), y.size());
  tree::TreeParams tp{cfg.tree.max_depth, cfg.tree.min_leaf, features_per_split(cfg, x.cols())};
  std::vector<tree::Tree> trees;
  if (cfg.classifier == Classifier::DecisionTree) {
    std::vector<std::uint32_t> w(x.rows(), 1);
    trees.push_back(tree::grow_tree(x, ys, w, tp, seed));
  } else {
    trees = tree::grow_forest(x, ys, {tp, cfg.tree.n_trees}, seed);
  }
  bm.body = std::move(trees);
  return bm;
}

void require_matrix_rows(const FeatureMatrix& m, const LabelMatrix& labels) {
  if (m.pmids != labels.pmids()) {
    throw ValidationError("row-alignment", "feature rows and label rows list different pmids");
  }
}

}  // namespace

OvrModel train(const FeatureMatrix& m, const LabelMatrix& labels,
               const std::vector<std::string>& targets, const TrainConfig& cfg,
               const TrainOptions& options) {
  cfg.validate();
  if (!m.weighted) throw ValidationError("unweighted-features", "training requires tf-idf weighted features");
  require_matrix_rows(m, labels);
  if (targets.empty()) throw ValidationError("no-trainable-labels", "no target labels given");

  OvrModel model;
  model.config = cfg;
  model.space = m.space;
  std::vector<std::vector<bool>> ys;
  std::string single_class;
  for (const auto& t : targets) {
    const auto col = labels.column(t);
    if (!col) throw ValidationError("unknown-label", "label '" + t + "' is not in the label matrix");
    std::vector<bool> y(labels.rows());
    std::size_t pos = 0;
    for (std::size_t r = 0; r < labels.rows(); ++r) pos += (y[r] = labels.at(r, *col)) ? 1 : 0;
    if (pos == 0 || pos == labels.rows()) {
      const std::string which = pos == 0 ? "no positive rows" : "no negative rows";
      if (options.skip_single_class) {
        model.warnings.push_back("label " + t + " skipped: " + which);
        continue;
      }
      single_class += (single_class.empty() ? "" : ", ") + t + " (" + which + ")";
      continue;
    }
    model.label_ids.push_back(t);
    ys.push_back(std::move(y));
  }
  if (!single_class.empty()) {
    throw ValidationError("single-class-label", "cannot train single-class labels: " + single_class);
  }

  model.models.resize(model.label_ids.size());
  parallel_for(model.label_ids.size(), options.workers, [&](std::size_t i) {
    model.models[i] = train_one(m.values, ys[i], model.label_ids[i], cfg);
  });
  for (const auto& bm : model.models) {
    if (!bm.converged) {
      model.warnings.push_back("label " + bm.label_id + ": optimizer did not converge within " +
                               std::to_string(cfg.optimizer.max_iters) + " iterations");
    }
  }
  return model;
}

double decision_value(const LinearWeights& lw, const CsrMatrix& x, std::size_t row) {
  return x.row_dot(row, lw.w) + lw.b;
}

LabelMatrix predict(const OvrModel& model, const FeatureMatrix& m) {
  if (!m.space || !model.space || m.space->digest() != model.space->digest()) {
    throw ValidationError("space-mismatch", "feature matrix was built on a different feature space than the model");
  }
  if (!m.weighted) throw ValidationError("unweighted-features", "prediction requires tf-idf weighted features");
  LabelMatrix out(m.pmids, model.label_ids, LabelMatrix::Kind::Predicted);
  for (std::size_t c = 0; c < model.models.size(); ++c) {
    const auto& body = model.models[c].body;
    for (std::size_t r = 0; r < m.values.rows(); ++r) {
      bool v;
      if (const auto* lw = std::get_if<LinearWeights>(&body)) {
        v = decision_value(*lw, m.values, r) >= 0.0;
      } else {
        const auto& trees = std::get<std::vector<tree::Tree>>(body);
        v = trees.size() == 1 ? trees[0].predict(m.values, r)
                              : tree::predict_forest(trees, m.values, r);
      }
      out.set(r, c, v);
    }
  }
  return out;
}

RelabelResult relabel_and_retrain(const OvrModel& model, const FeatureMatrix& train_m,
                                  const LabelMatrix& train_labels, const TrainConfig& cfg,
                                  const TrainOptions& options) {
  require_matrix_rows(train_m, train_labels);
  RelabelResult res{model, {}, train_labels.select_columns(model.label_ids), predict(model, train_m), {}};
  res.relabeled.set_kind(LabelMatrix::Kind::Weak);
  TrainOptions opts = options;
  opts.skip_single_class = true;
  res.retrained = train(train_m, res.relabeled, model.label_ids, cfg, opts);
  res.warnings = res.retrained.warnings;
  return res;
}

std::string model_to_json(const OvrModel& model) {
  json j;
  j["format"] = "wsindex-model/1";
  j["config"] = train_config_to_json(model.config);
  j["label_ids"] = model.label_ids;
  j["space_digest"] = model.space->digest();
  j["space"] = json::parse(space_to_json(*model.space));
  j["warnings"] = model.warnings;
  json models = json::array();
  for (const auto& bm : model.models) {
    json jm;
    jm["label_id"] = bm.label_id;
    if (const auto* lw = std::get_if<LinearWeights>(&bm.body)) {
      jm["type"] = "linear";
      json weights = json::array();
      for (std::size_t i = 0; i < lw->w.size(); ++i) {
        if (lw->w[i] != 0.0) weights.push_back(json::array({i, lw->w[i]}));
      }
      jm["weights"] = std::move(weights);
      jm["intercept"] = lw->b;
      jm["converged"] = bm.converged;
      jm["iterations"] = bm.iterations;
      jm["objective"] = bm.objective;
    } else {
      jm["type"] = "trees";
      json trees = json::array();
      for (const auto& t : std::get<std::vector<tree::Tree>>(bm.body)) {
        trees.push_back(json(tree::tree_to_json(t)));
      }
      jm["trees"] = std::move(trees);
    }
    models.push_back(std::move(jm));
  }
  j["models"] = std::move(models);
  return j.dump() + "\n";
}

OvrModel model_from_json(std::string_view json_text) {
  try {
    const auto j = nlohmann::json::parse(json_text);
    OvrModel model;
    model.config = train_config_from_json(j.at("config"));
    model.label_ids = j.at("label_ids").get<std::vector<std::string>>();
    model.space = space_from_json(j.at("space").dump());
    if (model.space->digest() != j.at("space_digest").get<std::string>()) {
      throw ValidationError("space-digest", "model feature space does not match its digest");
    }
    model.warnings = j.value("warnings", std::vector<std::string>{});
    const std::size_t dims = model.space->size();
    for (const auto& jm : j.at("models")) {
      BinaryModel bm;
      bm.label_id = jm.at("label_id").get<std::string>();
      const auto type = jm.at("type").get<std::string>();
      if (type == "linear") {
        LinearWeights lw;
        lw.w.assign(dims, 0.0);
        for (const auto& e : jm.at("weights")) {
          const auto i = e.at(0).get<std::size_t>();
          if (i >= dims) throw ValidationError("model-schema", "weight index out of range");
          lw.w[i] = e.at(1).get<double>();
        }
        lw.b = jm.at("intercept").get<double>();
        bm.converged = jm.value("converged", true);
        bm.iterations = jm.value("iterations", std::size_t{0});
        bm.objective = jm.value("objective", 0.0);
        bm.body = std::move(lw);
      } else if (type == "trees") {
        std::vector<tree::Tree> trees;
        for (const auto& jt : jm.at("trees")) trees.push_back(tree::tree_from_json(jt));
        if (trees.empty()) throw ValidationError("model-schema", "tree model without trees");
        bm.body = std::move(trees);
      } else {
        throw ValidationError("model-schema", "unknown model type '" + type + "'");
      }
      model.models.push_back(std::move(bm));
    }
    if (model.models.size() != model.label_ids.size()) {
      throw ValidationError("model-schema", "one binary model per label expected");
    }
    for (std::size_t i = 0; i < model.models.size(); ++i) {
      if (model.models[i].label_id != model.label_ids[i]) {
        throw ValidationError("model-schema", "binary models out of label order");
      }
    }
    return model;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model: ") + e.what(), e.byte, ParseError::Unit::Byte);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema", std::string("model: ") + e.what());
  }
}

void save_model(const OvrModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(model));
}

OvrModel load_model(const std::filesystem::path& path) { return model_from_json(read_file(path)); }

}  // namespace wsindex
