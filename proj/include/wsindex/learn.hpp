#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "wsindex/features.hpp"
#include "wsindex/label_matrix.hpp"
#include "wsindex/linear.hpp"
#include "wsindex/tree.hpp"

namespace wsindex {

enum class Classifier { LogReg, LinearSvm, DecisionTree, RandomForest };
std::string_view to_string(Classifier c);
Classifier classifier_from_string(std::string_view s);
linear::Penalty penalty_from_string(std::string_view s);

struct TreeConfig {
  std::optional<std::size_t> max_depth;
  std::size_t min_leaf = 1;
  std::size_t n_trees = 100;
  /// Fraction of features examined per split; empty means sqrt(|F|)/|F|
  /// for forests and all features for single trees.
  std::optional<double> feature_subsample;
};

struct OptimizerConfig {
  std::size_t max_iters = 1000;
  double tol = 1e-6;
};

struct TrainConfig {
  Classifier classifier = Classifier::LogReg;
  linear::Penalty penalty = linear::Penalty::L2;
  double C = 1.0;
  TreeConfig tree;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;

  /// Throws ValidationError for C <= 0, n_trees == 0 and similar.
  void validate() const;
};

nlohmann::ordered_json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LinearWeights {
  std::vector<double> w;
  double b = 0.0;
};

struct BinaryModel {
  std::string label_id;
  std::variant<LinearWeights, std::vector<tree::Tree>> body;
  /// Optimizer diagnostics (linear models only).
  bool converged = true;
  std::size_t iterations = 0;
  double objective = 0.0;
};

struct OvrModel {
  TrainConfig config;
  std::vector<std::string> label_ids;
  std::shared_ptr<const FeatureSpace> space;
  std::vector<BinaryModel> models;
  std::vector<std::string> warnings;
};

struct TrainOptions {
  std::size_t workers = 1;
  /// Skip single-class labels with a warning instead of failing.
  bool skip_single_class = false;
};

/// One binary model per target. `m` must be weighted and row-aligned with
/// `labels`. Throws ValidationError("single-class-label") listing every
/// target without both classes unless skipping is requested.
OvrModel train(const FeatureMatrix& m, const LabelMatrix& labels,
               const std::vector<std::string>& targets, const TrainConfig& cfg,
               const TrainOptions& options = {});

/// Linear decision value w . x + b for row `row`.
double decision_value(const LinearWeights& lw, const CsrMatrix& x, std::size_t row);

/// Predicted matrix over the model's labels. Throws
/// ValidationError("space-mismatch") if `m` was built on another space.
LabelMatrix predict(const OvrModel& model, const FeatureMatrix& m);

struct RelabelResult {
  OvrModel first;
  OvrModel retrained;
  LabelMatrix original;   // training labels over the model's labels
  LabelMatrix relabeled;  // first model's predictions on the training rows
  std::vector<std::string> warnings;
};

/// Predicts the training rows with `model`, substitutes the predictions for
/// the weak labels and retrains. Labels whose relabeled column has a single
/// class are skipped with a warning.
RelabelResult relabel_and_retrain(const OvrModel& model, const FeatureMatrix& train_m,
                                  const LabelMatrix& train_labels, const TrainConfig& cfg,
                                  const TrainOptions& options = {});

std::string model_to_json(const OvrModel& model);
OvrModel model_from_json(std::string_view json_text);
void save_model(const OvrModel& model, const std::filesystem::path& path);
OvrModel load_model(const std::filesystem::path& path);

}  // namespace wsindex
