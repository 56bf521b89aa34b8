#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wsindex/datasets.hpp"
#include "wsindex/error.hpp"
#include "wsindex/evalkit.hpp"
#include "wsindex/features.hpp"
#include "wsindex/learn.hpp"
#include "wsindex/recognizer.hpp"

namespace wsindex {

inline constexpr std::string_view kToolVersion = "1.0.0";

struct CorpusSourceConfig {
  enum class Kind { File, Fetch };
  Kind kind = Kind::File;
  std::filesystem::path path;  // File
  std::string term;            // Fetch; defaults to the descriptor query
  std::size_t page_size = 10000;
  std::size_t batch_size = 200;
  std::size_t max_articles = 0;  // 0 = everything the search returns
};

struct OccurrenceSourceConfig {
  enum class Kind { Dictionary, Import };
  Kind kind = Kind::Dictionary;
  Granularity granularity = Granularity::TermLevel;
  std::optional<std::filesystem::path> auxiliary;  // Dictionary
  std::filesystem::path path;                      // Import
};

struct SelectorGrid {
  std::vector<SelectionMethod> methods{SelectionMethod::AnovaF};
  std::vector<std::size_t> k{100};
  std::vector<bool> exclude_ct_concepts{false};
  Aggregation aggregation = Aggregation::Max;
};

struct ClassifierGrid {
  std::vector<Classifier> types{Classifier::LogReg};
  std::vector<linear::Penalty> penalties{linear::Penalty::L2};
  std::vector<double> C{1.0};
  TreeConfig tree;
  OptimizerConfig optimizer;
};

struct PipelineConfig {
  std::filesystem::path descriptor;
  CorpusSourceConfig corpus;
  OccurrenceSourceConfig occurrences;
  std::optional<std::filesystem::path> golden;
  std::optional<std::filesystem::path> second_annotation;
  std::size_t ma1_n = 0;
  std::size_t ma2_n = 0;
  std::uint64_t split_seed = 0;
  std::optional<std::size_t> undersample_target;
  /// "ws" and/or "ws_und".
  std::vector<std::string> training_sets{"ws"};
  std::size_t min_token_df = 2;
  SelectorGrid selector;
  ClassifierGrid classifiers;
  std::size_t cv_k = 0;  // 0 disables cross-validation
  std::vector<Baseline::Kind> baselines;
  bool relabel = false;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::filesystem::path output_dir;

  /// Referenced files exist, grids are non-empty, options are consistent.
  void validate() const;
  /// Digest of everything that can influence results (not output_dir or
  /// workers).
  std::string digest() const;
};

/// Relative paths are resolved against `base_dir`. Both seeds ("seed" and
/// "split.seed") are mandatory.
PipelineConfig parse_pipeline_config(std::string_view json_text,
                                     const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Canonical echo with every default filled in; paths are kept as given.
nlohmann::ordered_json pipeline_config_to_json(const PipelineConfig& c, bool with_location = true);

struct StageRecord {
  std::string name;
  std::string status;  // "ran", "cached", "skipped" or "failed"
  std::map<std::string, std::string> outputs;
  std::string detail;
};

struct RunManifest {
  std::string config_digest;
  nlohmann::ordered_json config;
  std::map<std::string, std::string> input_digests;
  std::string tool_version{kToolVersion};
  std::string started_at;
  std::string finished_at;
  std::vector<StageRecord> stages;
  std::vector<std::string> warnings;
  /// Every file under the output directory except the manifest itself.
  std::map<std::string, std::string> files;
  bool ok = true;
  std::string failed_stage;
  std::string error;

  const StageRecord* stage(std::string_view name) const;
};

std::string manifest_to_json(const RunManifest& m);

/// A stage failed; the partial manifest has been written.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, RunManifest partial)
      : Error(stage + ": " + what), stage_(std::move(stage)), partial_(std::move(partial)) {}
  const std::string& stage() const { return stage_; }
  const RunManifest& partial() const { return partial_; }

 private:
  std::string stage_;
  RunManifest partial_;
};

struct RunOptions {
  std::function<void(const std::string&)> log;
  std::optional<std::size_t> workers;
  std::optional<std::filesystem::path> output_dir;
};

/// ingest -> annotate -> weaklabel -> split -> featurize -> select -> train
/// -> cv -> baselines -> relabel -> evaluate. Stage outputs are cached under
/// <output_dir>/cache by content digest; the manifest is written last.
RunManifest run(const PipelineConfig& cfg, const RunOptions& options = {});

// Building blocks shared with the command line tool.

/// Pmids of a named training set ("ws" or "ws_und") of the split.
const std::vector<std::string>& training_rows(const SplitBundle& split, const std::string& set);

/// A trained cell's feature pipeline: selected columns plus the idf fitted
/// on the training rows.
struct FeaturePlan {
  ReducedSpace reduced;
  std::vector<RankedFeature> ranking;
};

/// Fits idf on `train_pmids`, scores every feature against `labels` and keeps
/// the top k.
FeaturePlan plan_features(const FeatureBundle& raw, const std::vector<std::string>& train_pmids,
                          const LabelMatrix& labels, const std::vector<std::string>& targets,
                          const SelectorConfig& selector, const Descriptor& d);

/// Raw rows for `pmids` projected onto the plan's space and tf-idf weighted.
FeatureMatrix weighted_rows(const FeatureBundle& raw, const std::vector<std::string>& pmids,
                            const ReducedSpace& reduced);

/// Predicted matrix widened to `targets`; missing columns stay zero.
LabelMatrix widen_prediction(const LabelMatrix& pred, const std::vector<std::string>& targets);

struct CvResult {
  std::vector<double> fold_macro_f1;
  double mean_macro_f1 = 0.0;
  std::vector<std::string> warnings;
};

/// k-fold cross-validation against the weak labels; selection and idf are
/// refit inside every fold.
CvResult cross_validate(const FeatureBundle& raw, const LabelMatrix& weak,
                        const std::vector<std::string>& targets,
                        const std::vector<std::string>& pmids, const SelectorConfig& selector,
                        const TrainConfig& train_cfg, std::size_t k, std::uint64_t seed,
                        const Descriptor& d);

}  // namespace wsindex
