#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wsindex/ingest.hpp"
#include "wsindex/label_matrix.hpp"
#include "wsindex/recognizer.hpp"
#include "wsindex/sparse.hpp"
#include "wsindex/thesaurus.hpp"

namespace wsindex {

enum class FeatureKind { Lexical, Semantic };

struct FeatureDef {
  std::uint32_t id = 0;
  FeatureKind kind = FeatureKind::Lexical;
  /// Token for lexical features, concept id for semantic ones.
  std::string key;

  bool operator==(const FeatureDef&) const = default;
};

/// Registry of features with dense ids 0..n-1 and keys unique per kind.
class FeatureSpace {
 public:
  FeatureSpace() = default;
  explicit FeatureSpace(std::vector<std::pair<FeatureKind, std::string>> defs);

  std::size_t size() const { return features_.size(); }
  const std::vector<FeatureDef>& features() const { return features_; }
  const FeatureDef& operator[](std::size_t id) const { return features_[id]; }

  std::optional<std::uint32_t> find(FeatureKind kind, const std::string& key) const;

  /// SHA-256 of the canonical JSON rendering; identifies the space in models.
  const std::string& digest() const { return digest_; }

  bool operator==(const FeatureSpace& o) const { return features_ == o.features_; }

 private:
  std::vector<FeatureDef> features_;
  std::map<std::string, std::uint32_t> lexical_;
  std::map<std::string, std::uint32_t> semantic_;
  std::string digest_;
};

struct FeatureMatrix {
  std::vector<std::string> pmids;
  std::shared_ptr<const FeatureSpace> space;
  CsrMatrix values;
  bool weighted = false;
};

/// Lowercased maximal runs of Unicode alphanumerics.
std::vector<std::string> tokenize(std::string_view text);

struct FeatureOptions {
  std::size_t min_token_df = 2;
};

/// Fits a space on `corpus`: tokens with document frequency >= min_token_df
/// (lexical, raw counts) plus every concept that occurs (semantic, binary).
/// Lexical features come first, each kind sorted by key.
FeatureMatrix build_features(const Corpus& corpus,
                             const std::vector<ConceptOccurrence>& occurrences,
                             const FeatureOptions& options = {});

/// Raw values of `corpus` on an existing space; unknown tokens and concepts
/// are dropped.
FeatureMatrix featurize(const Corpus& corpus, const std::vector<ConceptOccurrence>& occurrences,
                        std::shared_ptr<const FeatureSpace> space);

/// idf(f) = ln((1 + N) / (1 + df(f))) + 1 over the rows of `raw`.
std::vector<double> fit_idf(const FeatureMatrix& raw);
/// tf * idf, then each row scaled to unit Euclidean norm (zero rows stay zero).
FeatureMatrix apply_tfidf(const FeatureMatrix& raw, const std::vector<double>& idf);
FeatureMatrix tfidf(const FeatureMatrix& raw);

enum class SelectionMethod { Chi2, AnovaF };
std::string_view to_string(SelectionMethod m);
SelectionMethod selection_method_from_string(std::string_view s);

struct FeatureScores {
  std::vector<std::string> labels;
  /// scores[label][feature]; +inf marks a perfectly separating feature.
  std::vector<std::vector<double>> scores;
  /// Labels with a single class among the rows; their scores are all zero.
  std::vector<std::string> degenerate_labels;
};

FeatureScores score_features(const FeatureMatrix& m, const LabelMatrix& labels,
                             const std::vector<std::string>& targets, SelectionMethod method);

enum class Aggregation { Max, PerLabelUnion };

struct SelectorConfig {
  SelectionMethod method = SelectionMethod::AnovaF;
  std::size_t k = 100;
  bool exclude_ct_concepts = false;
  /// Max: rank by the maximum per-label score. PerLabelUnion: union of each
  /// label's top k, ordered by the maximum score.
  Aggregation aggregation = Aggregation::Max;
};

struct RankedFeature {
  std::uint32_t id = 0;
  double aggregate = 0.0;
  bool operator==(const RankedFeature&) const = default;
};

/// Feature ids in rank order (aggregate descending, ties by id). Throws
/// ValidationError("k-exceeds-features") when k exceeds what is available.
std::vector<RankedFeature> select_top_k(const FeatureScores& scores, const FeatureSpace& space,
                                        const SelectorConfig& cfg, const Descriptor& d);

/// CSV: rank,kind,key,<score per label>,aggregate.
std::string selection_report_csv(const std::vector<RankedFeature>& ranked,
                                 const FeatureScores& scores, const FeatureSpace& space);

/// A space restricted to `ids` (in that order) and the matching idf values.
struct ReducedSpace {
  std::shared_ptr<const FeatureSpace> space;
  std::vector<double> idf;
  std::vector<std::uint32_t> source_ids;
};

ReducedSpace reduce_space(const FeatureSpace& space, const std::vector<double>& idf,
                          const std::vector<std::uint32_t>& ids);

/// Raw matrix restricted to the reduced space's columns.
FeatureMatrix project(const FeatureMatrix& raw, const ReducedSpace& reduced);

/// File form of a feature matrix together with its space and idf.
struct FeatureBundle {
  FeatureMatrix matrix;
  std::vector<double> idf;
};

std::string space_to_json(const FeatureSpace& space);
std::shared_ptr<const FeatureSpace> space_from_json(std::string_view json_text);
void save_feature_bundle(const FeatureBundle& b, const std::filesystem::path& path);
FeatureBundle load_feature_bundle(const std::filesystem::path& path);

/// Rows of `m` for `pmids`, in that order.
FeatureMatrix select_feature_rows(const FeatureMatrix& m, const std::vector<std::string>& pmids);

}  // namespace wsindex
