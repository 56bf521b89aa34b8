#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wsindex/ingest.hpp"
#include "wsindex/label_matrix.hpp"
#include "wsindex/recognizer.hpp"
#include "wsindex/thesaurus.hpp"

namespace wsindex {

struct LabelMetrics {
  std::string label_id;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  /// 0/0 is taken as 0 for all three.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct Evaluation {
  std::vector<LabelMetrics> labels;
  double macro_f1 = 0.0;
  /// Labels with neither golden positives nor predictions (F1 counted as 0).
  std::vector<std::string> empty_labels;
};

/// Per-label binary P/R/F1 over `targets` and their unweighted mean. Rows are
/// matched by pmid; both matrices must cover the same pmids.
Evaluation evaluate(const LabelMatrix& pred, const LabelMatrix& golden,
                    const std::vector<std::string>& targets);

struct KappaResult {
  std::vector<std::string> labels;
  std::vector<double> kappa;
  /// p_e = 1: kappa reported as 0.
  std::vector<bool> degenerate;
  double macro_kappa = 0.0;
};

/// Cohen's kappa per label from the 2x2 agreement table; macro over targets.
KappaResult kappa(const LabelMatrix& a, const LabelMatrix& b, const std::vector<std::string>& targets);

struct Baseline {
  enum class Kind { AllAll, Random, WSLabels, WSRestAll, AllM, WSRestM, DTerms, DTokens };
  Kind kind = Kind::AllAll;
  std::uint64_t seed = 0;  // Random only
};

std::string_view to_string(Baseline::Kind k);
/// Accepts the names above (AllAll, WSRestM, ...) case-insensitively, with or
/// without underscores.
Baseline::Kind baseline_kind_from_string(std::string_view s);
const std::vector<Baseline::Kind>& all_baseline_kinds();

struct BaselineInputs {
  const Corpus* corpus = nullptr;         // DTerms, DTokens
  const LabelMatrix* weak = nullptr;      // WS* kinds; all columns of C_t
  const Descriptor* descriptor = nullptr; // AllM, WSRestM, WSRestAll
  const Dictionary* term_dictionary = nullptr;
  const Dictionary* token_dictionary = nullptr;
};

/// Predicted matrix over `targets` for the articles `pmids`.
LabelMatrix baseline_predict(const Baseline& b, const std::vector<std::string>& pmids,
                             const std::vector<std::string>& targets, const BaselineInputs& in);

/// label,tp,fp,fn,precision,recall,f1 rows plus a final macro row.
std::string evaluation_csv(const Evaluation& e);
nlohmann::ordered_json evaluation_to_json(const Evaluation& e);
nlohmann::ordered_json kappa_to_json(const KappaResult& k);

struct PlotPoint {
  std::string configuration;
  std::string test_set;
  double macro_f1 = 0.0;
};

/// configuration,test_set,macro_f1
std::string plot_csv(const std::vector<PlotPoint>& points);

/// Fixed 6-decimal rendering used in every CSV report.
std::string format_metric(double v);

}  // namespace wsindex
