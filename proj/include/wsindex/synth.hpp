#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wsindex/ingest.hpp"
#include "wsindex/label_matrix.hpp"
#include "wsindex/thesaurus.hpp"

namespace wsindex {

struct SyntheticSpec {
  std::size_t n_articles = 200;
  /// Fine-grained labels (the first is the preferred concept). Ignored when
  /// `synonym_map` is given.
  std::size_t n_labels = 4;
  std::size_t synonyms_per_label = 3;
  /// Optional explicit (concept id, terms) per fine-grained label.
  std::vector<std::pair<std::string, std::vector<std::string>>> synonym_map;
  /// A golden-positive article omits every term of the label with this
  /// probability (a weak-label false negative).
  double miss_rate = 0.0;
  /// Each off-label concept is mentioned with this probability (a weak-label
  /// false positive).
  double spurious_rate = 0.0;
  std::uint64_t seed = 0;
  std::size_t background_vocabulary = 500;
  std::size_t abstract_tokens = 60;
};

struct SyntheticData {
  Corpus corpus;
  /// Over the fine-grained labels, in declaration order.
  LabelMatrix golden;
  Descriptor descriptor;
};

/// Articles mix background words with label-specific signature words (never
/// dictionary terms) and thesaurus term mentions governed by the noise rates.
/// Deterministic given the seed.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace wsindex
