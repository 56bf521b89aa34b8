#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wsindex/ingest.hpp"
#include "wsindex/label_matrix.hpp"
#include "wsindex/recognizer.hpp"
#include "wsindex/thesaurus.hpp"

namespace wsindex {

/// Weak matrix over all of C_t (the top concept included as a bookkeeping
/// column): cell(a, c) = 1 iff c occurs in a. Occurrences of concepts
/// outside C_t are ignored here.
LabelMatrix assign_weak_labels(const Corpus& corpus,
                               const std::vector<ConceptOccurrence>& occurrences,
                               const Descriptor& d);

/// Fine-grained labels whose weak support is at least `min_support`, in
/// declaration order. Throws ValidationError("no-trainable-labels") if none.
std::vector<std::string> target_labels(const LabelMatrix& weak, const Descriptor& d,
                                       std::size_t min_support = 1);

}  // namespace wsindex
