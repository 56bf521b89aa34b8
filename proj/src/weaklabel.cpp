#include "wsindex/weaklabel.hpp"

#include "wsindex/error.hpp"

namespace wsindex {

LabelMatrix assign_weak_labels(const Corpus& corpus,
                               const std::vector<ConceptOccurrence>& occurrences,
                               const Descriptor& d) {
  LabelMatrix m(corpus.pmids(), d.concept_ids(), LabelMatrix::Kind::Weak);
  for (const auto& o : occurrences) {
    const auto r = m.row(o.pmid);
    if (!r) {
      throw ValidationError("unknown-pmid", "occurrence for pmid " + o.pmid + " not in corpus");
    }
    if (const auto c = d.index_of(o.concept_id)) m.set(*r, *c, true);
  }
  return m;
}

std::vector<std::string> target_labels(const LabelMatrix& weak, const Descriptor& d,
                                       std::size_t min_support) {
  if (weak.kind() != LabelMatrix::Kind::Weak) {
    throw ValidationError("label-kind", "target_labels needs a weak label matrix");
  }
  std::vector<std::string> out;
  for (const auto& id : fine_grained_labels(d)) {
    const auto c = weak.column(id);
    if (c && weak.support(*c) >= min_support) out.push_back(id);
  }
  if (out.empty()) {
    throw ValidationError("no-trainable-labels",
                          "no fine-grained label has weak support >= " +
                              std::to_string(min_support));
  }
  return out;
}

}  // namespace wsindex
