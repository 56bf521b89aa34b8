#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wsindex/ingest.hpp"
#include "wsindex/thesaurus.hpp"

namespace wsindex {

enum class Granularity { TermLevel, TokenLevel };

std::string_view to_string(Granularity g);

/// Normalized term string -> concept ids. Keys are lowercase, punctuation
/// free and single spaced (see text::normalize).
class Dictionary {
 public:
  Granularity granularity() const { return granularity_; }
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }
  /// Longest entry length in tokens.
  std::size_t max_tokens() const { return max_tokens_; }

  const std::vector<std::string>* lookup(const std::string& normalized) const;

  std::string to_json() const;

 private:
  friend Dictionary build_dictionary(const Descriptor&, Granularity, const std::vector<Concept>&);
  void add(const std::string& key, const std::string& concept_id);

  Granularity granularity_ = Granularity::TermLevel;
  std::map<std::string, std::vector<std::string>> entries_;
  std::size_t max_tokens_ = 0;
};

/// TermLevel maps each normalized term to its concept; TokenLevel also maps
/// every single token of every term. `auxiliary` adds concepts outside C_t
/// (used only as semantic features).
Dictionary build_dictionary(const Descriptor& d, Granularity granularity,
                            const std::vector<Concept>& auxiliary = {});

/// {"concepts":[{"concept_id","name","terms":[...]}]}
std::vector<Concept> load_auxiliary_concepts(const std::filesystem::path& path);

enum class OccurrenceSource { DictionaryMatch, Imported };

struct ConceptOccurrence {
  std::string pmid;
  std::string concept_id;
  std::string matched_text;
  /// Code point offsets [start, end) into the normalized title+abstract.
  std::size_t start = 0;
  std::size_t end = 0;
  OccurrenceSource source = OccurrenceSource::DictionaryMatch;

  bool operator==(const ConceptOccurrence&) const = default;
};

/// Greedy left-to-right longest match over token boundaries of the normalized
/// title + " " + abstract. Match spans never overlap; an entry naming several
/// concepts yields one occurrence per concept with the same span.
std::vector<ConceptOccurrence> recognize(const Article& article, const Dictionary& dict);

/// Runs `recognize` over the corpus on up to `workers` threads. Output is
/// ordered by (pmid, span, concept_id) independent of `workers`.
std::vector<ConceptOccurrence> recognize_corpus(const Corpus& corpus, const Dictionary& dict,
                                                unsigned workers = 1);

/// JSONL of {"pmid","concept_id","matched_text"?}; every pmid must be in the
/// corpus. Returned occurrences have source Imported.
std::vector<ConceptOccurrence> import_occurrences(const std::filesystem::path& path,
                                                  const Corpus& corpus);

/// Full occurrence JSONL including spans and source.
void save_occurrences(const std::vector<ConceptOccurrence>& occ, const std::filesystem::path& path);
std::vector<ConceptOccurrence> load_occurrences(const std::filesystem::path& path);

}  // namespace wsindex
