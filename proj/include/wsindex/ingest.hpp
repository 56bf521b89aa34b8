#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wsindex {

struct Article {
  std::string pmid;
  std::string title;
  std::string abstract;
  std::vector<std::string> descriptor_ids;

  /// Title and abstract joined with one space; the only text used downstream.
  std::string text() const;

  bool operator==(const Article&) const = default;
};

struct Corpus {
  std::vector<Article> articles;
  /// Descriptor every article is annotated with; empty when unknown.
  std::string descriptor_id;

  std::size_t size() const { return articles.size(); }
  std::vector<std::string> pmids() const;
  std::unordered_map<std::string, std::size_t> index() const;

  /// Unique non-empty pmids; every article carries `descriptor_id` if set.
  void validate() const;

  bool operator==(const Corpus&) const = default;
};

/// One article per line: {"pmid","title","abstract","descriptor_ids":[...]}.
Corpus load_corpus(const std::filesystem::path& path, std::string descriptor_id = {});
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string article_to_jsonl(const Article& a);

struct MedlineParseResult {
  std::vector<Article> articles;
  /// Human-readable reasons for records that were skipped (e.g. no PMID).
  std::vector<std::string> rejected;
  /// PMIDs listed under DeleteCitation.
  std::vector<std::string> deleted;
};

/// Parses a PubmedArticleSet / MedlineCitationSet document. Throws
/// ParseError with the byte offset on malformed XML.
MedlineParseResult parse_medline_xml(std::string_view bytes);

}  // namespace wsindex
