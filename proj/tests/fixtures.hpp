#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "wsindex/thesaurus.hpp"

namespace fixtures {

// Alzheimer Disease: the preferred concept is also the top concept.
inline const char* kAlzheimerJson = R"({
  "descriptor_id": "D000544",
  "name": "Alzheimer Disease",
  "preferred_concept_id": "AD",
  "top_concept_id": "AD",
  "concepts": [
    {"concept_id": "AD", "name": "Alzheimer Disease", "relation": "preferred",
     "terms": ["Alzheimer Disease", "Alzheimer's Disease", "Alzheimer Dementia"]},
    {"concept_id": "PD", "name": "Presenile Dementia", "relation": "narrower",
     "terms": ["Presenile Dementia", "Presenile Alzheimer Dementia"]},
    {"concept_id": "FOAD", "name": "Focal Onset Alzheimer's Disease", "relation": "narrower",
     "terms": ["Focal Onset Alzheimer's Disease"]},
    {"concept_id": "EOAD", "name": "Early Onset Alzheimer Disease", "relation": "narrower",
     "terms": ["Early Onset Alzheimer Disease", "Early-Onset Alzheimer Dementia"]},
    {"concept_id": "LOAD", "name": "Late Onset Alzheimer Disease", "relation": "narrower",
     "terms": ["Late Onset Alzheimer Disease", "Late-Onset Alzheimer Dementia"]},
    {"concept_id": "FAD", "name": "Familial Alzheimer Disease", "relation": "narrower",
     "terms": ["Familial Alzheimer Disease", "FAD"]},
    {"concept_id": "ACSD", "name": "Acute Confusional Senile Dementia", "relation": "narrower",
     "terms": ["Acute Confusional Senile Dementia"]}
  ]
})";

// Muscular Dystrophy, Duchenne: a broader concept sits above the preferred one.
inline const char* kDuchenneJson = R"({
  "descriptor_id": "D020388",
  "name": "Muscular Dystrophy, Duchenne",
  "preferred_concept_id": "DMD",
  "top_concept_id": "DBMD",
  "concepts": [
    {"concept_id": "DMD", "name": "Duchenne Muscular Dystrophy", "relation": "preferred",
     "terms": ["Duchenne Muscular Dystrophy", "Duchenne Dystrophy"]},
    {"concept_id": "BMD", "name": "Becker Muscular Dystrophy", "relation": "narrower",
     "terms": ["Becker Muscular Dystrophy", "Becker Dystrophy"]},
    {"concept_id": "DBMD", "name": "Duchenne and Becker Muscular Dystrophy", "relation": "broader",
     "terms": ["Duchenne and Becker Muscular Dystrophy"]}
  ]
})";

inline wsindex::Descriptor alzheimer() { return wsindex::parse_thesaurus(kAlzheimerJson); }
inline wsindex::Descriptor duchenne() { return wsindex::parse_thesaurus(kDuchenneJson); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("wsindex-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures

namespace fixtures {

/// Minimal PubmedArticle record.
inline std::string medline_record(const std::string& pmid, const std::string& title,
                                  const std::vector<std::string>& abstract_parts,
                                  const std::vector<std::string>& mesh_ids) {
  std::string s = "<PubmedArticle><MedlineCitation Status=\"MEDLINE\"><PMID Version=\"1\">" + pmid +
                  "</PMID><Article><ArticleTitle>" + title + "</ArticleTitle>";
  if (!abstract_parts.empty()) {
    s += "<Abstract>";
    for (const auto& p : abstract_parts) s += "<AbstractText>" + p + "</AbstractText>";
    s += "</Abstract>";
  }
  s += "</Article>";
  if (!mesh_ids.empty()) {
    s += "<MeshHeadingList>";
    for (const auto& m : mesh_ids) {
      s += "<MeshHeading><DescriptorName UI=\"" + m + "\" MajorTopicYN=\"N\">x</DescriptorName></MeshHeading>";
    }
    s += "</MeshHeadingList>";
  }
  return s + "</MedlineCitation></PubmedArticle>";
}

inline std::string medline_set(const std::vector<std::string>& records) {
  std::string s = "<?xml version=\"1.0\"?>\n<PubmedArticleSet>";
  for (const auto& r : records) s += r;
  return s + "</PubmedArticleSet>";
}

}  // namespace fixtures
