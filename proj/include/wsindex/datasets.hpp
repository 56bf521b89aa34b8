#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsindex/label_matrix.hpp"
#include "wsindex/thesaurus.hpp"

namespace wsindex {

/// Held-out test sets (random MA1, label-combination balanced MA2) and the
/// weakly supervised training set WS. Optionally the under-sampled WS_und.
struct SplitBundle {
  std::vector<std::string> ma1;
  std::vector<std::string> ma2;
  std::vector<std::string> ws;
  std::optional<std::vector<std::string>> ws_und;
  std::uint64_t seed = 0;

  /// Pairwise disjoint and drawn from `corpus_pmids`.
  void validate(const std::vector<std::string>& corpus_pmids) const;

  bool operator==(const SplitBundle&) const = default;
};

std::string split_to_json(const SplitBundle& s);
SplitBundle split_from_json(std::string_view json_text);

struct FoldPlan {
  std::size_t k = 0;
  /// Fold members, each in shuffled order.
  std::vector<std::vector<std::string>> folds;

  std::size_t fold_of(const std::string& pmid) const;
};

/// Uniform sample of n pmids without replacement, returned in input order.
std::vector<std::string> split_ma1(const std::vector<std::string>& pmids, std::size_t n,
                                   std::uint64_t seed);

/// Label-combination balanced sample. Articles are grouped by their exact
/// weak label set over all columns of `weak`; the {preferred}-only group is
/// excluded. Groups are visited round-robin in ascending size (ties by label
/// set), one random article per visit, and a group stops contributing once
/// max(1, floor(size/2)) of its articles are taken. Returned in input order.
std::vector<std::string> split_ma2(const std::vector<std::string>& pmids, const LabelMatrix& weak,
                                   const Descriptor& d, std::size_t n, std::uint64_t seed);

/// pmids minus ma1 and ma2, restricted to rows with at least one weak label.
std::vector<std::string> build_ws(const std::vector<std::string>& pmids,
                                  const std::vector<std::string>& ma1,
                                  const std::vector<std::string>& ma2, const LabelMatrix& weak);

/// Keeps every article with a weak label other than the preferred concept,
/// and samples preferred-only articles so that the preferred class totals
/// `target` articles (or keeps them all when fewer are available).
std::vector<std::string> undersample_majority(const std::vector<std::string>& ws,
                                              const LabelMatrix& weak, const Descriptor& d,
                                              std::size_t target, std::uint64_t seed);

/// Shuffle, then contiguous partition into k folds whose sizes differ by at
/// most one (larger folds first).
FoldPlan make_folds(const std::vector<std::string>& pmids, std::size_t k, std::uint64_t seed);

std::vector<std::string> load_pmid_list(const std::filesystem::path& path);
void save_pmid_list(const std::vector<std::string>& pmids, const std::filesystem::path& path);

}  // namespace wsindex
