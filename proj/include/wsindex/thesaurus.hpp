#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wsindex {

struct Term {
  std::string text;
  bool is_preferred_of_concept = false;

  bool operator==(const Term&) const = default;
};

enum class Relation { Preferred, Narrower, Broader, Related };

std::string_view to_string(Relation r);
Relation relation_from_string(std::string_view s);

struct Concept {
  std::string concept_id;
  std::string name;
  std::vector<Term> terms;
  Relation relation = Relation::Narrower;

  bool operator==(const Concept&) const = default;
};

/// A thesaurus entry t with its concepts C_t, preferred concept and the
/// unique top (broadest) concept. Immutable once validated.
struct Descriptor {
  std::string descriptor_id;
  std::string name;
  std::vector<Concept> concepts;
  std::string preferred_concept_id;
  std::string top_concept_id;

  const Concept* find(std::string_view concept_id) const;
  std::optional<std::size_t> index_of(std::string_view concept_id) const;
  bool contains(std::string_view concept_id) const { return index_of(concept_id).has_value(); }

  std::vector<std::string> concept_ids() const;

  /// Throws ValidationError naming the first violated rule.
  void validate() const;

  bool operator==(const Descriptor&) const = default;
};

Descriptor parse_thesaurus(std::string_view json_text);
Descriptor load_thesaurus(const std::filesystem::path& path);

/// Canonical JSON rendering; `parse_thesaurus(thesaurus_to_json(d)) == d`.
std::string thesaurus_to_json(const Descriptor& d);
void save_thesaurus(const Descriptor& d, const std::filesystem::path& path);

/// All concept ids except the top concept, in declaration order.
std::vector<std::string> fine_grained_labels(const Descriptor& d);

}  // namespace wsindex
