#include "wsindex/thesaurus.hpp"

#include <json.hpp>
#include <set>

#include "wsindex/digest.hpp"
#include "wsindex/error.hpp"
#include "wsindex/text.hpp"

namespace wsindex {

using json = nlohmann::ordered_json;

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::Preferred: return "preferred";
    case Relation::Narrower: return "narrower";
    case Relation::Broader: return "broader";
    case Relation::Related: return "related";
  }
  return "related";
}

Relation relation_from_string(std::string_view s) {
  if (s == "preferred") return Relation::Preferred;
  if (s == "narrower") return Relation::Narrower;
  if (s == "broader") return Relation::Broader;
  if (s == "related") return Relation::Related;
  throw ValidationError("relation-value", "unknown relation '" + std::string(s) + "'");
}

const Concept* Descriptor::find(std::string_view concept_id) const {
  auto i = index_of(concept_id);
  return i ? &concepts[*i] : nullptr;
}

std::optional<std::size_t> Descriptor::index_of(std::string_view concept_id) const {
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i].concept_id == concept_id) return i;
  }
  return std::nullopt;
}

std::vector<std::string> Descriptor::concept_ids() const {
  std::vector<std::string> ids;
  ids.reserve(concepts.size());
  for (const auto& c : concepts) ids.push_back(c.concept_id);
  return ids;
}

void Descriptor::validate() const {
  if (descriptor_id.empty()) throw ValidationError("descriptor-id", "descriptor_id is empty");
  if (concepts.empty()) throw ValidationError("concepts-nonempty", "descriptor has no concepts");

  std::set<std::string> seen;
  const Concept* preferred = nullptr;
  const Concept* broader = nullptr;
  for (const auto& c : concepts) {
    if (c.concept_id.empty()) throw ValidationError("concept-id", "empty concept_id");
    if (!seen.insert(c.concept_id).second) {
      throw ValidationError("concept-id-unique", "duplicate concept_id '" + c.concept_id + "'");
    }
    if (c.terms.empty()) {
      throw ValidationError("concept-has-term", "concept '" + c.concept_id + "' has no terms");
    }
    for (const auto& t : c.terms) {
      if (text::trim(t.text).empty()) {
        throw ValidationError("term-nonempty", "concept '" + c.concept_id + "' has a blank term");
      }
    }
    if (c.relation == Relation::Preferred) {
      if (preferred) {
        throw ValidationError("single-preferred", "concepts '" + preferred->concept_id +
                                                      "' and '" + c.concept_id +
                                                      "' are both preferred");
      }
      preferred = &c;
    }
    if (c.relation == Relation::Broader) {
      if (broader) {
        throw ValidationError("single-broader", "concepts '" + broader->concept_id + "' and '" +
                                                    c.concept_id + "' are both broader");
      }
      broader = &c;
    }
  }
  if (!preferred) throw ValidationError("single-preferred", "no concept has relation preferred");
  if (!find(preferred_concept_id)) {
    throw ValidationError("reference-exists",
                          "preferred_concept_id '" + preferred_concept_id + "' is not a concept");
  }
  if (!find(top_concept_id)) {
    throw ValidationError("reference-exists",
                          "top_concept_id '" + top_concept_id + "' is not a concept");
  }
  if (preferred->concept_id != preferred_concept_id) {
    throw ValidationError("preferred-matches", "preferred_concept_id '" + preferred_concept_id +
                                                   "' but concept '" + preferred->concept_id +
                                                   "' has relation preferred");
  }
  // The top concept is the preferred one unless a broader concept exists, in
  // which case it must be that broader concept.
  if (broader) {
    if (top_concept_id != broader->concept_id) {
      throw ValidationError("top-concept", "top_concept_id must be the broader concept '" +
                                               broader->concept_id + "'");
    }
  } else if (top_concept_id != preferred_concept_id) {
    throw ValidationError("top-concept",
                          "top_concept_id differs from the preferred concept but no concept "
                          "has relation broader");
  }
}

Descriptor parse_thesaurus(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("thesaurus JSON: ") + e.what(), e.byte, ParseError::Unit::Byte);
  }
  Descriptor d;
  try {
    d.descriptor_id = j.at("descriptor_id").get<std::string>();
    d.name = j.value("name", std::string{});
    d.preferred_concept_id = j.at("preferred_concept_id").get<std::string>();
    d.top_concept_id = j.at("top_concept_id").get<std::string>();
    for (const auto& jc : j.at("concepts")) {
      Concept c;
      c.concept_id = jc.at("concept_id").get<std::string>();
      c.name = jc.value("name", std::string{});
      c.relation = relation_from_string(jc.at("relation").get<std::string>());
      bool first = true;
      for (const auto& jt : jc.at("terms")) {
        c.terms.push_back(Term{jt.get<std::string>(), first});
        first = false;
      }
      d.concepts.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ValidationError("schema", e.what());
  }
  d.validate();
  return d;
}

Descriptor load_thesaurus(const std::filesystem::path& path) {
  return parse_thesaurus(read_file(path));
}

std::string thesaurus_to_json(const Descriptor& d) {
  json j;
  j["descriptor_id"] = d.descriptor_id;
  j["name"] = d.name;
  j["preferred_concept_id"] = d.preferred_concept_id;
  j["top_concept_id"] = d.top_concept_id;
  j["concepts"] = json::array();
  for (const auto& c : d.concepts) {
    json jc;
    jc["concept_id"] = c.concept_id;
    jc["name"] = c.name;
    jc["relation"] = std::string(to_string(c.relation));
    jc["terms"] = json::array();
    for (const auto& t : c.terms) jc["terms"].push_back(t.text);
    j["concepts"].push_back(std::move(jc));
  }
  return j.dump(2) + "\n";
}

void save_thesaurus(const Descriptor& d, const std::filesystem::path& path) {
  write_file_atomic(path, thesaurus_to_json(d));
}

std::vector<std::string> fine_grained_labels(const Descriptor& d) {
  std::vector<std::string> out;
  for (const auto& c : d.concepts) {
    if (c.concept_id != d.top_concept_id) out.push_back(c.concept_id);
  }
  return out;
}

}  // namespace wsindex
