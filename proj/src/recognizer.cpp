#include "wsindex/recognizer.hpp"

#include <algorithm>
#include <json.hpp>
#include <thread>
#include <tuple>

#include "wsindex/digest.hpp"
#include "wsindex/error.hpp"
#include "wsindex/text.hpp"

namespace wsindex {

using json = nlohmann::ordered_json;

std::string_view to_string(Granularity g) {
  return g == Granularity::TermLevel ? "terms" : "tokens";
}

const std::vector<std::string>* Dictionary::lookup(const std::string& normalized) const {
  auto it = entries_.find(normalized);
  return it == entries_.end() ? nullptr : &it->second;
}

void Dictionary::add(const std::string& key, const std::string& concept_id) {
  if (key.empty()) return;
  auto& ids = entries_[key];
  if (std::find(ids.begin(), ids.end(), concept_id) == ids.end()) ids.push_back(concept_id);
  max_tokens_ = std::max(max_tokens_,
                         static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ')) + 1);
}

std::string Dictionary::to_json() const {
  json j;
  j["granularity"] = std::string(to_string(granularity_));
  j["entries"] = json::object();
  for (const auto& [k, ids] : entries_) j["entries"][k] = ids;
  return j.dump(2) + "\n";
}

Dictionary build_dictionary(const Descriptor& d, Granularity granularity,
                            const std::vector<Concept>& auxiliary) {
  Dictionary dict;
  dict.granularity_ = granularity;
  auto add_concept = [&](const Concept& c) {
    for (const auto& term : c.terms) {
      const auto tokens = text::tokenize(term.text);
      std::string key;
      for (const auto& t : tokens) {
        if (!key.empty()) key.push_back(' ');
        key += t;
      }
      dict.add(key, c.concept_id);
      if (granularity == Granularity::TokenLevel) {
        for (const auto& t : tokens) dict.add(t, c.concept_id);
      }
    }
  };
  for (const auto& c : d.concepts) add_concept(c);
  for (const auto& c : auxiliary) {
    if (d.contains(c.concept_id)) {
      throw ValidationError("auxiliary-concept",
                            "auxiliary concept '" + c.concept_id + "' is already in the descriptor");
    }
    add_concept(c);
  }
  return dict;
}

std::vector<Concept> load_auxiliary_concepts(const std::filesystem::path& path) {
  std::vector<Concept> out;
  try {
    const auto j = json::parse(read_file(path));
    for (const auto& jc : j.at("concepts")) {
      Concept c;
      c.concept_id = jc.at("concept_id").get<std::string>();
      c.name = jc.value("name", std::string{});
      c.relation = Relation::Related;
      bool first = true;
      for (const auto& t : jc.at("terms")) {
        c.terms.push_back(Term{t.get<std::string>(), first});
        first = false;
      }
      if (c.concept_id.empty() || c.terms.empty()) {
        throw ValidationError("auxiliary-concept", "concept without id or terms in " + path.string());
      }
      out.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema", path.string() + ": " + e.what());
  }
  return out;
}

std::vector<ConceptOccurrence> recognize(const Article& article, const Dictionary& dict) {
  const auto tokens = text::normalized_tokens(article.text());
  std::vector<ConceptOccurrence> out;
  std::size_t i = 0;
  std::string key;
  while (i < tokens.size()) {
    const std::size_t max_len = std::min(dict.max_tokens(), tokens.size() - i);
    std::size_t matched_len = 0;
    const std::vector<std::string>* ids = nullptr;
    for (std::size_t len = max_len; len >= 1; --len) {
      key.clear();
      for (std::size_t k = i; k < i + len; ++k) {
        if (k > i) key.push_back(' ');
        key += tokens[k].text;
      }
      if ((ids = dict.lookup(key))) {
        matched_len = len;
        break;
      }
    }
    if (!ids) {
      ++i;
      continue;
    }
    for (const auto& id : *ids) {
      ConceptOccurrence o;
      o.pmid = article.pmid;
      o.concept_id = id;
      o.matched_text = key;
      o.start = tokens[i].start;
      o.end = tokens[i + matched_len - 1].end;
      o.source = OccurrenceSource::DictionaryMatch;
      out.push_back(std::move(o));
    }
    i += matched_len;
  }
  return out;
}

namespace {

bool occurrence_less(const ConceptOccurrence& a, const ConceptOccurrence& b) {
  return std::tie(a.pmid, a.start, a.end, a.concept_id) <
         std::tie(b.pmid, b.start, b.end, b.concept_id);
}

}  // namespace

std::vector<ConceptOccurrence> recognize_corpus(const Corpus& corpus, const Dictionary& dict,
                                                unsigned workers) {
  const std::size_t n = corpus.articles.size();
  std::vector<std::vector<ConceptOccurrence>> per_article(n);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) per_article[i] = recognize(corpus.articles[i], dict);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) {
          per_article[i] = recognize(corpus.articles[i], dict);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  std::vector<ConceptOccurrence> out;
  for (auto& v : per_article) {
    for (auto& o : v) out.push_back(std::move(o));
  }
  std::stable_sort(out.begin(), out.end(), occurrence_less);
  return out;
}

std::vector<ConceptOccurrence> import_occurrences(const std::filesystem::path& path,
                                                  const Corpus& corpus) {
  const auto index = corpus.index();
  std::vector<ConceptOccurrence> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    ConceptOccurrence o;
    try {
      const auto j = json::parse(line);
      o.pmid = j.at("pmid").get<std::string>();
      o.concept_id = j.at("concept_id").get<std::string>();
      o.matched_text = j.value("matched_text", std::string{});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no, ParseError::Unit::Line);
    }
    if (o.concept_id.empty()) {
      throw ParseError(path.string() + ": empty concept_id", line_no, ParseError::Unit::Line);
    }
    if (!index.contains(o.pmid)) {
      throw ValidationError("unknown-pmid", "pmid " + o.pmid + " at line " +
                                                std::to_string(line_no) + " of " + path.string() +
                                                " is not in the corpus");
    }
    o.source = OccurrenceSource::Imported;
    out.push_back(std::move(o));
  }
  return out;
}

void save_occurrences(const std::vector<ConceptOccurrence>& occ,
                      const std::filesystem::path& path) {
  std::string out;
  for (const auto& o : occ) {
    json j;
    j["pmid"] = o.pmid;
    j["concept_id"] = o.concept_id;
    j["matched_text"] = o.matched_text;
    j["start"] = o.start;
    j["end"] = o.end;
    j["source"] = o.source == OccurrenceSource::Imported ? "imported" : "dictionary";
    out += j.dump();
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

std::vector<ConceptOccurrence> load_occurrences(const std::filesystem::path& path) {
  std::vector<ConceptOccurrence> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      ConceptOccurrence o;
      o.pmid = j.at("pmid").get<std::string>();
      o.concept_id = j.at("concept_id").get<std::string>();
      o.matched_text = j.value("matched_text", std::string{});
      o.start = j.value("start", std::size_t{0});
      o.end = j.value("end", std::size_t{0});
      o.source = j.value("source", std::string{"imported"}) == "dictionary"
                     ? OccurrenceSource::DictionaryMatch
                     : OccurrenceSource::Imported;
      out.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no, ParseError::Unit::Line);
    }
  }
  return out;
}

}  // namespace wsindex
