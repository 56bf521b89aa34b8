#include "wsindex/ingest.hpp"

#include <boost/property_tree/detail/rapidxml.hpp>
#include <json.hpp>
#include <fstream>
#include <unordered_set>

#include "wsindex/digest.hpp"
#include "wsindex/error.hpp"
#include "wsindex/text.hpp"

namespace wsindex {

namespace rx = boost::property_tree::detail::rapidxml;
using json = nlohmann::ordered_json;

std::string Article::text() const {
  if (title.empty()) return abstract;
  if (abstract.empty()) return title;
  return title + " " + abstract;
}

std::vector<std::string> Corpus::pmids() const {
  std::vector<std::string> out;
  out.reserve(articles.size());
  for (const auto& a : articles) out.push_back(a.pmid);
  return out;
}

std::unordered_map<std::string, std::size_t> Corpus::index() const {
  std::unordered_map<std::string, std::size_t> idx;
  idx.reserve(articles.size());
  for (std::size_t i = 0; i < articles.size(); ++i) idx.emplace(articles[i].pmid, i);
  return idx;
}

void Corpus::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& a : articles) {
    if (a.pmid.empty()) throw ValidationError("pmid-nonempty", "article without pmid");
    if (!seen.insert(a.pmid).second) {
      throw ValidationError("pmid-unique", "duplicate pmid " + a.pmid);
    }
    if (!descriptor_id.empty()) {
      bool found = false;
      for (const auto& d : a.descriptor_ids) found = found || d == descriptor_id;
      if (!found) {
        throw ValidationError("corpus-descriptor",
                              "article " + a.pmid + " is not annotated with " + descriptor_id);
      }
    }
  }
}

std::string article_to_jsonl(const Article& a) {
  json j;
  j["pmid"] = a.pmid;
  j["title"] = a.title;
  j["abstract"] = a.abstract;
  j["descriptor_ids"] = a.descriptor_ids;
  return j.dump();
}

Corpus load_corpus(const std::filesystem::path& path, std::string descriptor_id) {
  Corpus corpus;
  corpus.descriptor_id = std::move(descriptor_id);
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    Article a;
    try {
      const auto j = json::parse(line);
      a.pmid = j.at("pmid").get<std::string>();
      a.title = j.value("title", std::string{});
      a.abstract = j.value("abstract", std::string{});
      if (j.contains("descriptor_ids")) {
        a.descriptor_ids = j.at("descriptor_ids").get<std::vector<std::string>>();
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no, ParseError::Unit::Line);
    }
    if (a.pmid.empty()) {
      throw ParseError(path.string() + ": empty pmid", line_no, ParseError::Unit::Line);
    }
    if (!seen.insert(a.pmid).second) {
      throw ValidationError("pmid-unique", "duplicate pmid " + a.pmid + " at line " +
                                               std::to_string(line_no) + " of " + path.string());
    }
    corpus.articles.push_back(std::move(a));
  }
  corpus.validate();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& a : corpus.articles) {
    out += article_to_jsonl(a);
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

namespace {

using Node = rx::xml_node<char>;

// Concatenated character data of `node` and all descendants, with
// whitespace runs collapsed to single spaces.
std::string inner_text(const Node* node) {
  std::string raw;
  auto walk = [&raw](auto&& self, const Node* n) -> void {
    for (const Node* c = n->first_node(); c; c = c->next_sibling()) {
      if (c->type() == rx::node_data || c->type() == rx::node_cdata) {
        raw.append(c->value(), c->value_size());
      } else if (c->type() == rx::node_element) {
        self(self, c);
      }
    }
  };
  walk(walk, node);
  std::string out;
  bool pending_space = false;
  for (char ch : raw) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(ch);
    }
  }
  return out;
}

const Node* child(const Node* n, const char* name) { return n ? n->first_node(name) : nullptr; }

void parse_citation(const Node* citation, std::size_t record_no, MedlineParseResult& result) {
  const Node* pmid = child(citation, "PMID");
  std::string pmid_text = pmid ? inner_text(pmid) : std::string{};
  if (pmid_text.empty()) {
    result.rejected.push_back("record " + std::to_string(record_no) + ": missing PMID");
    return;
  }
  Article a;
  a.pmid = std::move(pmid_text);
  const Node* article = child(citation, "Article");
  if (const Node* title = child(article, "ArticleTitle")) a.title = inner_text(title);
  if (const Node* abstract = child(article, "Abstract")) {
    for (const Node* s = abstract->first_node("AbstractText"); s;
         s = s->next_sibling("AbstractText")) {
      std::string section = inner_text(s);
      if (section.empty()) continue;
      if (!a.abstract.empty()) a.abstract.push_back(' ');
      a.abstract += section;
    }
  }
  if (const Node* mesh = child(citation, "MeshHeadingList")) {
    for (const Node* h = mesh->first_node("MeshHeading"); h; h = h->next_sibling("MeshHeading")) {
      const Node* name = h->first_node("DescriptorName");
      if (!name) continue;
      const auto* ui = name->first_attribute("UI");
      if (ui && ui->value_size() > 0) a.descriptor_ids.emplace_back(ui->value(), ui->value_size());
    }
  }
  result.articles.push_back(std::move(a));
}

}  // namespace

MedlineParseResult parse_medline_xml(std::string_view bytes) {
  std::vector<char> buffer(bytes.begin(), bytes.end());
  buffer.push_back('\0');
  rx::xml_document<char> doc;
  try {
    doc.parse<rx::parse_validate_closing_tags>(buffer.data());
  } catch (const rx::parse_error& e) {
    const char* where = e.where<char>();
    std::size_t offset = where ? static_cast<std::size_t>(where - buffer.data()) : 0;
    throw ParseError(std::string("malformed MEDLINE XML: ") + e.what(), offset,
                     ParseError::Unit::Byte);
  }

  MedlineParseResult result;
  std::size_t record_no = 0;
  for (const Node* root = doc.first_node(); root; root = root->next_sibling()) {
    if (root->type() != rx::node_element) continue;
    for (const Node* rec = root->first_node(); rec; rec = rec->next_sibling()) {
      if (rec->type() != rx::node_element) continue;
      const std::string_view name(rec->name(), rec->name_size());
      if (name == "PubmedArticle") {
        ++record_no;
        const Node* citation = rec->first_node("MedlineCitation");
        if (!citation) {
          result.rejected.push_back("record " + std::to_string(record_no) +
                                    ": missing MedlineCitation");
          continue;
        }
        parse_citation(citation, record_no, result);
      } else if (name == "MedlineCitation") {
        ++record_no;
        parse_citation(rec, record_no, result);
      } else if (name == "DeleteCitation") {
        for (const Node* p = rec->first_node("PMID"); p; p = p->next_sibling("PMID")) {
          result.deleted.push_back(inner_text(p));
        }
      }
    }
  }
  return result;
}

}  // namespace wsindex
