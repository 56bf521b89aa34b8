#include "wsindex/label_matrix.hpp"

#include <json.hpp>

#include "wsindex/digest.hpp"
#include "wsindex/error.hpp"
#include "wsindex/text.hpp"

namespace wsindex {

using json = nlohmann::ordered_json;

LabelMatrix::LabelMatrix(std::vector<std::string> pmids, std::vector<std::string> label_ids,
                         Kind kind)
    : pmids_(std::move(pmids)),
      label_ids_(std::move(label_ids)),
      cells_(pmids_.size() * label_ids_.size(), 0),
      kind_(kind) {
  row_index_.reserve(pmids_.size());
  for (std::size_t i = 0; i < pmids_.size(); ++i) {
    if (!row_index_.emplace(pmids_[i], i).second) {
      throw ValidationError("pmid-unique", "duplicate pmid " + pmids_[i] + " in label matrix");
    }
  }
  for (std::size_t i = 0; i < label_ids_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (label_ids_[i] == label_ids_[j]) {
        throw ValidationError("label-unique", "duplicate label " + label_ids_[i]);
      }
    }
  }
}

std::optional<std::size_t> LabelMatrix::column(std::string_view label_id) const {
  for (std::size_t c = 0; c < label_ids_.size(); ++c) {
    if (label_ids_[c] == label_id) return c;
  }
  return std::nullopt;
}

std::optional<std::size_t> LabelMatrix::row(std::string_view pmid) const {
  auto it = row_index_.find(std::string(pmid));
  if (it == row_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelMatrix::support(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows(); ++r) n += at(r, c) ? 1 : 0;
  return n;
}

bool LabelMatrix::row_empty(std::size_t r) const {
  for (std::size_t c = 0; c < cols(); ++c) {
    if (at(r, c)) return false;
  }
  return true;
}

LabelMatrix LabelMatrix::select_rows(const std::vector<std::string>& pmids) const {
  LabelMatrix out(pmids, label_ids_, kind_);
  for (std::size_t i = 0; i < pmids.size(); ++i) {
    auto r = row(pmids[i]);
    if (!r) throw ValidationError("pmid-alignment", "pmid " + pmids[i] + " not in label matrix");
    for (std::size_t c = 0; c < cols(); ++c) out.set(i, c, at(*r, c));
  }
  return out;
}

LabelMatrix LabelMatrix::select_columns(const std::vector<std::string>& labels) const {
  LabelMatrix out(pmids_, labels, kind_);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    auto c = column(labels[j]);
    if (!c) throw ValidationError("label-alignment", "label " + labels[j] + " not in label matrix");
    for (std::size_t r = 0; r < rows(); ++r) out.set(r, j, at(r, *c));
  }
  return out;
}

std::string_view to_string(LabelMatrix::Kind k) {
  switch (k) {
    case LabelMatrix::Kind::Weak: return "weak";
    case LabelMatrix::Kind::Golden: return "golden";
    case LabelMatrix::Kind::Predicted: return "predicted";
  }
  return "weak";
}

LabelMatrix::Kind label_kind_from_string(std::string_view s) {
  if (s == "weak") return LabelMatrix::Kind::Weak;
  if (s == "golden") return LabelMatrix::Kind::Golden;
  if (s == "predicted") return LabelMatrix::Kind::Predicted;
  throw ValidationError("label-kind", "unknown label matrix kind '" + std::string(s) + "'");
}

namespace {

void check_csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") != std::string::npos) {
    throw ValidationError("csv-field", "value '" + s + "' cannot be written as a CSV field");
  }
}

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(text::trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string label_matrix_to_csv(const LabelMatrix& m) {
  std::string out = "pmid";
  for (const auto& l : m.label_ids()) {
    check_csv_field(l);
    out += "," + l;
  }
  out.push_back('\n');
  for (std::size_t r = 0; r < m.rows(); ++r) {
    check_csv_field(m.pmids()[r]);
    out += m.pmids()[r];
    for (std::size_t c = 0; c < m.cols(); ++c) out += m.at(r, c) ? ",1" : ",0";
    out.push_back('\n');
  }
  return out;
}

LabelMatrix label_matrix_from_csv(std::string_view csv, LabelMatrix::Kind kind) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < csv.size()) {
    auto pos = csv.find('\n', start);
    if (pos == std::string_view::npos) pos = csv.size();
    auto line = csv.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = pos + 1;
  }
  if (lines.empty()) throw ParseError("label CSV: missing header", 1, ParseError::Unit::Line);
  auto header = split_commas(lines[0]);
  if (header.empty() || header[0] != "pmid") {
    throw ParseError("label CSV: header must start with 'pmid'", 1, ParseError::Unit::Line);
  }
  std::vector<std::string> labels(header.begin() + 1, header.end());
  std::vector<std::string> pmids;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    auto fields = split_commas(lines[i]);
    if (fields.size() != header.size()) {
      throw ParseError("label CSV: expected " + std::to_string(header.size()) + " fields",
                       i + 1, ParseError::Unit::Line);
    }
    pmids.push_back(fields[0]);
    rows.push_back(std::move(fields));
  }
  LabelMatrix m(pmids, labels, kind);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < labels.size(); ++c) {
      const auto& v = rows[r][c + 1];
      if (v != "0" && v != "1") {
        throw ParseError("label CSV: cell must be 0 or 1, got '" + v + "'", r + 2,
                         ParseError::Unit::Line);
      }
      m.set(r, c, v == "1");
    }
  }
  return m;
}

std::string label_matrix_to_json(const LabelMatrix& m) {
  json j;
  j["kind"] = std::string(to_string(m.kind()));
  j["label_ids"] = m.label_ids();
  j["rows"] = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row;
    row["pmid"] = m.pmids()[r];
    row["labels"] = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (m.at(r, c)) row["labels"].push_back(m.label_ids()[c]);
    }
    j["rows"].push_back(std::move(row));
  }
  return j.dump() + "\n";
}

LabelMatrix label_matrix_from_json(std::string_view json_text) {
  try {
    const auto j = json::parse(json_text);
    const auto labels = j.at("label_ids").get<std::vector<std::string>>();
    std::vector<std::string> pmids;
    for (const auto& row : j.at("rows")) pmids.push_back(row.at("pmid").get<std::string>());
    LabelMatrix m(pmids, labels, label_kind_from_string(j.at("kind").get<std::string>()));
    std::size_t r = 0;
    for (const auto& row : j.at("rows")) {
      for (const auto& l : row.at("labels")) {
        auto c = m.column(l.get<std::string>());
        if (!c) throw ValidationError("label-alignment", "unknown label " + l.get<std::string>());
        m.set(r, *c, true);
      }
      ++r;
    }
    return m;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("label JSON: ") + e.what(), e.byte, ParseError::Unit::Byte);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema", std::string("label JSON: ") + e.what());
  }
}

void save_label_matrix(const LabelMatrix& m, const std::filesystem::path& path) {
  write_file_atomic(path, path.extension() == ".json" ? label_matrix_to_json(m)
                                                      : label_matrix_to_csv(m));
}

LabelMatrix load_label_matrix(const std::filesystem::path& path, LabelMatrix::Kind csv_kind) {
  const auto content = read_file(path);
  if (path.extension() == ".json") return label_matrix_from_json(content);
  return label_matrix_from_csv(content, csv_kind);
}

void require_aligned(const LabelMatrix& a, const LabelMatrix& b) {
  if (a.pmids() != b.pmids()) {
    throw ValidationError("pmid-alignment", "label matrices list different pmids");
  }
}

}  // namespace wsindex
