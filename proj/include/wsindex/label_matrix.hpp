#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wsindex {

/// Binary article x label assignments. Rows follow `pmids`, columns follow
/// `label_ids`. Cells are stored densely; label sets are small.
class LabelMatrix {
 public:
  enum class Kind { Weak, Golden, Predicted };

  LabelMatrix() = default;
  LabelMatrix(std::vector<std::string> pmids, std::vector<std::string> label_ids, Kind kind);

  std::size_t rows() const { return pmids_.size(); }
  std::size_t cols() const { return label_ids_.size(); }
  Kind kind() const { return kind_; }
  void set_kind(Kind k) { kind_ = k; }

  const std::vector<std::string>& pmids() const { return pmids_; }
  const std::vector<std::string>& label_ids() const { return label_ids_; }

  bool at(std::size_t r, std::size_t c) const { return cells_[r * cols() + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { cells_[r * cols() + c] = v ? 1 : 0; }

  std::optional<std::size_t> column(std::string_view label_id) const;
  std::optional<std::size_t> row(std::string_view pmid) const;

  std::size_t support(std::size_t c) const;
  bool row_empty(std::size_t r) const;

  /// Rows for `pmids` in that order; throws if any pmid is absent.
  LabelMatrix select_rows(const std::vector<std::string>& pmids) const;
  /// Columns for `labels` in that order; throws if any label is absent.
  LabelMatrix select_columns(const std::vector<std::string>& labels) const;

  bool operator==(const LabelMatrix& o) const {
    return pmids_ == o.pmids_ && label_ids_ == o.label_ids_ && cells_ == o.cells_ &&
           kind_ == o.kind_;
  }

 private:
  std::vector<std::string> pmids_;
  std::vector<std::string> label_ids_;
  std::vector<std::uint8_t> cells_;
  Kind kind_ = Kind::Weak;
  std::unordered_map<std::string, std::size_t> row_index_;
};

std::string_view to_string(LabelMatrix::Kind k);
LabelMatrix::Kind label_kind_from_string(std::string_view s);

/// Header "pmid,<label>,..."; one 0/1 row per article.
std::string label_matrix_to_csv(const LabelMatrix& m);
LabelMatrix label_matrix_from_csv(std::string_view csv, LabelMatrix::Kind kind);

/// {"kind","label_ids":[...],"rows":[{"pmid","labels":[...]}]}
std::string label_matrix_to_json(const LabelMatrix& m);
LabelMatrix label_matrix_from_json(std::string_view json_text);

void save_label_matrix(const LabelMatrix& m, const std::filesystem::path& path);
/// Format chosen by extension (.csv or .json).
LabelMatrix load_label_matrix(const std::filesystem::path& path,
                              LabelMatrix::Kind csv_kind = LabelMatrix::Kind::Golden);

/// Throws unless both matrices list the same pmids in the same order.
void require_aligned(const LabelMatrix& a, const LabelMatrix& b);

}  // namespace wsindex
