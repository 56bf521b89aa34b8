#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace wsindex {

/// Compressed sparse rows with sorted, unique column indices per row.
class CsrMatrix {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  CsrMatrix() = default;
  explicit CsrMatrix(std::size_t cols) : cols_(cols) {}

  std::size_t rows() const { return row_ptr_.size() - 1; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  /// Appends a row; entries are sorted and zeros dropped.
  void add_row(std::vector<Entry> entries);

  std::span<const std::uint32_t> row_indices(std::size_t r) const {
    return {indices_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<double> row_values(std::size_t r) {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  double at(std::size_t r, std::size_t c) const;
  double row_dot(std::size_t r, std::span<const double> dense) const;

  /// Transposed copy (columns become rows), i.e. a CSC view of this matrix.
  CsrMatrix transpose() const;

  CsrMatrix select_rows(std::span<const std::size_t> rows) const;
  /// Keeps `columns` (old ids) renumbered to their position in the list.
  CsrMatrix select_columns(std::span<const std::uint32_t> columns) const;

  bool operator==(const CsrMatrix&) const = default;

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
};

}  // namespace wsindex
