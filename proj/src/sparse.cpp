#include "wsindex/sparse.hpp"

#include <algorithm>
#include <unordered_map>

#include "wsindex/error.hpp"

namespace wsindex {

void CsrMatrix::add_row(std::vector<Entry> entries) {
  std::sort(entries.begin(), entries.end());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [c, v] = entries[i];
    if (c >= cols_) throw Error("sparse column index out of range");
    if (i > 0 && entries[i - 1].first == c) throw Error("duplicate column in sparse row");
    if (v == 0.0) continue;
    indices_.push_back(c);
    values_.push_back(v);
  }
  row_ptr_.push_back(values_.size());
}

double CsrMatrix::at(std::size_t r, std::size_t c) const {
  const auto idx = row_indices(r);
  auto it = std::lower_bound(idx.begin(), idx.end(), static_cast<std::uint32_t>(c));
  if (it == idx.end() || *it != c) return 0.0;
  return values_[row_ptr_[r] + static_cast<std::size_t>(it - idx.begin())];
}

double CsrMatrix::row_dot(std::size_t r, std::span<const double> dense) const {
  double s = 0.0;
  for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) s += values_[p] * dense[indices_[p]];
  return s;
}

CsrMatrix CsrMatrix::transpose() const {
  CsrMatrix t(rows());
  std::vector<std::size_t> counts(cols_ + 1, 0);
  for (auto c : indices_) ++counts[c + 1];
  for (std::size_t c = 0; c < cols_; ++c) counts[c + 1] += counts[c];
  t.row_ptr_ = counts;
  t.indices_.resize(nnz());
  t.values_.resize(nnz());
  std::vector<std::size_t> next(counts.begin(), counts.end() - 1);
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
      const auto dst = next[indices_[p]]++;
      t.indices_[dst] = static_cast<std::uint32_t>(r);
      t.values_[dst] = values_[p];
    }
  }
  return t;
}

CsrMatrix CsrMatrix::select_rows(std::span<const std::size_t> rows) const {
  CsrMatrix out(cols_);
  for (auto r : rows) {
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
      out.indices_.push_back(indices_[p]);
      out.values_.push_back(values_[p]);
    }
    out.row_ptr_.push_back(out.values_.size());
  }
  return out;
}

CsrMatrix CsrMatrix::select_columns(std::span<const std::uint32_t> columns) const {
  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    remap.emplace(columns[i], static_cast<std::uint32_t>(i));
  }
  CsrMatrix out(columns.size());
  std::vector<Entry> row;
  for (std::size_t r = 0; r < rows(); ++r) {
    row.clear();
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
      if (auto it = remap.find(indices_[p]); it != remap.end()) {
        row.emplace_back(it->second, values_[p]);
      }
    }
    out.add_row(row);
  }
  return out;
}

}  // namespace wsindex
