#ifndef MENTOR_CSR_HPP_
#define MENTOR_CSR_HPP_

#include <cstdint>
#include <vector>

#include "mentor/tensor.hpp"

namespace mentor {

struct Triplet {
  std::uint32_t row;
  std::uint32_t col;
  double value;
};

/// Compressed sparse row matrix. Column indices within a row are sorted.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  CsrMatrix(std::uint32_t rows, std::uint32_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  /// Duplicate (row, col) entries are summed.
  static CsrMatrix from_triplets(std::uint32_t rows, std::uint32_t cols, std::vector<Triplet> triplets);
  static CsrMatrix from_arrays(std::uint32_t rows, std::uint32_t cols, std::vector<std::uint32_t> row_ptr,
                               std::vector<std::uint32_t> col_idx, std::vector<double> values);

  std::uint32_t rows() const { return rows_; }
  std::uint32_t cols() const { return cols_; }
  std::size_t nnz() const { return col_idx_.size(); }

  const std::vector<std::uint32_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::uint32_t>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  std::uint32_t row_nnz(std::uint32_t r) const { return row_ptr_[r + 1] - row_ptr_[r]; }
  /// Stored value at (r, c), or 0.
  double at(std::uint32_t r, std::uint32_t c) const;

  /// this * dense. Throws DimensionMismatch.
  Matrix multiply(const Matrix& dense) const;
  /// this^T * dense without materializing the transpose.
  Matrix multiply_transposed(const Matrix& dense) const;

  CsrMatrix transposed() const;
  Matrix to_dense() const;

  /// Hash over shape, structure and values.
  std::uint64_t content_hash() const;

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  std::uint32_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::vector<std::uint32_t> row_ptr_{0};
  std::vector<std::uint32_t> col_idx_;
  std::vector<double> values_;
};

}  // namespace mentor

#endif  // MENTOR_CSR_HPP_
