#include "mentor/csr.hpp"

#include <algorithm>
#include <string>

#include "mentor/error.hpp"

namespace mentor {

CsrMatrix CsrMatrix::from_triplets(std::uint32_t rows, std::uint32_t cols, std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CsrMatrix m(rows, cols);
  m.col_idx_.reserve(triplets.size());
  m.values_.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const Triplet& t = triplets[i];
    if (t.row >= rows || t.col >= cols) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "triplet (" + std::to_string(t.row) + ", " + std::to_string(t.col) + ") outside matrix");
    }
    if (i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col) {
      m.values_.back() += t.value;
      continue;
    }
    m.col_idx_.push_back(t.col);
    m.values_.push_back(t.value);
    ++m.row_ptr_[t.row + 1];
  }
  for (std::uint32_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
  return m;
}

CsrMatrix CsrMatrix::from_arrays(std::uint32_t rows, std::uint32_t cols, std::vector<std::uint32_t> row_ptr,
                                 std::vector<std::uint32_t> col_idx, std::vector<double> values) {
  if (row_ptr.size() != static_cast<std::size_t>(rows) + 1 || row_ptr.front() != 0 ||
      row_ptr.back() != col_idx.size() || col_idx.size() != values.size()) {
    throw Error(ErrorCode::DimensionMismatch, "inconsistent CSR arrays");
  }
  for (std::uint32_t r = 0; r < rows; ++r) {
    if (row_ptr[r] > row_ptr[r + 1]) throw Error(ErrorCode::DimensionMismatch, "row_ptr not monotone");
    for (std::uint32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      if (col_idx[k] >= cols || (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1])) {
        throw Error(ErrorCode::DimensionMismatch, "bad column index in row " + std::to_string(r));
      }
    }
  }
  CsrMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_ = std::move(row_ptr);
  m.col_idx_ = std::move(col_idx);
  m.values_ = std::move(values);
  return m;
}

double CsrMatrix::at(std::uint32_t r, std::uint32_t c) const {
  auto first = col_idx_.begin() + row_ptr_[r];
  auto last = col_idx_.begin() + row_ptr_[r + 1];
  auto it = std::lower_bound(first, last, c);
  return (it != last && *it == c) ? values_[it - col_idx_.begin()] : 0.0;
}

Matrix CsrMatrix::multiply(const Matrix& dense) const {
  if (dense.rows() != cols_) {
    throw Error(ErrorCode::DimensionMismatch, "sparse " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                                  " times dense with " + std::to_string(dense.rows()) + " rows");
  }
  Matrix out = Matrix::Zero(rows_, dense.cols());
  for (std::uint32_t r = 0; r < rows_; ++r) {
    for (std::uint32_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      out.row(r).noalias() += values_[k] * dense.row(col_idx_[k]);
    }
  }
  return out;
}

Matrix CsrMatrix::multiply_transposed(const Matrix& dense) const {
  if (dense.rows() != rows_) {
    throw Error(ErrorCode::DimensionMismatch, "transposed sparse product: dense has " +
                                                  std::to_string(dense.rows()) + " rows, expected " +
                                                  std::to_string(rows_));
  }
  Matrix out = Matrix::Zero(cols_, dense.cols());
  for (std::uint32_t r = 0; r < rows_; ++r) {
    for (std::uint32_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      out.row(col_idx_[k]).noalias() += values_[k] * dense.row(r);
    }
  }
  return out;
}

CsrMatrix CsrMatrix::transposed() const {
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::uint32_t r = 0; r < rows_; ++r) {
    for (std::uint32_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) t.push_back({col_idx_[k], r, values_[k]});
  }
  return from_triplets(cols_, rows_, std::move(t));
}

Matrix CsrMatrix::to_dense() const {
  Matrix out = Matrix::Zero(rows_, cols_);
  for (std::uint32_t r = 0; r < rows_; ++r) {
    for (std::uint32_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) out(r, col_idx_[k]) = values_[k];
  }
  return out;
}

std::uint64_t CsrMatrix::content_hash() const {
  std::uint64_t h = fnv1a(&rows_, sizeof rows_);
  h = fnv1a(&cols_, sizeof cols_, h);
  h = fnv1a(row_ptr_.data(), row_ptr_.size() * sizeof(std::uint32_t), h);
  h = fnv1a(col_idx_.data(), col_idx_.size() * sizeof(std::uint32_t), h);
  return fnv1a(values_.data(), values_.size() * sizeof(double), h);
}

}  // namespace mentor
