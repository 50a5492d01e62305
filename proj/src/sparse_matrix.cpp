#include "rtopt/sparse_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rtopt/error.hpp"

namespace rtopt {

SparseMatrix::SparseMatrix(std::uint64_t rows, std::uint64_t cols,
                           std::vector<std::uint64_t> row_offsets,
                           std::vector<std::uint32_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (cols_ > std::uint64_t{std::numeric_limits<std::uint32_t>::max()} + 1) {
    throw Error(ErrorCode::ValidationError, "column count exceeds 32-bit index range");
  }
  if (row_offsets_.size() != rows_ + 1) {
    throw Error(ErrorCode::ValidationError, "row_offsets must have rows+1 entries");
  }
  if (col_indices_.size() != values_.size()) {
    throw Error(ErrorCode::ValidationError, "col_indices and values differ in length");
  }
  if (row_offsets_.front() != 0 || row_offsets_.back() != values_.size()) {
    throw Error(ErrorCode::ValidationError, "row_offsets must start at 0 and end at nnz");
  }
  for (std::uint64_t r = 0; r < rows_; ++r) {
    const auto begin = row_offsets_[r];
    const auto end = row_offsets_[r + 1];
    if (end < begin) {
      throw Error(ErrorCode::ValidationError,
                  "row_offsets decreasing at row " + std::to_string(r));
    }
    for (auto k = begin; k < end; ++k) {
      if (col_indices_[k] >= cols_) {
        throw Error(ErrorCode::ValidationError,
                    "column index out of range in row " + std::to_string(r));
      }
      if (k > begin && col_indices_[k] <= col_indices_[k - 1]) {
        throw Error(ErrorCode::ValidationError,
                    "column indices not strictly increasing in row " + std::to_string(r));
      }
      if (!std::isfinite(values_[k])) {
        throw Error(ErrorCode::ValidationError, "non-finite value in row " + std::to_string(r));
      }
    }
  }
}

SparseMatrix SparseMatrix::identity(std::uint64_t n) {
  std::vector<std::uint64_t> offsets(n + 1);
  std::iota(offsets.begin(), offsets.end(), 0);
  std::vector<std::uint32_t> cols(n);
  std::iota(cols.begin(), cols.end(), 0);
  return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0));
}

TripletList SparseMatrix::to_triplets() const {
  TripletList t{rows_, cols_, {}};
  t.entries.reserve(nnz());
  for (std::uint64_t r = 0; r < rows_; ++r) {
    for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      t.entries.push_back({r, col_indices_[k], values_[k]});
    }
  }
  return t;
}

SparseMatrix assemble(const TripletList& triplets) {
  for (std::size_t i = 0; i < triplets.entries.size(); ++i) {
    const auto& e = triplets.entries[i];
    if (e.row >= triplets.rows || e.col >= triplets.cols) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "entry " + std::to_string(i) + " at (" + std::to_string(e.row) + ", " +
                      std::to_string(e.col) + ") outside " + std::to_string(triplets.rows) + "x" +
                      std::to_string(triplets.cols));
    }
  }

  // Stable sort keeps duplicate summation in input order.
  std::vector<Triplet> sorted = triplets.entries;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  std::vector<std::uint64_t> offsets(triplets.rows + 1, 0);
  std::vector<std::uint32_t> cols;
  std::vector<double> values;
  cols.reserve(sorted.size());
  values.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size();) {
    const auto row = sorted[i].row;
    const auto col = sorted[i].col;
    double sum = 0.0;
    for (; i < sorted.size() && sorted[i].row == row && sorted[i].col == col; ++i) {
      sum += sorted[i].value;
    }
    cols.push_back(static_cast<std::uint32_t>(col));
    values.push_back(sum);
    ++offsets[row + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return SparseMatrix(triplets.rows, triplets.cols, std::move(offsets), std::move(cols),
                      std::move(values));
}

void matvec(const SparseMatrix& a, std::span<const double> x, std::span<double> out) {
  if (x.size() != a.cols() || out.size() != a.rows()) {
    throw Error(ErrorCode::DimensionMismatch,
                "matvec: matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    ", x has " + std::to_string(x.size()) + ", out has " +
                    std::to_string(out.size()));
  }
  const auto offsets = a.row_offsets();
  const auto cols = a.col_indices();
  const auto vals = a.values();
  for (std::uint64_t r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (auto k = offsets[r]; k < offsets[r + 1]; ++k) acc += vals[k] * x[cols[k]];
    out[r] = acc;
  }
}

std::vector<double> matvec(const SparseMatrix& a, std::span<const double> x) {
  std::vector<double> out(a.rows());
  matvec(a, x, out);
  return out;
}

void matvec_transpose(const SparseMatrix& a, std::span<const double> y, std::span<double> out) {
  if (y.size() != a.rows() || out.size() != a.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "matvec_transpose: matrix is " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + ", y has " + std::to_string(y.size()) +
                    ", out has " + std::to_string(out.size()));
  }
  std::fill(out.begin(), out.end(), 0.0);
  const auto offsets = a.row_offsets();
  const auto cols = a.col_indices();
  const auto vals = a.values();
  for (std::uint64_t r = 0; r < a.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (auto k = offsets[r]; k < offsets[r + 1]; ++k) out[cols[k]] += vals[k] * yr;
  }
}

std::vector<double> matvec_transpose(const SparseMatrix& a, std::span<const double> y) {
  std::vector<double> out(a.cols());
  matvec_transpose(a, y, out);
  return out;
}

std::vector<double> row_sums(const SparseMatrix& a) {
  std::vector<double> sums(a.rows(), 0.0);
  const auto offsets = a.row_offsets();
  const auto vals = a.values();
  for (std::uint64_t r = 0; r < a.rows(); ++r) {
    for (auto k = offsets[r]; k < offsets[r + 1]; ++k) sums[r] += vals[k];
  }
  return sums;
}

}  // namespace rtopt
