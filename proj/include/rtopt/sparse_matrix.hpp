#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rtopt {

struct Triplet {
  std::uint64_t row;
  std::uint64_t col;
  double value;
};

/// Unassembled (row, col, value) entries. Duplicates are allowed and get summed by assemble().
struct TripletList {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<Triplet> entries;
};

/**
 * Compressed-row sparse matrix, immutable once built.
 *
 * Holds one dose-influence matrix: rows are voxels of an ROI, columns are beamlet
 * weights. Column indices are 32-bit to match the on-disk block layout.
 */
class SparseMatrix {
 public:
  SparseMatrix() : row_offsets_(1, 0) {}

  /// Adopts already-compressed arrays. Throws ValidationError if any invariant is broken.
  SparseMatrix(std::uint64_t rows, std::uint64_t cols, std::vector<std::uint64_t> row_offsets,
               std::vector<std::uint32_t> col_indices, std::vector<double> values);

  static SparseMatrix identity(std::uint64_t n);

  std::uint64_t rows() const noexcept { return rows_; }
  std::uint64_t cols() const noexcept { return cols_; }
  std::uint64_t nnz() const noexcept { return values_.size(); }

  std::span<const std::uint64_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::uint32_t> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  TripletList to_triplets() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::uint64_t rows_ = 0;
  std::uint64_t cols_ = 0;
  std::vector<std::uint64_t> row_offsets_;
  std::vector<std::uint32_t> col_indices_;
  std::vector<double> values_;
};

/// Canonical CSR from triplets: duplicates summed, columns sorted within each row.
SparseMatrix assemble(const TripletList& triplets);

/// out = A x, accumulated left to right within each row.
void matvec(const SparseMatrix& a, std::span<const double> x, std::span<double> out);
std::vector<double> matvec(const SparseMatrix& a, std::span<const double> x);

/// out = A^T y, scattered row by row in ascending row order.
void matvec_transpose(const SparseMatrix& a, std::span<const double> y, std::span<double> out);
std::vector<double> matvec_transpose(const SparseMatrix& a, std::span<const double> y);

/// Sum of each row; used to pick a starting point that lands doses near prescription.
std::vector<double> row_sums(const SparseMatrix& a);

}  // namespace rtopt
