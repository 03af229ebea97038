#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mlgibbs {

using Index = std::int64_t;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Compressed sparse row matrix. Immutable once built.
///
/// Invariants: row_offsets is non-decreasing and spans [0, nnz]; column
/// indices are strictly increasing within each row and below n_cols.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  /// Adopts CSR arrays, validating every invariant.
  SparseMatrix(Index n_rows, Index n_cols, std::vector<Index> row_offsets,
               std::vector<Index> col_indices, std::vector<double> values);

  /// Builds a matrix from (row, col, value) entries. Duplicates are summed.
  static SparseMatrix from_triplets(Index n_rows, Index n_cols,
                                    std::span<const Triplet> entries);

  static SparseMatrix from_dense(const DenseMatrix& dense);

  static SparseMatrix identity(Index n);

  Index rows() const { return n_rows_; }
  Index cols() const { return n_cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const Index> row_offsets() const { return row_offsets_; }
  std::span<const Index> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  /// Rows of the matrix in the given order (indices may repeat).
  SparseMatrix select_rows(std::span<const Index> rows) const;

  DenseMatrix to_dense() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  Index n_rows_ = 0;
  Index n_cols_ = 0;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> col_indices_;
  std::vector<double> values_;
};

/// out = A x
void spmv(const SparseMatrix& A, const Vector& x, Vector& out);
Vector spmv(const SparseMatrix& A, const Vector& x);

/// out = A^T x, scattered row by row so A^T is never stored.
void spmv_t(const SparseMatrix& A, const Vector& x, Vector& out);
Vector spmv_t(const SparseMatrix& A, const Vector& x);

/// (A^T A + diag(shift)) x without forming the Gram matrix.
Vector gram_apply(const SparseMatrix& A, const Vector& shift, const Vector& x);

/// Reusable form of gram_apply that owns its row-space scratch buffer.
/// The shift is validated once, on construction or set_shift.
class GramOperator {
 public:
  GramOperator(const SparseMatrix& A, Vector shift);

  void set_shift(Vector shift);
  const Vector& shift() const { return shift_; }
  const SparseMatrix& matrix() const { return *A_; }
  Index size() const { return A_->cols(); }

  void apply(const Vector& x, Vector& out) const;

 private:
  const SparseMatrix* A_;
  Vector shift_;
  mutable Vector scratch_;
};

/// Dense A^T A accumulated row by row from the sparse rows.
DenseMatrix dense_gram(const SparseMatrix& A);

}  // namespace mlgibbs
