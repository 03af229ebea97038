#include "mlgibbs/sparse.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "mlgibbs/errors.hpp"

namespace mlgibbs {

namespace {

void require_length(const char* op, Index got, Index expected) {
  if (got != expected) {
    std::ostringstream msg;
    msg << op << ": vector length " << got << " does not match expected "
        << expected;
    throw DimensionError(msg.str());
  }
}

void require_positive_shift(const Vector& shift) {
  for (Index i = 0; i < shift.size(); ++i) {
    if (!(shift[i] > 0.0)) {
      std::ostringstream msg;
      msg << "gram_apply: diagonal shift entry " << i << " = " << shift[i]
          << " must be positive";
      throw DomainError(msg.str());
    }
  }
}

}  // namespace

SparseMatrix::SparseMatrix(Index n_rows, Index n_cols,
                           std::vector<Index> row_offsets,
                           std::vector<Index> col_indices,
                           std::vector<double> values)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (n_rows_ < 0 || n_cols_ < 0) throw DimensionError("negative matrix shape");
  if (static_cast<Index>(row_offsets_.size()) != n_rows_ + 1)
    throw DimensionError("row_offsets must have n_rows + 1 entries");
  if (col_indices_.size() != values_.size())
    throw DimensionError("col_indices and values differ in length");
  if (row_offsets_.front() != 0 ||
      row_offsets_.back() != static_cast<Index>(values_.size()))
    throw IndexError("row_offsets must start at 0 and end at nnz");
  for (Index r = 0; r < n_rows_; ++r) {
    const Index begin = row_offsets_[r], end = row_offsets_[r + 1];
    if (end < begin) throw IndexError("row_offsets must be non-decreasing");
    for (Index k = begin; k < end; ++k) {
      const Index c = col_indices_[k];
      if (c < 0 || c >= n_cols_) {
        std::ostringstream msg;
        msg << "column index " << c << " in row " << r << " out of range";
        throw IndexError(msg.str());
      }
      if (k > begin && col_indices_[k - 1] >= c)
        throw IndexError("column indices must be strictly increasing per row");
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(Index n_rows, Index n_cols,
                                         std::span<const Triplet> entries) {
  if (n_rows < 0 || n_cols < 0) throw DimensionError("negative matrix shape");
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= n_rows || e.col < 0 || e.col >= n_cols) {
      std::ostringstream msg;
      msg << "entry (" << e.row << ", " << e.col << ", " << e.value
          << ") out of range for shape " << n_rows << "x" << n_cols;
      throw IndexError(msg.str());
    }
  }
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = entries[a];
    const auto& eb = entries[b];
    return ea.row != eb.row ? ea.row < eb.row : ea.col < eb.col;
  });

  std::vector<Index> offsets(n_rows + 1, 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  cols.reserve(entries.size());
  vals.reserve(entries.size());
  Index last_row = -1, last_col = -1;
  for (std::size_t idx : order) {
    const auto& e = entries[idx];
    if (e.row == last_row && e.col == last_col) {
      vals.back() += e.value;
      continue;
    }
    cols.push_back(e.col);
    vals.push_back(e.value);
    ++offsets[e.row + 1];
    last_row = e.row;
    last_col = e.col;
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return SparseMatrix(n_rows, n_cols, std::move(offsets), std::move(cols),
                      std::move(vals));
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& dense) {
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<double> vals;
  for (Index r = 0; r < dense.rows(); ++r) {
    for (Index c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != 0.0) {
        cols.push_back(c);
        vals.push_back(dense(r, c));
      }
    }
    offsets.push_back(static_cast<Index>(cols.size()));
  }
  return SparseMatrix(dense.rows(), dense.cols(), std::move(offsets),
                      std::move(cols), std::move(vals));
}

SparseMatrix SparseMatrix::identity(Index n) {
  std::vector<Index> offsets(n + 1), cols(n);
  std::iota(offsets.begin(), offsets.end(), Index{0});
  std::iota(cols.begin(), cols.end(), Index{0});
  return SparseMatrix(n, n, std::move(offsets), std::move(cols),
                      std::vector<double>(n, 1.0));
}

SparseMatrix SparseMatrix::select_rows(std::span<const Index> rows) const {
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<double> vals;
  offsets.reserve(rows.size() + 1);
  for (Index r : rows) {
    if (r < 0 || r >= n_rows_) throw IndexError("select_rows: row out of range");
    const Index begin = row_offsets_[r], end = row_offsets_[r + 1];
    cols.insert(cols.end(), col_indices_.begin() + begin, col_indices_.begin() + end);
    vals.insert(vals.end(), values_.begin() + begin, values_.begin() + end);
    offsets.push_back(static_cast<Index>(cols.size()));
  }
  return SparseMatrix(static_cast<Index>(rows.size()), n_cols_, std::move(offsets),
                      std::move(cols), std::move(vals));
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix dense = DenseMatrix::Zero(n_rows_, n_cols_);
  for (Index r = 0; r < n_rows_; ++r)
    for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
      dense(r, col_indices_[k]) = values_[k];
  return dense;
}

void spmv(const SparseMatrix& A, const Vector& x, Vector& out) {
  require_length("spmv", x.size(), A.cols());
  const auto offsets = A.row_offsets();
  const auto cols = A.col_indices();
  const auto vals = A.values();
  out.resize(A.rows());
  for (Index r = 0; r < A.rows(); ++r) {
    double acc = 0.0;
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k) acc += vals[k] * x[cols[k]];
    out[r] = acc;
  }
}

Vector spmv(const SparseMatrix& A, const Vector& x) {
  Vector out;
  spmv(A, x, out);
  return out;
}

void spmv_t(const SparseMatrix& A, const Vector& x, Vector& out) {
  require_length("spmv_t", x.size(), A.rows());
  const auto offsets = A.row_offsets();
  const auto cols = A.col_indices();
  const auto vals = A.values();
  out.setZero(A.cols());
  for (Index r = 0; r < A.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k) out[cols[k]] += vals[k] * xr;
  }
}

Vector spmv_t(const SparseMatrix& A, const Vector& x) {
  Vector out;
  spmv_t(A, x, out);
  return out;
}

Vector gram_apply(const SparseMatrix& A, const Vector& shift, const Vector& x) {
  require_length("gram_apply", shift.size(), A.cols());
  GramOperator op(A, shift);
  Vector out;
  op.apply(x, out);
  return out;
}

GramOperator::GramOperator(const SparseMatrix& A, Vector shift) : A_(&A) {
  set_shift(std::move(shift));
}

void GramOperator::set_shift(Vector shift) {
  require_length("gram_apply", shift.size(), A_->cols());
  require_positive_shift(shift);
  shift_ = std::move(shift);
}

void GramOperator::apply(const Vector& x, Vector& out) const {
  require_length("gram_apply", x.size(), A_->cols());
  spmv(*A_, x, scratch_);
  spmv_t(*A_, scratch_, out);
  out.array() += shift_.array() * x.array();
}

DenseMatrix dense_gram(const SparseMatrix& A) {
  DenseMatrix G = DenseMatrix::Zero(A.cols(), A.cols());
  const auto offsets = A.row_offsets();
  const auto cols = A.col_indices();
  const auto vals = A.values();
  for (Index r = 0; r < A.rows(); ++r) {
    for (Index i = offsets[r]; i < offsets[r + 1]; ++i) {
      const double vi = vals[i];
      for (Index j = i; j < offsets[r + 1]; ++j) G(cols[i], cols[j]) += vi * vals[j];
    }
  }
  return G.selfadjointView<Eigen::Upper>();
}

}  // namespace mlgibbs
