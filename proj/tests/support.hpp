// Shared helpers for the unit tests: random sparse inputs and dense oracles.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mlgibbs/sparse.hpp"

namespace test {

using mlgibbs::DenseMatrix;
using mlgibbs::Index;
using mlgibbs::SparseMatrix;
using mlgibbs::Vector;

inline DenseMatrix random_dense(Index rows, Index cols, double density, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  DenseMatrix A = DenseMatrix::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      if (u(gen) < density) A(i, j) = n(gen);
  return A;
}

inline SparseMatrix random_sparse(Index rows, Index cols, double density, std::mt19937_64& gen) {
  return SparseMatrix::from_dense(random_dense(rows, cols, density, gen));
}

inline Vector random_vector(Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> d(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = d(gen);
  return v;
}

/// Random contiguous cluster ids: each entry in [0, k) and every id used.
inline std::vector<Index> random_assignment(Index n, Index k, std::mt19937_64& gen) {
  std::vector<Index> a(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) a[i] = i < k ? i : static_cast<Index>(gen() % k);
  std::shuffle(a.begin(), a.end(), gen);
  return a;
}

/// Dense P with 1/sqrt(n_j) entries built straight from the assignment.
inline DenseMatrix dense_prolongator(const std::vector<Index>& a) {
  Index k = 0;
  for (Index c : a) k = std::max(k, c + 1);
  std::vector<double> size(static_cast<std::size_t>(k), 0.0);
  for (Index c : a) size[c] += 1.0;
  DenseMatrix P = DenseMatrix::Zero(static_cast<Index>(a.size()), k);
  for (std::size_t i = 0; i < a.size(); ++i) P(static_cast<Index>(i), a[i]) = 1.0 / std::sqrt(size[a[i]]);
  return P;
}

/// Columns in `groups` blocks of `per` near-parallel copies of a sparse base
/// column; each nonzero is scaled by (1 + jitter * N(0, 1)). Strong
/// within-block correlation makes X^T X badly conditioned.
inline DenseMatrix clustered_dense(Index rows, Index groups, Index per, double density,
                                   double jitter, std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  DenseMatrix D = DenseMatrix::Zero(rows, groups * per);
  for (Index g = 0; g < groups; ++g) {
    Vector base = random_dense(rows, 1, density, gen).col(0);
    base[g % rows] += 1.0;
    for (Index c = 0; c < per; ++c) {
      Vector col = base;
      for (Index i = 0; i < rows; ++i)
        if (col[i] != 0.0) col[i] *= 1.0 + jitter * n(gen);
      D.col(g * per + c) = col;
    }
  }
  return D;
}

inline double rel_diff(const DenseMatrix& a, const DenseMatrix& b) {
  const double scale = std::max(1.0, b.norm());
  return (a - b).norm() / scale;
}

}  // namespace test
