#pragma once

#include <span>
#include <vector>

#include "mlgibbs/sparse.hpp"

namespace mlgibbs {

/// Piecewise-constant orthonormal interpolation between a fine feature space
/// and its clustering. As a fine_dim x coarse_dim matrix, column j holds
/// 1/sqrt(n_j) on the n_j fine features of cluster j, so P^T P = I.
class Prolongator {
 public:
  Prolongator() = default;

  /// Throws InvalidAssignment unless the ids cover 0 .. max_id without gaps.
  explicit Prolongator(std::vector<Index> assignment);

  static Prolongator identity(Index n);

  Index fine_dim() const { return static_cast<Index>(assignment_.size()); }
  Index coarse_dim() const { return static_cast<Index>(cluster_sizes_.size()); }
  std::span<const Index> assignment() const { return assignment_; }
  std::span<const Index> cluster_sizes() const { return cluster_sizes_; }

  /// Weight 1/sqrt(n) of fine feature i.
  double weight(Index fine) const { return inv_sqrt_size_[assignment_[fine]]; }
  double cluster_weight(Index cluster) const { return inv_sqrt_size_[cluster]; }

  /// P v: entry i = v[c(i)] / sqrt(n_c(i)).
  Vector prolong(const Vector& coarse) const;
  /// P^T v: entry j = sum over cluster j of v[i], divided by sqrt(n_j).
  Vector restrict(const Vector& fine) const;

  DenseMatrix to_dense() const;

 private:
  std::vector<Index> assignment_;
  std::vector<Index> cluster_sizes_;
  std::vector<double> inv_sqrt_size_;
};

Prolongator build_prolongator(std::span<const Index> assignment);

/// One-pass leader-follower clustering of the columns of X, visited in index
/// order. A column joins the first leader within distance `threshold`,
/// otherwise it becomes a leader. The distance is the cosine distance scaled
/// to [0, 1], (1 - cos) / 2: parallel columns are at 0, orthogonal ones at
/// 1/2 and opposite ones at 1. Zero columns are singleton clusters.
/// Returns contiguous cluster ids numbered by first appearance.
std::vector<Index> leader_follower(const SparseMatrix& X, double threshold);

/// Same, restricted to columns [col_begin, col_end); ids are local to the range.
std::vector<Index> leader_follower(const SparseMatrix& X, double threshold,
                                   Index col_begin, Index col_end);

/// X P: coarse column j = (1/sqrt(n_j)) * sum of the fine columns in cluster j.
SparseMatrix coarsen(const SparseMatrix& X, const Prolongator& P);

struct HierarchyOptions {
  /// Columns [0, group_boundary) are fixed effects, the rest random effects.
  Index group_boundary = 0;
  Index coarse_min = 1;
  Index coarse_max = 1;
  /// Total number of levels including the input matrix.
  Index max_levels = 1;
  int max_bisection_steps = 20;
};

/// Data matrices X_0 (coarsest) ... X_L (input) with X_{l-1} = X_l P_l.
class LevelHierarchy {
 public:
  LevelHierarchy() = default;

  /// Hierarchy holding only the input matrix.
  static LevelHierarchy single(SparseMatrix X, Index group_boundary);

  /// Builds coarser levels from explicit prolongators, listed fine to coarse
  /// (P_L first). Each prolongator must keep the two effect groups apart.
  static LevelHierarchy from_prolongators(SparseMatrix X, Index group_boundary,
                                          std::vector<Prolongator> fine_to_coarse);

  Index levels() const { return static_cast<Index>(matrices_.size()); }
  Index finest() const { return levels() - 1; }

  const SparseMatrix& matrix(Index level) const { return matrices_.at(level); }
  /// P_l, mapping level l-1 to level l (1 <= l <= finest()).
  const Prolongator& prolongator(Index level) const { return prolongators_.at(level - 1); }
  Index group_boundary(Index level) const { return boundaries_.at(level); }
  Index width(Index level) const { return matrices_.at(level).cols(); }
  /// Leader-follower threshold that produced each coarse level (empty when the
  /// levels were given explicitly).
  const std::vector<double>& thresholds() const { return thresholds_; }

  /// Applies P_{to} ... P_{from+1} to a level-`from` vector.
  Vector prolong(const Vector& v, Index from, Index to) const;
  /// Applies P_{to+1}^T ... P_{from}^T to a level-`from` vector.
  Vector restrict(const Vector& v, Index from, Index to) const;
  /// Moves a vector between any two levels.
  Vector transfer(const Vector& v, Index from, Index to) const;

 private:
  friend LevelHierarchy build_hierarchy(const SparseMatrix&, const HierarchyOptions&);

  std::vector<SparseMatrix> matrices_;
  std::vector<Prolongator> prolongators_;
  std::vector<Index> boundaries_;
  std::vector<double> thresholds_;
};

/// Recursively clusters and coarsens X until the coarsest width lands in
/// [coarse_min, coarse_max] or max_levels is reached. Each level's threshold
/// is found by bisection so that its width falls in a band around a
/// geometrically interpolated target. Throws HierarchyError when clustering
/// cannot reduce the width even at threshold 1.
LevelHierarchy build_hierarchy(const SparseMatrix& X, const HierarchyOptions& options);

}  // namespace mlgibbs
