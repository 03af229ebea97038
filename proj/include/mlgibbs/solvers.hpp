#pragma once

#include <functional>
#include <vector>

#include <Eigen/Cholesky>

#include "mlgibbs/hierarchy.hpp"
#include "mlgibbs/sparse.hpp"

namespace mlgibbs {

/// y = A x for a symmetric positive definite A.
using LinearOperator = std::function<void(const Vector& x, Vector& y)>;

struct SolveReport {
  Index iterations = 0;
  double final_residual_norm = 0.0;
  /// ||rhs||, the residual of the zero start. Convergence means
  /// final_residual_norm <= tol * reference_norm.
  double reference_norm = 0.0;
  bool converged = false;
  /// Residual norm before the first update and after each iteration.
  std::vector<double> residual_history;
  /// x^T A x / 2 - rhs^T x at the same points, from the recursive residual.
  /// Unlike the residual norm this decreases monotonically for plain CG.
  std::vector<double> energy_history;
};

struct SolveResult {
  Vector x;
  SolveReport report;
};

struct SolverConfig {
  double tol = 1e-8;
  /// 0 selects 2 * n.
  Index max_iter = 0;
  /// Start each solve from the previous chain sample instead of zero.
  bool warm_start = true;
  /// Two-level preconditioned flexible CG on levels >= 1.
  bool preconditioned = false;
  Index max_coarse_width = 10000;
  int smoothing_steps = 2;
};

/// Conjugate gradients. With a preconditioner the update is the flexible
/// variant (each direction explicitly A-orthogonal to the previous one),
/// which tolerates a preconditioner that changes between applications.
/// Returns the iterate with the smallest residual when max_iter is hit. Throws NumericalError on NaN or a
/// non-positive curvature p^T A p.
SolveResult cg_solve(const LinearOperator& apply_A, const Vector& rhs, const Vector& x0,
                     double tol, Index max_iter, const LinearOperator* precond = nullptr);

/// Composition P_{level} ... P_1 stored per fine feature as (coarse index,
/// weight); each fine feature maps to exactly one coarsest feature.
struct CompositeProlongation {
  Index coarse_dim = 0;
  std::vector<Index> coarse_of;
  std::vector<double> weight;

  static CompositeProlongation from_hierarchy(const LevelHierarchy& h, Index level);
  Index fine_dim() const { return static_cast<Index>(coarse_of.size()); }
  Vector prolong(const Vector& coarse) const;
  Vector restrict(const Vector& fine) const;
};

/// Two-level preconditioner for (X_l^T X_l + diag(shift)): a few CG
/// smoothing iterations from zero followed by an exact correction in the
/// coarsest space, whose Galerkin operator X_0^T X_0 + P^T diag(shift) P is
/// densified once and refactorized whenever the shift changes.
class TwoLevelPreconditioner {
 public:
  /// Throws SetupError for level < 1 or a coarsest width above max_coarse_width.
  static TwoLevelPreconditioner build(const LevelHierarchy& hierarchy, Index level,
                                      const Vector& shift, Index max_coarse_width = 10000,
                                      int smoothing_steps = 2);

  void update_shift(const Vector& shift);

  void apply(const Vector& r, Vector& z) const;

  Index fine_dim() const { return map_.fine_dim(); }
  Index coarse_dim() const { return map_.coarse_dim; }
  int smoothing_steps() const { return smoothing_steps_; }
  const GramOperator& fine_operator() const { return op_; }

 private:
  TwoLevelPreconditioner(const SparseMatrix& fine, Vector shift, CompositeProlongation map,
                         DenseMatrix coarse_gram, int smoothing_steps);

  GramOperator op_;
  CompositeProlongation map_;
  DenseMatrix coarse_gram_;
  Eigen::LLT<DenseMatrix> factor_;
  int smoothing_steps_;
};

TwoLevelPreconditioner build_two_level(const LevelHierarchy& hierarchy, Index level,
                                       const Vector& shift_diag,
                                       Index max_coarse_width = 10000);

Vector precond_apply(const TwoLevelPreconditioner& M, const Vector& r);

}  // namespace mlgibbs
