#include "mlgibbs/solvers.hpp"

#include <cmath>
#include <sstream>

#include "mlgibbs/errors.hpp"

namespace mlgibbs {

SolveResult cg_solve(const LinearOperator& apply_A, const Vector& rhs, const Vector& x0,
                     double tol, Index max_iter, const LinearOperator* precond) {
  if (!(tol > 0.0)) throw DomainError("cg_solve: tolerance must be positive");
  const Index n = rhs.size();
  if (x0.size() != 0 && x0.size() != n) throw DimensionError("cg_solve: x0 length mismatch");
  if (max_iter <= 0) max_iter = 2 * n;

  SolveResult result;
  SolveReport& report = result.report;
  report.reference_norm = rhs.norm();
  if (!std::isfinite(report.reference_norm)) throw NumericalError("cg_solve: non-finite rhs");

  Vector& x = result.x;
  x = x0.size() == n ? x0 : Vector::Zero(n);
  if (report.reference_norm == 0.0) {
    x.setZero();
    report.converged = true;
    report.residual_history.push_back(0.0);
    return result;
  }

  const double target = tol * report.reference_norm;
  Vector q(n);
  apply_A(x, q);
  Vector r = rhs - q;
  double r_norm = r.norm();
  report.residual_history.push_back(r_norm);
  report.energy_history.push_back(-0.5 * x.dot(rhs + r));
  if (!std::isfinite(r_norm)) throw NumericalError("cg_solve: non-finite initial residual");
  if (r_norm <= target) {
    report.converged = true;
    report.final_residual_norm = r_norm;
    return result;
  }

  Vector z(n);
  if (precond) (*precond)(r, z); else z = r;
  Vector p = z;
  double rz = r.dot(z);
  Vector best_x = x;
  double best_norm = r_norm;

  for (Index k = 1; k <= max_iter; ++k) {
    apply_A(p, q);
    const double curvature = p.dot(q);
    if (!std::isfinite(curvature) || !std::isfinite(rz)) {
      std::ostringstream msg;
      msg << "cg_solve: NaN encountered at iteration " << k;
      throw NumericalError(msg.str());
    }
    if (curvature <= 0.0) {
      std::ostringstream msg;
      msg << "cg_solve: non-positive curvature " << curvature << " at iteration " << k
          << "; operator is not positive definite";
      throw NumericalError(msg.str());
    }
    // The flexible variant needs the exact line search p.r; for a fixed SPD
    // preconditioner it equals r.z.
    const double alpha = (precond ? p.dot(r) : rz) / curvature;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    r_norm = r.norm();
    report.iterations = k;
    report.residual_history.push_back(r_norm);
    report.energy_history.push_back(-0.5 * x.dot(rhs + r));
    if (!std::isfinite(r_norm)) {
      std::ostringstream msg;
      msg << "cg_solve: NaN residual at iteration " << k;
      throw NumericalError(msg.str());
    }
    if (r_norm < best_norm) {
      best_norm = r_norm;
      best_x = x;
    }
    if (r_norm <= target) {
      report.converged = true;
      break;
    }

    double beta;
    if (precond) {
      // New direction A-orthogonal to the previous one.
      (*precond)(r, z);
      beta = -z.dot(q) / curvature;
      rz = r.dot(z);
    } else {
      const double rz_new = r.squaredNorm();
      beta = rz_new / rz;
      rz = rz_new;
      z = r;
    }
    p = z + beta * p;
  }

  if (!report.converged) {
    x = std::move(best_x);
    r_norm = best_norm;
  }
  report.final_residual_norm = r_norm;
  return result;
}

CompositeProlongation CompositeProlongation::from_hierarchy(const LevelHierarchy& h,
                                                            Index level) {
  CompositeProlongation map;
  const Index n = h.width(level);
  map.coarse_of.resize(n);
  map.weight.assign(n, 1.0);
  for (Index i = 0; i < n; ++i) map.coarse_of[i] = i;
  for (Index l = level; l >= 1; --l) {
    const Prolongator& P = h.prolongator(l);
    for (Index i = 0; i < n; ++i) {
      const Index at = map.coarse_of[i];
      map.weight[i] *= P.weight(at);
      map.coarse_of[i] = P.assignment()[at];
    }
  }
  map.coarse_dim = h.width(0);
  return map;
}

Vector CompositeProlongation::prolong(const Vector& coarse) const {
  if (coarse.size() != coarse_dim) throw DimensionError("composite prolong: length mismatch");
  Vector fine(fine_dim());
  for (Index i = 0; i < fine_dim(); ++i) fine[i] = weight[i] * coarse[coarse_of[i]];
  return fine;
}

Vector CompositeProlongation::restrict(const Vector& fine) const {
  if (fine.size() != fine_dim()) throw DimensionError("composite restrict: length mismatch");
  Vector coarse = Vector::Zero(coarse_dim);
  for (Index i = 0; i < fine_dim(); ++i) coarse[coarse_of[i]] += weight[i] * fine[i];
  return coarse;
}

TwoLevelPreconditioner::TwoLevelPreconditioner(const SparseMatrix& fine, Vector shift,
                                               CompositeProlongation map,
                                               DenseMatrix coarse_gram, int smoothing_steps)
    : op_(fine, std::move(shift)),
      map_(std::move(map)),
      coarse_gram_(std::move(coarse_gram)),
      smoothing_steps_(smoothing_steps) {
  update_shift(op_.shift());
}

TwoLevelPreconditioner TwoLevelPreconditioner::build(const LevelHierarchy& hierarchy,
                                                     Index level, const Vector& shift,
                                                     Index max_coarse_width,
                                                     int smoothing_steps) {
  if (level < 1 || level > hierarchy.finest()) {
    std::ostringstream msg;
    msg << "two-level preconditioner needs a coarser level below level " << level
        << " (hierarchy has " << hierarchy.levels() << " levels)";
    throw SetupError(msg.str());
  }
  if (hierarchy.width(0) > max_coarse_width) {
    std::ostringstream msg;
    msg << "coarsest width " << hierarchy.width(0) << " exceeds the dense limit "
        << max_coarse_width;
    throw SetupError(msg.str());
  }
  if (smoothing_steps < 0) throw SetupError("smoothing step count must be non-negative");
  return TwoLevelPreconditioner(hierarchy.matrix(level), shift,
                                CompositeProlongation::from_hierarchy(hierarchy, level),
                                dense_gram(hierarchy.matrix(0)), smoothing_steps);
}

void TwoLevelPreconditioner::update_shift(const Vector& shift) {
  if (&shift != &op_.shift()) op_.set_shift(shift);
  Vector coarse_shift = Vector::Zero(map_.coarse_dim);
  for (Index i = 0; i < map_.fine_dim(); ++i)
    coarse_shift[map_.coarse_of[i]] += map_.weight[i] * map_.weight[i] * op_.shift()[i];

  DenseMatrix A = coarse_gram_;
  A.diagonal() += coarse_shift;
  factor_.compute(A);
  if (factor_.info() != Eigen::Success) {
    const double jitter = 1e-12 * A.trace() / static_cast<double>(A.rows());
    A.diagonal().array() += jitter;
    factor_.compute(A);
    if (factor_.info() != Eigen::Success)
      throw NumericalError("coarse Galerkin matrix is not positive definite");
  }
}

void TwoLevelPreconditioner::apply(const Vector& r, Vector& z) const {
  if (r.size() != fine_dim()) throw DimensionError("precond_apply: length mismatch");
  z.setZero(fine_dim());
  // Fixed number of plain CG steps from zero. The last iterate is kept even
  // when its residual norm grew, since CG only decreases the energy norm.
  Vector res = r;
  Vector p = r;
  Vector q;
  double rr = res.squaredNorm();
  for (int k = 0; k < smoothing_steps_ && rr > 0.0; ++k) {
    op_.apply(p, q);
    const double curvature = p.dot(q);
    if (!(curvature > 0.0) || !std::isfinite(curvature))
      throw NumericalError("precond_apply: smoothing hit a non-positive curvature");
    const double alpha = rr / curvature;
    z.noalias() += alpha * p;
    res.noalias() -= alpha * q;
    const double rr_new = res.squaredNorm();
    p = res + (rr_new / rr) * p;
    rr = rr_new;
  }
  const Vector coarse_rhs = map_.restrict(res);
  const Vector coarse_sol = factor_.solve(coarse_rhs);
  z += map_.prolong(coarse_sol);
}

TwoLevelPreconditioner build_two_level(const LevelHierarchy& hierarchy, Index level,
                                       const Vector& shift_diag, Index max_coarse_width) {
  return TwoLevelPreconditioner::build(hierarchy, level, shift_diag, max_coarse_width);
}

Vector precond_apply(const TwoLevelPreconditioner& M, const Vector& r) {
  Vector z;
  M.apply(r, z);
  return z;
}

}  // namespace mlgibbs
