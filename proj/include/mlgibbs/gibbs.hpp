#pragma once

#include <optional>
#include <vector>

#include "mlgibbs/hierarchy.hpp"
#include "mlgibbs/rng.hpp"
#include "mlgibbs/solvers.hpp"
#include "mlgibbs/sparse.hpp"

namespace mlgibbs {

/// Shape-rate Gamma priors for the residual precision (e), the fixed-effect
/// precision (v) and the random-effect precision (u).
struct Priors {
  double alpha_e = 1.0;
  double beta_e = 1.0;
  double alpha_v = 1.0;
  double beta_v = 1e-3;
  double alpha_u = 1.0;
  double beta_u = 1e-3;

  void validate() const;
};

/// Linear mixed model y = W v + Z u + e with X = [W Z]: the first `fixed`
/// columns carry fixed effects, the remaining `random` columns random effects.
struct MixedModelSpec {
  Index fixed = 0;
  Index random = 0;
  Priors priors;

  Index width() const { return fixed + random; }
  /// Same priors with the group sizes of a (possibly coarsened) level.
  MixedModelSpec at_width(Index fixed_cols, Index random_cols) const;
  void validate(Index n_cols) const;
};

struct Hyperparameters {
  double tau = 1.0;
  double lambda_v = 1.0;
  double lambda_u = 1.0;
};

struct GibbsState {
  Vector b;
  double tau = 1.0;
  double lambda_v = 1.0;
  double lambda_u = 1.0;

  Hyperparameters hyper() const { return {tau, lambda_v, lambda_u}; }
  void set_hyper(const Hyperparameters& h) {
    tau = h.tau;
    lambda_v = h.lambda_v;
    lambda_u = h.lambda_u;
  }
};

/// Diagonal of the prior precision: `fixed` copies of lambda_v followed by
/// `random` copies of lambda_u.
Vector assemble_lambda(const MixedModelSpec& spec, double lambda_v, double lambda_u);

Hyperparameters sample_prior_hyperparams(const MixedModelSpec& spec, RandomStream& stream);

/// Conditional Gamma posteriors of tau, lambda_v and lambda_u given b. A
/// group with no columns is redrawn from its prior.
Hyperparameters sample_hyperparams(const GibbsState& state, const SparseMatrix& X,
                                   const Vector& y, const MixedModelSpec& spec,
                                   RandomStream& stream);

/// The two perturbations of the noise-injection system:
/// e1 ~ N(0, tau^-1 I_N) and e2 ~ N(0, Lambda).
struct InjectedNoise {
  Vector e1;
  Vector e2;
};

InjectedNoise draw_noise(Index n_rows, const Vector& lambda, double tau, RandomStream& stream,
                         bool suppressed = false);

/// X^T (y + e1) + e2 / tau
Vector noise_injection_rhs(const SparseMatrix& X, const Vector& y, const InjectedNoise& noise,
                           double tau);

/// Solves (X^T X + Lambda / tau) b = rhs for one level, with plain CG or the
/// two-level preconditioned flexible CG.
class CoefficientSolver {
 public:
  CoefficientSolver(const SparseMatrix& X, SolverConfig config);
  /// Preconditioned when config.preconditioned is set and level >= 1.
  CoefficientSolver(const LevelHierarchy& hierarchy, Index level, SolverConfig config);

  SolveResult solve(const Vector& shift, const Vector& rhs, const Vector& x0,
                    bool use_preconditioner = true);

  const SparseMatrix& matrix() const { return *X_; }
  bool has_preconditioner() const { return precond_.has_value(); }
  const SolverConfig& config() const { return config_; }

 private:
  const SparseMatrix* X_;
  SolverConfig config_;
  std::optional<TwoLevelPreconditioner> precond_;
};

struct CoefficientDraw {
  Vector b;
  InjectedNoise noise;
  SolveReport report;
};

/// One noise-injection draw of b given the precisions held in `state`.
CoefficientDraw draw_coefficient(const SparseMatrix& X, const Vector& y, const GibbsState& state,
                                 const MixedModelSpec& spec, CoefficientSolver& solver,
                                 RandomStream& stream, bool noise_suppressed = false);

struct ChainOptions {
  /// Diagnostic: e1 = e2 = 0, so each draw is the ridge solution.
  bool noise_suppressed = false;
  /// Diagnostic: skip the precision updates and hold these values.
  std::optional<Hyperparameters> fixed_hyper;
  bool record_trace = false;
};

struct ChainResult {
  Vector sum_b;
  Index kept_count = 0;
  std::vector<Hyperparameters> trace;
  Index solves = 0;
  Index cg_iterations = 0;

  friend bool operator==(const ChainResult& a, const ChainResult& b) {
    return a.kept_count == b.kept_count && a.sum_b.size() == b.sum_b.size() &&
           a.sum_b == b.sum_b && a.solves == b.solves && a.cg_iterations == b.cg_iterations;
  }
};

/// A single Markov chain that can be moved between levels. Each call to
/// advance() performs one Gibbs sweep: precisions, then noise, then the
/// coefficient solve. The first sweep draws the precisions from the priors.
class GibbsChain {
 public:
  GibbsChain(const Vector& y, RandomStream stream, ChainOptions options = {});

  struct Sweep {
    Hyperparameters hyper;
    InjectedNoise noise;
    SolveReport report;
  };

  /// One sweep on the level whose matrix and solver are given; `spec` carries
  /// that level's group sizes.
  const Sweep& advance(const SparseMatrix& X, const MixedModelSpec& spec,
                       CoefficientSolver& solver, bool use_preconditioner = true);

  bool initialized() const { return initialized_; }
  const GibbsState& state() const { return state_; }
  /// Replaces b, e.g. after moving to another level.
  void set_coefficients(Vector b) { state_.b = std::move(b); }
  RandomStream& stream() { return stream_; }
  const ChainOptions& options() const { return options_; }
  const Sweep& last_sweep() const { return last_; }

 private:
  const Vector* y_;
  RandomStream stream_;
  ChainOptions options_;
  GibbsState state_;
  bool initialized_ = false;
  Sweep last_;
};

/// Single-level noise-injection Gibbs sampler: H sweeps, the first
/// `burn_in` excluded from the running sum.
ChainResult run_chain(const SparseMatrix& X, const Vector& y, const MixedModelSpec& spec,
                      Index H, Index burn_in, const SolverConfig& solver_config,
                      RandomStream stream, const ChainOptions& options = {});
/// Same chain with a caller-owned solver, e.g. one carrying a two-level
/// preconditioner built from a hierarchy.
ChainResult run_chain(const SparseMatrix& X, const Vector& y, const MixedModelSpec& spec,
                      Index H, Index burn_in, CoefficientSolver& solver, RandomStream stream,
                      const ChainOptions& options = {});

/// X_eval * (sum_b / kept_count)
Vector predict_mean(const ChainResult& result, const SparseMatrix& X_eval);

}  // namespace mlgibbs
