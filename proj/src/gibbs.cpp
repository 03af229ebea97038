#include "mlgibbs/gibbs.hpp"

#include <sstream>

#include "mlgibbs/errors.hpp"

namespace mlgibbs {

void Priors::validate() const {
  for (double p : {alpha_e, beta_e, alpha_v, beta_v, alpha_u, beta_u}) {
    if (!(p > 0.0)) throw ConfigError("all Gamma prior parameters must be positive");
  }
}

MixedModelSpec MixedModelSpec::at_width(Index fixed_cols, Index random_cols) const {
  MixedModelSpec s = *this;
  s.fixed = fixed_cols;
  s.random = random_cols;
  return s;
}

void MixedModelSpec::validate(Index n_cols) const {
  if (fixed < 0 || random < 0) throw ConfigError("group sizes must be non-negative");
  if (width() != n_cols) {
    std::ostringstream msg;
    msg << "model has " << fixed << " fixed + " << random << " random columns but X has "
        << n_cols;
    throw DimensionError(msg.str());
  }
  priors.validate();
}

Vector assemble_lambda(const MixedModelSpec& spec, double lambda_v, double lambda_u) {
  Vector lambda(spec.width());
  lambda.head(spec.fixed).setConstant(lambda_v);
  lambda.tail(spec.random).setConstant(lambda_u);
  return lambda;
}

Hyperparameters sample_prior_hyperparams(const MixedModelSpec& spec, RandomStream& stream) {
  const Priors& p = spec.priors;
  Hyperparameters h;
  h.tau = gamma_sample(stream, p.alpha_e, p.beta_e);
  h.lambda_v = gamma_sample(stream, p.alpha_v, p.beta_v);
  h.lambda_u = gamma_sample(stream, p.alpha_u, p.beta_u);
  return h;
}

Hyperparameters sample_hyperparams(const GibbsState& state, const SparseMatrix& X,
                                   const Vector& y, const MixedModelSpec& spec,
                                   RandomStream& stream) {
  if (state.b.size() != spec.width() || X.cols() != spec.width())
    throw DimensionError("sample_hyperparams: b, X and model widths differ");
  if (y.size() != X.rows()) throw DimensionError("sample_hyperparams: y length mismatch");
  const Priors& p = spec.priors;
  const double sse = (y - spmv(X, state.b)).squaredNorm();
  const double n = static_cast<double>(X.rows());

  Hyperparameters h;
  h.tau = gamma_sample(stream, p.alpha_e + 0.5 * n, p.beta_e + 0.5 * sse);
  if (spec.fixed > 0) {
    const double ss = state.b.head(spec.fixed).squaredNorm();
    h.lambda_v = gamma_sample(stream, p.alpha_v + 0.5 * spec.fixed, p.beta_v + 0.5 * ss);
  } else {
    h.lambda_v = gamma_sample(stream, p.alpha_v, p.beta_v);
  }
  if (spec.random > 0) {
    const double ss = state.b.tail(spec.random).squaredNorm();
    h.lambda_u = gamma_sample(stream, p.alpha_u + 0.5 * spec.random, p.beta_u + 0.5 * ss);
  } else {
    h.lambda_u = gamma_sample(stream, p.alpha_u, p.beta_u);
  }
  return h;
}

InjectedNoise draw_noise(Index n_rows, const Vector& lambda, double tau, RandomStream& stream,
                         bool suppressed) {
  InjectedNoise noise;
  if (suppressed) {
    noise.e1 = Vector::Zero(n_rows);
    noise.e2 = Vector::Zero(lambda.size());
    return noise;
  }
  noise.e1 = normal_vector(stream, n_rows, 0.0, 1.0 / tau);
  normal_vector_heteroscedastic(stream, lambda, noise.e2);
  return noise;
}

Vector noise_injection_rhs(const SparseMatrix& X, const Vector& y, const InjectedNoise& noise,
                           double tau) {
  Vector rhs = spmv_t(X, y + noise.e1);
  rhs += noise.e2 / tau;
  return rhs;
}

CoefficientSolver::CoefficientSolver(const SparseMatrix& X, SolverConfig config)
    : X_(&X), config_(config) {}

CoefficientSolver::CoefficientSolver(const LevelHierarchy& hierarchy, Index level,
                                     SolverConfig config)
    : X_(&hierarchy.matrix(level)), config_(config) {
  if (config_.preconditioned && level >= 1) {
    precond_.emplace(TwoLevelPreconditioner::build(hierarchy, level,
                                                   Vector::Ones(hierarchy.width(level)),
                                                   config_.max_coarse_width,
                                                   config_.smoothing_steps));
  }
}

SolveResult CoefficientSolver::solve(const Vector& shift, const Vector& rhs, const Vector& x0,
                                     bool use_preconditioner) {
  GramOperator op(*X_, shift);
  LinearOperator apply_A = [&op](const Vector& x, Vector& out) { op.apply(x, out); };
  const Vector& start = config_.warm_start ? x0 : Vector();
  if (precond_ && use_preconditioner) {
    precond_->update_shift(shift);
    LinearOperator M = [this](const Vector& r, Vector& z) { precond_->apply(r, z); };
    return cg_solve(apply_A, rhs, start, config_.tol, config_.max_iter, &M);
  }
  return cg_solve(apply_A, rhs, start, config_.tol, config_.max_iter);
}

CoefficientDraw draw_coefficient(const SparseMatrix& X, const Vector& y, const GibbsState& state,
                                 const MixedModelSpec& spec, CoefficientSolver& solver,
                                 RandomStream& stream, bool noise_suppressed) {
  spec.validate(X.cols());
  if (y.size() != X.rows()) throw DimensionError("draw_coefficient: y length mismatch");
  if (!(state.tau > 0.0) || !(state.lambda_v > 0.0) || !(state.lambda_u > 0.0))
    throw DomainError("draw_coefficient: precisions must be positive");
  const Vector lambda = assemble_lambda(spec, state.lambda_v, state.lambda_u);
  CoefficientDraw draw;
  draw.noise = draw_noise(X.rows(), lambda, state.tau, stream, noise_suppressed);
  const Vector rhs = noise_injection_rhs(X, y, draw.noise, state.tau);
  const Vector x0 = state.b.size() == X.cols() ? state.b : Vector();
  SolveResult sol = solver.solve(lambda / state.tau, rhs, x0);
  draw.b = std::move(sol.x);
  draw.report = std::move(sol.report);
  return draw;
}

GibbsChain::GibbsChain(const Vector& y, RandomStream stream, ChainOptions options)
    : y_(&y), stream_(std::move(stream)), options_(std::move(options)) {}

const GibbsChain::Sweep& GibbsChain::advance(const SparseMatrix& X, const MixedModelSpec& spec,
                                             CoefficientSolver& solver,
                                             bool use_preconditioner) {
  if (y_->size() != X.rows()) throw DimensionError("chain: y length does not match X");
  if (initialized_ && state_.b.size() != X.cols())
    throw DimensionError("chain: coefficient vector does not match the level width");

  Hyperparameters hyper;
  if (options_.fixed_hyper) {
    hyper = *options_.fixed_hyper;
  } else if (!initialized_) {
    hyper = sample_prior_hyperparams(spec, stream_);
  } else {
    hyper = sample_hyperparams(state_, X, *y_, spec, stream_);
  }
  state_.set_hyper(hyper);

  const Vector lambda = assemble_lambda(spec, hyper.lambda_v, hyper.lambda_u);
  last_.hyper = hyper;
  last_.noise = draw_noise(X.rows(), lambda, hyper.tau, stream_, options_.noise_suppressed);
  const Vector rhs = noise_injection_rhs(X, *y_, last_.noise, hyper.tau);
  const Vector x0 = initialized_ ? state_.b : Vector();
  SolveResult sol = solver.solve(lambda / hyper.tau, rhs, x0, use_preconditioner);
  state_.b = std::move(sol.x);
  last_.report = std::move(sol.report);
  initialized_ = true;
  return last_;
}

ChainResult run_chain(const SparseMatrix& X, const Vector& y, const MixedModelSpec& spec,
                      Index H, Index burn_in, const SolverConfig& solver_config,
                      RandomStream stream, const ChainOptions& options) {
  spec.validate(X.cols());
  if (y.size() != X.rows()) throw DimensionError("run_chain: y length mismatch");
  if (!(H > burn_in && burn_in >= 0)) throw ConfigError("run_chain: need H > burn_in >= 0");

  CoefficientSolver solver(X, solver_config);
  return run_chain(X, y, spec, H, burn_in, solver, std::move(stream), options);
}

ChainResult run_chain(const SparseMatrix& X, const Vector& y, const MixedModelSpec& spec,
                      Index H, Index burn_in, CoefficientSolver& solver, RandomStream stream,
                      const ChainOptions& options) {
  spec.validate(X.cols());
  if (y.size() != X.rows()) throw DimensionError("run_chain: y length mismatch");
  if (!(H > burn_in && burn_in >= 0)) throw ConfigError("run_chain: need H > burn_in >= 0");
  if (solver.matrix().cols() != X.cols() || solver.matrix().rows() != X.rows())
    throw DimensionError("run_chain: solver was built for a different matrix");

  GibbsChain chain(y, std::move(stream), options);
  ChainResult result;
  result.sum_b = Vector::Zero(X.cols());
  for (Index h = 1; h <= H; ++h) {
    const auto& sweep = [&]() -> const GibbsChain::Sweep& {
      try {
        return chain.advance(X, spec, solver);
      } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << e.what() << " (chain iteration " << h << ")";
        throw NumericalError(msg.str());
      }
    }();
    ++result.solves;
    result.cg_iterations += sweep.report.iterations;
    if (options.record_trace) result.trace.push_back(sweep.hyper);
    if (h > burn_in) {
      result.sum_b += chain.state().b;
      ++result.kept_count;
    }
  }
  return result;
}

Vector predict_mean(const ChainResult& result, const SparseMatrix& X_eval) {
  if (result.kept_count <= 0) throw EstimatorError("predict_mean: no kept samples");
  if (result.sum_b.size() != X_eval.cols())
    throw DimensionError("predict_mean: evaluation matrix width does not match b");
  const Vector mean = result.sum_b / static_cast<double>(result.kept_count);
  return spmv(X_eval, mean);
}

}  // namespace mlgibbs
