#include "mlgibbs/multilevel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mlgibbs/errors.hpp"

namespace mlgibbs {

double EstimatorAccumulator::mean_iterations(Index level) const {
  const Index s = solves.at(level);
  return s > 0 ? static_cast<double>(cg_iterations.at(level)) / static_cast<double>(s) : 0.0;
}

MixedModelSpec level_spec(const LevelHierarchy& hierarchy, const MixedModelSpec& spec,
                          Index level) {
  const Index boundary = hierarchy.group_boundary(level);
  return spec.at_width(boundary, hierarchy.width(level) - boundary);
}

std::vector<CoefficientSolver> make_level_solvers(const LevelHierarchy& hierarchy,
                                                  const SolverConfig& config) {
  std::vector<CoefficientSolver> solvers;
  solvers.reserve(hierarchy.levels());
  for (Index l = 0; l < hierarchy.levels(); ++l) solvers.emplace_back(hierarchy, l, config);
  return solvers;
}

namespace {

void check_inputs(const LevelHierarchy& hierarchy, const Vector& y, const MixedModelSpec& spec,
                  const SampleSchedule& schedule, const std::vector<CoefficientSolver>& solvers) {
  spec.validate(hierarchy.width(hierarchy.finest()));
  if (spec.fixed != hierarchy.group_boundary(hierarchy.finest()))
    throw ConfigError("model fixed-effect count differs from the hierarchy group boundary");
  if (y.size() != hierarchy.matrix(0).rows()) throw DimensionError("y length does not match X");
  if (static_cast<Index>(solvers.size()) != hierarchy.levels())
    throw ConfigError("need one solver per level");
  for (const Visit& v : schedule.visits) {
    if (v.level < 0 || v.level >= hierarchy.levels()) {
      std::ostringstream msg;
      msg << "schedule visits level " << v.level << " but the hierarchy has "
          << hierarchy.levels() << " levels";
      throw ConfigError(msg.str());
    }
  }
}

EstimatorAccumulator make_accumulator(const LevelHierarchy& hierarchy, EstimatorMode mode,
                                      Coupling coupling) {
  EstimatorAccumulator acc;
  acc.mode = mode;
  acc.coupling = coupling;
  const Index L = hierarchy.levels();
  for (Index l = 0; l < L; ++l) acc.sums.push_back(Vector::Zero(hierarchy.width(l)));
  acc.counts.assign(L, 0);
  acc.solves.assign(L, 0);
  acc.cg_iterations.assign(L, 0);
  acc.max_abs_difference.assign(L, 0.0);
  acc.level_means.assign(L, {});
  return acc;
}

std::string tag(const Error& e, Index level, Index sweep) {
  std::ostringstream msg;
  msg << e.what() << " (level " << level << ", sweep " << sweep << ")";
  return msg.str();
}

// Drives one chain through the schedule; `on_sample` sees each kept sweep.
template <typename OnSample>
void follow_schedule(const LevelHierarchy& hierarchy, const MixedModelSpec& spec,
                     const SampleSchedule& schedule, std::vector<CoefficientSolver>& solvers,
                     GibbsChain& chain, EstimatorAccumulator& acc, OnSample&& on_sample,
                     auto&& use_preconditioner) {
  Index current = -1;
  Index sweep_index = 0;
  auto sweep = [&](Index level) -> const GibbsChain::Sweep& {
    ++sweep_index;
    try {
      const auto& s = chain.advance(hierarchy.matrix(level), level_spec(hierarchy, spec, level),
                                    solvers[level], use_preconditioner(level));
      ++acc.solves[level];
      acc.cg_iterations[level] += s.report.iterations;
      if (chain.options().record_trace) {
        acc.trace.push_back(s.hyper);
        acc.trace_level.push_back(level);
      }
      return s;
    } catch (const NumericalError& e) {
      throw NumericalError(tag(e, level, sweep_index));
    }
  };

  for (const Visit& visit : schedule.visits) {
    if (visit.count <= 0) continue;
    if (chain.initialized() && visit.level != current) {
      chain.set_coefficients(hierarchy.transfer(chain.state().b, current, visit.level));
      current = visit.level;
      for (Index i = 0; i < schedule.level_change_burn; ++i) sweep(current);
    }
    current = visit.level;
    for (Index i = 0; i < visit.count; ++i) {
      const Vector previous = chain.initialized() ? chain.state().b : Vector();
      const auto& s = sweep(current);
      if (!visit.burn_in) on_sample(current, s, previous);
    }
  }
}

double mean_prediction(const SparseMatrix& X, const Vector& b) {
  return X.rows() > 0 ? spmv(X, b).mean() : 0.0;
}

}  // namespace

EstimatorAccumulator run_ml_gibbs(const LevelHierarchy& hierarchy, const Vector& y,
                                  const MixedModelSpec& spec, const SampleSchedule& schedule,
                                  std::vector<CoefficientSolver>& solvers, RandomStream stream,
                                  const MultilevelOptions& options) {
  check_inputs(hierarchy, y, spec, schedule, solvers);
  EstimatorAccumulator acc = make_accumulator(hierarchy, EstimatorMode::pooled, Coupling::solves);
  GibbsChain chain(y, std::move(stream), options.chain);
  follow_schedule(
      hierarchy, spec, schedule, solvers, chain, acc,
      [&](Index level, const GibbsChain::Sweep&, const Vector&) {
        acc.sums[level] += chain.state().b;
        ++acc.counts[level];
        if (options.record_level_means)
          acc.level_means[level].push_back(mean_prediction(hierarchy.matrix(level), chain.state().b));
      },
      [](Index) { return true; });
  return acc;
}

EstimatorAccumulator run_ml_gibbs(const LevelHierarchy& hierarchy, const Vector& y,
                                  const MixedModelSpec& spec, const SampleSchedule& schedule,
                                  const SolverConfig& solver_config, RandomStream stream,
                                  const MultilevelOptions& options) {
  auto solvers = make_level_solvers(hierarchy, solver_config);
  return run_ml_gibbs(hierarchy, y, spec, schedule, solvers, std::move(stream), options);
}

EstimatorAccumulator run_ml_cs(const LevelHierarchy& hierarchy, const Vector& y,
                               const MixedModelSpec& spec, const SampleSchedule& schedule,
                               std::vector<CoefficientSolver>& solvers, RandomStream stream,
                               Coupling coupling, const MultilevelOptions& options) {
  check_inputs(hierarchy, y, spec, schedule, solvers);
  EstimatorAccumulator acc = make_accumulator(hierarchy, EstimatorMode::telescoping, coupling);
  GibbsChain chain(y, std::move(stream), options.chain);

  auto use_preconditioner = [&](Index level) {
    return coupling == Coupling::projection || pair_preconditioned(level);
  };

  follow_schedule(
      hierarchy, spec, schedule, solvers, chain, acc,
      [&](Index level, const GibbsChain::Sweep& sweep, const Vector& previous) {
        const Vector& b = chain.state().b;
        if (level == 0) {
          acc.sums[0] += b;
          ++acc.counts[0];
          if (options.record_level_means)
            acc.level_means[0].push_back(mean_prediction(hierarchy.matrix(0), b));
          return;
        }
        const Prolongator& P = hierarchy.prolongator(level);
        const Index coarse = level - 1;
        const Vector x0 = previous.size() == b.size() ? P.restrict(previous) : Vector();
        SolveReport report;
        Vector coarse_b;
        try {
          coarse_b = coupled_coarse_sample(hierarchy, y, spec, level, sweep, b, x0,
                                           solvers[coarse], use_preconditioner(level), coupling,
                                           &report);
        } catch (const NumericalError& e) {
          throw NumericalError(tag(e, coarse, acc.solves[level]));
        }
        if (coupling == Coupling::solves) {
          ++acc.solves[coarse];
          acc.cg_iterations[coarse] += report.iterations;
        }
        const Vector d = b - P.prolong(coarse_b);
        acc.max_abs_difference[level] =
            std::max(acc.max_abs_difference[level], d.size() ? d.cwiseAbs().maxCoeff() : 0.0);
        if (options.record_level_means)
          acc.level_means[level].push_back(mean_prediction(hierarchy.matrix(level), d));
        acc.sums[level] += d;
        ++acc.counts[level];
      },
      use_preconditioner);
  return acc;
}

EstimatorAccumulator run_ml_cs(const LevelHierarchy& hierarchy, const Vector& y,
                               const MixedModelSpec& spec, const SampleSchedule& schedule,
                               const SolverConfig& solver_config, RandomStream stream,
                               Coupling coupling, const MultilevelOptions& options) {
  auto solvers = make_level_solvers(hierarchy, solver_config);
  return run_ml_cs(hierarchy, y, spec, schedule, solvers, std::move(stream), coupling, options);
}

Vector coupled_coarse_sample(const LevelHierarchy& hierarchy, const Vector& y,
                             const MixedModelSpec& spec, Index level,
                             const GibbsChain::Sweep& sweep, const Vector& fine_b,
                             const Vector& coarse_x0, CoefficientSolver& coarse_solver,
                             bool use_preconditioner, Coupling coupling, SolveReport* report) {
  if (level < 1 || level > hierarchy.finest())
    throw ConfigError("coupled pair needs 1 <= level <= finest");
  const Prolongator& P = hierarchy.prolongator(level);
  if (fine_b.size() != P.fine_dim()) throw DimensionError("fine sample has the wrong width");
  if (coupling == Coupling::projection) return P.restrict(fine_b);

  const Index coarse = level - 1;
  const SparseMatrix& Xc = hierarchy.matrix(coarse);
  const Hyperparameters& h = sweep.hyper;
  const Vector lambda = assemble_lambda(level_spec(hierarchy, spec, coarse), h.lambda_v, h.lambda_u);
  const InjectedNoise noise{sweep.noise.e1, P.restrict(sweep.noise.e2)};
  const Vector rhs = noise_injection_rhs(Xc, y, noise, h.tau);
  SolveResult sol = coarse_solver.solve(lambda / h.tau, rhs, coarse_x0, use_preconditioner);
  if (report) *report = std::move(sol.report);
  return std::move(sol.x);
}

Vector finalize_estimate(const EstimatorAccumulator& acc, const LevelHierarchy& hierarchy,
                         const SparseMatrix& X_eval) {
  const Index L = hierarchy.finest();
  if (static_cast<Index>(acc.sums.size()) != hierarchy.levels())
    throw EstimatorError("accumulator does not match the hierarchy");
  if (X_eval.cols() != hierarchy.width(L))
    throw DimensionError("evaluation matrix width differs from the finest level");

  Vector coefficients;
  if (acc.mode == EstimatorMode::pooled) {
    Index total = 0;
    for (Index l = 0; l <= L; ++l) {
      if (acc.counts[l] == 0) continue;
      Vector fine = hierarchy.prolong(acc.sums[l], l, L);
      if (coefficients.size() == 0) coefficients = std::move(fine); else coefficients += fine;
      total += acc.counts[l];
    }
    if (total == 0) throw EstimatorError("no kept samples on any level");
    coefficients /= static_cast<double>(total);
  } else {
    // A level without samples would silently drop its correction term.
    for (Index l = 0; l <= L; ++l) {
      if (acc.counts[l] > 0) continue;
      std::ostringstream msg;
      msg << "telescoping estimate has no kept samples on level " << l;
      throw EstimatorError(msg.str());
    }
    coefficients = hierarchy.prolong(acc.sums[0] / static_cast<double>(acc.counts[0]), 0, L);
    for (Index l = 1; l <= L; ++l) {
      coefficients += hierarchy.prolong(acc.sums[l] / static_cast<double>(acc.counts[l]), l, L);
    }
  }
  return spmv(X_eval, coefficients);
}

}  // namespace mlgibbs
