#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlgibbs/gibbs.hpp"
#include "mlgibbs/hierarchy.hpp"

namespace mlgibbs {

enum class ScheduleKind { consecutive, v_cycle, w_cycle };

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::consecutive;
  /// Samples per visit for the cycles.
  Index chunk = 0;

  /// "consecutive", "vcycle:<k>" or "wcycle:<k>"; ConfigError otherwise.
  static ScheduleSpec parse(const std::string& text);
  std::string to_string() const;
};

struct Visit {
  Index level = 0;
  Index count = 0;
  bool burn_in = false;

  friend bool operator==(const Visit&, const Visit&) = default;
};

struct SampleSchedule {
  /// In order; the leading burn-in visit (if any) sits on level 0.
  std::vector<Visit> visits;
  /// Kept samples per level.
  std::vector<Index> totals;
  Index burn_in = 0;
  /// Extra sweeps discarded after every level change.
  Index level_change_burn = 0;

  Index levels() const { return static_cast<Index>(totals.size()); }
  Index kept() const;
};

/// One period of the level ordering. V-cycle: 0, 1, ..., L, L-1, ..., 1.
/// W-cycle: the multigrid W ordering (each level descends to the one below
/// twice), read periodically starting from the coarsest level; for three
/// levels 0, 1, 0, 1, 2, 1.
std::vector<Index> cycle_pattern(ScheduleKind kind, Index levels);

/// Burn-in on level 0, then H_total - burn_in kept samples. Consecutive
/// splits them equally in ascending level order (remainder to the coarsest
/// levels); cycles repeat the pattern with `chunk` samples per visit and the
/// last partial period fills the pattern prefix.
SampleSchedule make_schedule(const ScheduleSpec& spec, Index levels, Index H_total,
                             Index burn_in);

/// Burn-in on level 0 followed by totals[l] consecutive samples per level.
SampleSchedule make_schedule_from_totals(std::vector<Index> totals, Index burn_in);

struct LevelCost {
  /// Cost of one sample per level (nonzeros of X_l).
  std::vector<std::uint64_t> nnz;
  /// Pilot sample variance per level.
  std::vector<double> variance;
};

LevelCost level_costs(const LevelHierarchy& hierarchy);

/// H_l = floor((1/C_l) / sum_k (1/C_k) * H), in exact integer arithmetic.
std::vector<Index> allocate_cost(const LevelCost& costs, Index H_total);

/// H_l = floor(sqrt(s_l^2/C_l) / sum_k sqrt(s_k^2/C_k) * H).
std::vector<Index> allocate_variance(const LevelCost& costs, Index H_total);

enum class EstimatorMode { pooled, telescoping };
enum class Coupling { solves, projection };

struct EstimatorAccumulator {
  EstimatorMode mode = EstimatorMode::pooled;
  Coupling coupling = Coupling::solves;
  /// Pooled: per-level sums of b_l. Telescoping: level 0 sum of b_0 and, for
  /// l >= 1, sums of the differences d_l.
  std::vector<Vector> sums;
  std::vector<Index> counts;
  std::vector<Index> solves;
  std::vector<Index> cg_iterations;
  /// Largest |d_l| entry seen per level (telescoping only).
  std::vector<double> max_abs_difference;
  /// Per-sample mean of X_l b_l (pooled, or level 0) or of X_l d_l, when
  /// requested.
  std::vector<std::vector<double>> level_means;
  /// Precisions and level of every sweep, when the chain records a trace.
  std::vector<Hyperparameters> trace;
  std::vector<Index> trace_level;

  double mean_iterations(Index level) const;
};

struct MultilevelOptions {
  ChainOptions chain;
  bool record_level_means = false;
};

std::vector<CoefficientSolver> make_level_solvers(const LevelHierarchy& hierarchy,
                                                  const SolverConfig& config);

/// Pooled multilevel Gibbs sampler: one chain that follows the schedule,
/// interpolating b on the way up and restricting it on the way down.
EstimatorAccumulator run_ml_gibbs(const LevelHierarchy& hierarchy, const Vector& y,
                                  const MixedModelSpec& spec, const SampleSchedule& schedule,
                                  std::vector<CoefficientSolver>& solvers, RandomStream stream,
                                  const MultilevelOptions& options = {});
EstimatorAccumulator run_ml_gibbs(const LevelHierarchy& hierarchy, const Vector& y,
                                  const MixedModelSpec& spec, const SampleSchedule& schedule,
                                  const SolverConfig& solver_config, RandomStream stream,
                                  const MultilevelOptions& options = {});

/// Telescoping sampler with correlated samples. Level-0 visits add b_0 to the
/// coarse sum. A visit to level l >= 1 draws b_l and stores d_l = b_l - P_l b_{l-1},
/// with b_{l-1} either re-solved on level l-1 from the same tau, lambdas, e1
/// and the restricted e2 (solves), or taken as P_l^T b_l (projection).
/// Both solves of a coupled pair use the same solver family: two-level
/// preconditioned only when the coarser member is itself above level 0.
EstimatorAccumulator run_ml_cs(const LevelHierarchy& hierarchy, const Vector& y,
                               const MixedModelSpec& spec, const SampleSchedule& schedule,
                               std::vector<CoefficientSolver>& solvers, RandomStream stream,
                               Coupling coupling, const MultilevelOptions& options = {});
EstimatorAccumulator run_ml_cs(const LevelHierarchy& hierarchy, const Vector& y,
                               const MixedModelSpec& spec, const SampleSchedule& schedule,
                               const SolverConfig& solver_config, RandomStream stream,
                               Coupling coupling, const MultilevelOptions& options = {});

/// Coarse partner b_{l-1} of the level-l sample `fine_b` drawn in `sweep`.
/// Solves coupling re-solves on level l-1 with the sweep's precisions, e1 and
/// P_l^T e2, starting from `coarse_x0`; projection coupling returns P_l^T fine_b.
Vector coupled_coarse_sample(const LevelHierarchy& hierarchy, const Vector& y,
                             const MixedModelSpec& spec, Index level,
                             const GibbsChain::Sweep& sweep, const Vector& fine_b,
                             const Vector& coarse_x0, CoefficientSolver& coarse_solver,
                             bool use_preconditioner, Coupling coupling,
                             SolveReport* report = nullptr);

/// Whether both solves of the coupled pair (level, level-1) may use the
/// two-level preconditioner.
inline bool pair_preconditioned(Index level) { return level == 0 || level >= 2; }

/// Interpolates the accumulated coefficients to the finest level and applies
/// X_eval once.
Vector finalize_estimate(const EstimatorAccumulator& acc, const LevelHierarchy& hierarchy,
                         const SparseMatrix& X_eval);

/// Model spec for one level, with that level's fixed/random split.
MixedModelSpec level_spec(const LevelHierarchy& hierarchy, const MixedModelSpec& spec,
                          Index level);

}  // namespace mlgibbs
