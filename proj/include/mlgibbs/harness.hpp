#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mlgibbs/gibbs.hpp"
#include "mlgibbs/hierarchy.hpp"
#include "mlgibbs/io.hpp"
#include "mlgibbs/multilevel.hpp"
#include "mlgibbs/rng.hpp"
#include "mlgibbs/sparse.hpp"

namespace mlgibbs {

struct SyntheticTargets {
  Vector b_true;
  Vector y;
};

/// b_true ~ N(0, coef_variance I), y = X b_true + e with e ~ N(0, noise_variance I).
SyntheticTargets synthesize_targets(const SparseMatrix& X, RandomStream& stream,
                                    double coef_variance = 10.0, double noise_variance = 1000.0);

/// Sparse test matrices whose columns come in groups of near-duplicates: each
/// group shares a random row pattern of round(fill * rows) rows, and each
/// column scales the group's base values by (1 + jitter * N(0,1)).
struct SyntheticMatrixOptions {
  Index rows = 500;
  Index cols = 2000;
  double fill = 0.01;
  Index group_size = 20;
  double jitter = 0.05;
  double scale = 10.0;
};

SparseMatrix synthetic_matrix(const SyntheticMatrixOptions& options, RandomStream& stream);

struct Fold {
  std::vector<Index> train;
  std::vector<Index> test;
};

/// Random permutation cut into `folds` test sets; the first n % folds sets get
/// one extra row. Row lists are sorted.
std::vector<Fold> kfold_split(Index n, Index folds, RandomStream& stream);

struct Metrics {
  double rho = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
};

/// Pearson correlation, root mean squared error and mean absolute error.
/// rho is NaN (and a warning is logged) when either vector is constant.
Metrics compute_metrics(const Vector& pred, const Vector& truth);

enum class SamplerKind { gibbs, ml, mlcss, mlcsp };
enum class Allocation { equal, cost, variance };

SamplerKind parse_sampler(const std::string& text);
std::string to_string(SamplerKind kind);
Allocation parse_allocation(const std::string& text);
std::string to_string(Allocation alloc);
/// Table-style label, e.g. "ML-G" or "MLMLPCSS-G" with the preconditioner.
std::string sampler_label(SamplerKind kind, bool preconditioned);

struct ExperimentConfig {
  std::string data;
  /// Empty: synthetic targets from X, evaluated against X_test b_true.
  std::string targets;
  MatrixFormat format = MatrixFormat::automatic;

  /// Number of leading fixed-effect columns.
  Index fixed = 0;
  Priors priors;

  SamplerKind sampler = SamplerKind::gibbs;
  bool precond = false;
  Index levels = 3;
  Index coarse_min = 100;
  Index coarse_max = 500;
  Index samples = 2200;
  Index burnin = 200;
  ScheduleSpec schedule;
  Allocation alloc = Allocation::equal;
  Index pilot = 50;
  Index pilot_burnin = 20;
  Index level_change_burn = 0;

  Index folds = 5;
  std::uint64_t seed = 1;
  double cg_tol = 1e-8;
  Index cg_max_iter = 0;
  bool cold_start = false;
  Index max_coarse_width = 10000;

  double coef_variance = 10.0;
  double noise_variance = 1000.0;

  /// 0: MLGIBBS_NUM_THREADS, else the hardware concurrency.
  int threads = 0;
  /// Optional CSV of the precisions of every sweep.
  std::string trace;
  std::string report;

  void validate() const;
  SolverConfig solver_config() const;
  HierarchyOptions hierarchy_options(Index group_boundary) const;
};

/// Keys match the long CLI flags ("coarse-range", "cg-tol", ...). Unknown
/// keys are a ConfigError.
ExperimentConfig config_from_json(const std::string& text, ExperimentConfig base = {});
std::string config_to_json(const ExperimentConfig& config);

struct FoldReport {
  Index fold = 0;
  bool ok = false;
  std::string error;
  Metrics metrics;
  Index train_rows = 0;
  Index test_rows = 0;
  double setup_seconds = 0.0;
  double pilot_seconds = 0.0;
  double exec_seconds = 0.0;
  std::vector<Index> widths;
  std::vector<Index> nnz;
  std::vector<Index> totals;
  std::vector<double> mean_iterations;
};

struct Summary {
  double mean = 0.0;
  /// Denominator (folds - 1); NaN with fewer than two successful folds.
  double std = 0.0;
};

Summary summarize(const std::vector<double>& values);

struct MetricsReport {
  std::string label;
  ExperimentConfig config;
  std::vector<FoldReport> folds;
  Summary rho, rmse, mae, setup, pilot, exec;
  Index failed = 0;
};

/// Cross-validated run of one sampler on data already in memory. Without
/// `targets`, y is synthesized from X and the seed.
MetricsReport run_experiment(const SparseMatrix& X, const std::optional<Vector>& targets,
                             const ExperimentConfig& config);
/// Loads config.data (and config.targets) first.
MetricsReport run_experiment(const ExperimentConfig& config);

/// Machine-readable report; wall-clock fields are omitted when
/// `include_timings` is false so two runs can be compared verbatim.
std::string report_json(const MetricsReport& report, bool include_timings = true);
/// Aligned text table in the row layout setup / exec / rho / RMSE / MAE.
std::string report_table(const MetricsReport& report);
std::string hierarchy_json(const LevelHierarchy& hierarchy);

struct LevelVarianceOptions {
  Index draws = 500;
  Index burn_in = 50;
  /// Rows whose predictions are tracked; empty selects `probes` random rows.
  std::vector<Index> observations;
  Index probes = 20;
  SolverConfig solver;
  std::uint64_t seed = 1;
};

/// Per level l and tracked row i: V[y_l] and, for l >= 1, V[y_l - y_{l-1}]
/// under both couplings. Level 0 difference entries are NaN.
struct LevelVarianceReport {
  std::vector<Index> observations;
  std::vector<std::vector<double>> level;
  std::vector<std::vector<double>> diff_solves;
  std::vector<std::vector<double>> diff_projection;
};

LevelVarianceReport level_variance_report(const LevelHierarchy& hierarchy, const Vector& y,
                                          const MixedModelSpec& spec,
                                          const LevelVarianceOptions& options);
std::string level_variance_csv(const LevelVarianceReport& report);

}  // namespace mlgibbs
