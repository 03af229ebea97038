#include "mlgibbs/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mlgibbs/errors.hpp"

namespace mlgibbs {

using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Vector gather(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = v[rows[i]];
  return out;
}

double sample_variance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) return kNaN;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(n - 1);
}

}  // namespace

SyntheticTargets synthesize_targets(const SparseMatrix& X, RandomStream& stream,
                                    double coef_variance, double noise_variance) {
  SyntheticTargets out;
  out.b_true = normal_vector(stream, X.cols(), 0.0, coef_variance);
  out.y = spmv(X, out.b_true) + normal_vector(stream, X.rows(), 0.0, noise_variance);
  return out;
}

SparseMatrix synthetic_matrix(const SyntheticMatrixOptions& o, RandomStream& stream) {
  if (o.rows < 1 || o.cols < 1 || o.group_size < 1)
    throw ConfigError("synthetic matrix needs positive rows, cols and group size");
  if (!(o.fill > 0.0 && o.fill <= 1.0)) throw ConfigError("fill must lie in (0, 1]");
  if (!(o.jitter >= 0.0) || !(o.scale > 0.0)) throw ConfigError("invalid jitter or scale");

  const Index per_column =
      std::clamp<Index>(static_cast<Index>(std::llround(o.fill * static_cast<double>(o.rows))),
                        1, o.rows);
  std::vector<Index> all_rows(static_cast<std::size_t>(o.rows));
  std::iota(all_rows.begin(), all_rows.end(), Index{0});

  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(per_column * o.cols));
  std::vector<double> base(static_cast<std::size_t>(per_column));
  for (Index first = 0; first < o.cols; first += o.group_size) {
    // Partial Fisher-Yates: the first per_column entries become the pattern.
    for (Index k = 0; k < per_column; ++k) {
      const Index pick = k + static_cast<Index>(stream.uniform() * static_cast<double>(o.rows - k));
      std::swap(all_rows[k], all_rows[std::min(pick, o.rows - 1)]);
      base[k] = o.scale * (0.5 + stream.uniform());
    }
    const Index last = std::min(first + o.group_size, o.cols);
    for (Index c = first; c < last; ++c)
      for (Index k = 0; k < per_column; ++k)
        entries.push_back({all_rows[k], c, base[k] * (1.0 + o.jitter * stream.standard_normal())});
  }
  return SparseMatrix::from_triplets(o.rows, o.cols, entries);
}

std::vector<Fold> kfold_split(Index n, Index folds, RandomStream& stream) {
  if (folds < 1) throw ConfigError("need at least one fold");
  if (folds > n) throw ConfigError("more folds than rows");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), stream.engine());

  std::vector<Fold> out(static_cast<std::size_t>(folds));
  const Index base = n / folds;
  const Index extra = n % folds;
  Index pos = 0;
  for (Index f = 0; f < folds; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    auto& test = out[f].test;
    test.assign(perm.begin() + pos, perm.begin() + pos + size);
    std::sort(test.begin(), test.end());
    pos += size;
  }
  for (auto& fold : out) {
    std::vector<char> in_test(static_cast<std::size_t>(n), 0);
    for (Index r : fold.test) in_test[r] = 1;
    for (Index r = 0; r < n; ++r)
      if (!in_test[r]) fold.train.push_back(r);
  }
  return out;
}

Metrics compute_metrics(const Vector& pred, const Vector& truth) {
  if (pred.size() != truth.size()) throw DimensionError("metrics: length mismatch");
  if (pred.size() < 2) throw DimensionError("metrics: need at least two values");
  const double n = static_cast<double>(pred.size());
  const double mp = pred.sum() / n;
  const double mt = truth.sum() / n;
  double spp = 0.0, stt = 0.0, spt = 0.0, sq = 0.0, ab = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mp;
    const double dt = truth[i] - mt;
    spp += dp * dp;
    stt += dt * dt;
    spt += dp * dt;
    const double e = pred[i] - truth[i];
    sq += e * e;
    ab += std::abs(e);
  }
  Metrics m;
  if (spp > 0.0 && stt > 0.0) {
    m.rho = spt / std::sqrt(spp * stt);
  } else {
    m.rho = kNaN;
    std::clog << "warning: correlation undefined for a constant "
              << (stt > 0.0 ? "prediction" : "truth") << " vector\n";
  }
  m.rmse = std::sqrt(sq / n);
  m.mae = ab / n;
  return m;
}

SamplerKind parse_sampler(const std::string& text) {
  if (text == "gibbs") return SamplerKind::gibbs;
  if (text == "ml") return SamplerKind::ml;
  if (text == "mlcss") return SamplerKind::mlcss;
  if (text == "mlcsp") return SamplerKind::mlcsp;
  throw ConfigError("unknown sampler '" + text + "' (gibbs, ml, mlcss, mlcsp)");
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::gibbs: return "gibbs";
    case SamplerKind::ml: return "ml";
    case SamplerKind::mlcss: return "mlcss";
    case SamplerKind::mlcsp: return "mlcsp";
  }
  return "?";
}

Allocation parse_allocation(const std::string& text) {
  if (text == "equal") return Allocation::equal;
  if (text == "cost") return Allocation::cost;
  if (text == "var" || text == "variance") return Allocation::variance;
  throw ConfigError("unknown allocation '" + text + "' (equal, cost, var)");
}

std::string to_string(Allocation alloc) {
  switch (alloc) {
    case Allocation::equal: return "equal";
    case Allocation::cost: return "cost";
    case Allocation::variance: return "var";
  }
  return "?";
}

std::string sampler_label(SamplerKind kind, bool preconditioned) {
  const std::string p = preconditioned ? "MLP" : "";
  switch (kind) {
    case SamplerKind::gibbs: return preconditioned ? "MLP-Gibbs" : "Gibbs";
    case SamplerKind::ml: return "ML" + p + "-G";
    case SamplerKind::mlcss: return "ML" + p + "CSS-G";
    case SamplerKind::mlcsp: return "ML" + p + "CSP-G";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  priors.validate();
  if (fixed < 0) throw ConfigError("fixed must be >= 0");
  if (levels < 1) throw ConfigError("levels must be >= 1");
  if (coarse_min < 1 || coarse_max < coarse_min)
    throw ConfigError("coarse range needs 1 <= min <= max");
  if (!(samples > burnin && burnin >= 0)) throw ConfigError("need samples > burnin >= 0");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (!(cg_tol > 0.0)) throw ConfigError("cg-tol must be positive");
  if (cg_max_iter < 0) throw ConfigError("cg-max-iter must be >= 0");
  if (pilot < 2) throw ConfigError("pilot must be >= 2");
  if (pilot_burnin < 0 || level_change_burn < 0) throw ConfigError("negative burn-in");
  if (!(coef_variance >= 0.0) || !(noise_variance >= 0.0))
    throw ConfigError("synthetic variances must be >= 0");
  if (schedule.kind != ScheduleKind::consecutive && schedule.chunk < 1)
    throw ConfigError("cycle chunk must be >= 1");
  if (schedule.kind != ScheduleKind::consecutive && schedule.chunk < 10)
    std::clog << "warning: fewer than 10 samples per level visit\n";
}

SolverConfig ExperimentConfig::solver_config() const {
  SolverConfig c;
  c.tol = cg_tol;
  c.max_iter = cg_max_iter;
  c.warm_start = !cold_start;
  c.preconditioned = precond;
  c.max_coarse_width = max_coarse_width;
  return c;
}

HierarchyOptions ExperimentConfig::hierarchy_options(Index group_boundary) const {
  HierarchyOptions h;
  h.group_boundary = group_boundary;
  h.coarse_min = coarse_min;
  h.coarse_max = coarse_max;
  h.max_levels = levels;
  return h;
}

namespace {

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text, ExperimentConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "data") c.data = get<std::string>(v, k);
    else if (key == "targets") c.targets = get<std::string>(v, k);
    else if (key == "format") c.format = parse_matrix_format(get<std::string>(v, k));
    else if (key == "fixed") c.fixed = get<Index>(v, k);
    else if (key == "alpha-e") c.priors.alpha_e = get<double>(v, k);
    else if (key == "beta-e") c.priors.beta_e = get<double>(v, k);
    else if (key == "alpha-v") c.priors.alpha_v = get<double>(v, k);
    else if (key == "beta-v") c.priors.beta_v = get<double>(v, k);
    else if (key == "alpha-u") c.priors.alpha_u = get<double>(v, k);
    else if (key == "beta-u") c.priors.beta_u = get<double>(v, k);
    else if (key == "sampler") c.sampler = parse_sampler(get<std::string>(v, k));
    else if (key == "precond") c.precond = get<bool>(v, k);
    else if (key == "levels") c.levels = get<Index>(v, k);
    else if (key == "coarse-range") {
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        const auto comma = s.find(',');
        if (comma == std::string::npos) throw ConfigError("coarse-range must be 'min,max'");
        try {
          c.coarse_min = std::stoll(s.substr(0, comma));
          c.coarse_max = std::stoll(s.substr(comma + 1));
        } catch (const std::exception&) {
          throw ConfigError("coarse-range must be 'min,max'");
        }
      } else {
        const auto r = get<std::vector<Index>>(v, k);
        if (r.size() != 2) throw ConfigError("coarse-range needs two entries");
        c.coarse_min = r[0];
        c.coarse_max = r[1];
      }
    } else if (key == "samples") c.samples = get<Index>(v, k);
    else if (key == "burnin") c.burnin = get<Index>(v, k);
    else if (key == "schedule") c.schedule = ScheduleSpec::parse(get<std::string>(v, k));
    else if (key == "alloc") c.alloc = parse_allocation(get<std::string>(v, k));
    else if (key == "pilot") c.pilot = get<Index>(v, k);
    else if (key == "pilot-burnin") c.pilot_burnin = get<Index>(v, k);
    else if (key == "level-change-burn") c.level_change_burn = get<Index>(v, k);
    else if (key == "folds") c.folds = get<Index>(v, k);
    else if (key == "seed") c.seed = get<std::uint64_t>(v, k);
    else if (key == "cg-tol") c.cg_tol = get<double>(v, k);
    else if (key == "cg-max-iter") c.cg_max_iter = get<Index>(v, k);
    else if (key == "cold-start") c.cold_start = get<bool>(v, k);
    else if (key == "max-coarse-width") c.max_coarse_width = get<Index>(v, k);
    else if (key == "coef-var") c.coef_variance = get<double>(v, k);
    else if (key == "noise-var") c.noise_variance = get<double>(v, k);
    else if (key == "threads") c.threads = get<int>(v, k);
    else if (key == "trace") c.trace = get<std::string>(v, k);
    else if (key == "report") c.report = get<std::string>(v, k);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

namespace {

json config_json(const ExperimentConfig& c) {
  json j;
  j["data"] = c.data;
  j["targets"] = c.targets;
  j["fixed"] = c.fixed;
  j["alpha-e"] = c.priors.alpha_e;
  j["beta-e"] = c.priors.beta_e;
  j["alpha-v"] = c.priors.alpha_v;
  j["beta-v"] = c.priors.beta_v;
  j["alpha-u"] = c.priors.alpha_u;
  j["beta-u"] = c.priors.beta_u;
  j["sampler"] = to_string(c.sampler);
  j["precond"] = c.precond;
  j["levels"] = c.levels;
  j["coarse-range"] = {c.coarse_min, c.coarse_max};
  j["samples"] = c.samples;
  j["burnin"] = c.burnin;
  j["schedule"] = c.schedule.to_string();
  j["alloc"] = to_string(c.alloc);
  j["pilot"] = c.pilot;
  j["pilot-burnin"] = c.pilot_burnin;
  j["level-change-burn"] = c.level_change_burn;
  j["folds"] = c.folds;
  j["seed"] = c.seed;
  j["cg-tol"] = c.cg_tol;
  j["cg-max-iter"] = c.cg_max_iter;
  j["cold-start"] = c.cold_start;
  j["max-coarse-width"] = c.max_coarse_width;
  j["coef-var"] = c.coef_variance;
  j["noise-var"] = c.noise_variance;
  return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return {kNaN, kNaN};
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.std = std::sqrt(sample_variance(values));
  return s;
}

namespace {

struct FoldOutput {
  FoldReport report;
  std::vector<Hyperparameters> trace;
  std::vector<Index> trace_level;
};

int thread_count(const ExperimentConfig& config) {
  int n = config.threads;
  if (n <= 0) {
    if (const char* env = std::getenv("MLGIBBS_NUM_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::min<int>(n, static_cast<int>(config.folds));
}

SampleSchedule main_schedule(const ExperimentConfig& cfg, const LevelHierarchy& h,
                             const Vector& y, const MixedModelSpec& spec,
                             std::vector<CoefficientSolver>& solvers, RandomStream stream,
                             double& pilot_seconds) {
  const Index kept = cfg.samples - cfg.burnin;
  SampleSchedule schedule;
  if (cfg.alloc == Allocation::equal || h.levels() == 1) {
    schedule = make_schedule(cfg.schedule, h.levels(), cfg.samples, cfg.burnin);
  } else if (cfg.alloc == Allocation::cost) {
    schedule = make_schedule_from_totals(allocate_cost(level_costs(h), kept), cfg.burnin);
  } else {
    const auto start = std::chrono::steady_clock::now();
    SampleSchedule pilot = make_schedule_from_totals(
        std::vector<Index>(static_cast<std::size_t>(h.levels()), cfg.pilot), cfg.pilot_burnin);
    pilot.level_change_burn = cfg.level_change_burn;
    MultilevelOptions opts;
    opts.record_level_means = true;
    EstimatorAccumulator acc =
        cfg.sampler == SamplerKind::ml
            ? run_ml_gibbs(h, y, spec, pilot, solvers, stream, opts)
            : run_ml_cs(h, y, spec, pilot, solvers, stream,
                        cfg.sampler == SamplerKind::mlcss ? Coupling::solves : Coupling::projection,
                        opts);
    LevelCost costs = level_costs(h);
    for (const auto& means : acc.level_means) costs.variance.push_back(sample_variance(means));
    pilot_seconds = seconds_since(start);
    schedule = make_schedule_from_totals(allocate_variance(costs, kept), cfg.burnin);
  }
  schedule.level_change_burn = cfg.level_change_burn;
  return schedule;
}

FoldOutput run_fold(const SparseMatrix& X, const Vector& y_all, const Vector& truth_all,
                    const Fold& fold, Index index, const ExperimentConfig& cfg,
                    RandomStream stream) {
  FoldOutput out;
  FoldReport& rep = out.report;
  rep.fold = index;
  rep.train_rows = static_cast<Index>(fold.train.size());
  rep.test_rows = static_cast<Index>(fold.test.size());

  const SparseMatrix X_train = X.select_rows(fold.train);
  const SparseMatrix X_test = X.select_rows(fold.test);
  const Vector y = gather(y_all, fold.train);
  const Vector truth = gather(truth_all, fold.test);
  const MixedModelSpec spec{cfg.fixed, X.cols() - cfg.fixed, cfg.priors};
  const SolverConfig solver_cfg = cfg.solver_config();

  ChainOptions chain_opts;
  chain_opts.record_trace = !cfg.trace.empty();

  auto start = std::chrono::steady_clock::now();
  const bool need_levels = cfg.sampler != SamplerKind::gibbs || cfg.precond;
  const LevelHierarchy h = need_levels
                               ? build_hierarchy(X_train, cfg.hierarchy_options(cfg.fixed))
                               : LevelHierarchy::single(X_train, cfg.fixed);
  for (Index l = 0; l < h.levels(); ++l) {
    rep.widths.push_back(h.width(l));
    rep.nnz.push_back(h.matrix(l).nnz());
  }

  Vector pred;
  if (cfg.sampler == SamplerKind::gibbs) {
    CoefficientSolver solver(h, h.finest(), solver_cfg);
    rep.setup_seconds = seconds_since(start);
    start = std::chrono::steady_clock::now();
    const ChainResult res = run_chain(h.matrix(h.finest()), y, spec, cfg.samples, cfg.burnin,
                                      solver, stream.split(0), chain_opts);
    pred = predict_mean(res, X_test);
    rep.exec_seconds = seconds_since(start);
    rep.totals = {res.kept_count};
    rep.mean_iterations = {res.solves ? static_cast<double>(res.cg_iterations) /
                                            static_cast<double>(res.solves)
                                      : 0.0};
    out.trace = res.trace;
    out.trace_level.assign(res.trace.size(), h.finest());
  } else {
    auto solvers = make_level_solvers(h, solver_cfg);
    rep.setup_seconds = seconds_since(start);
    const SampleSchedule schedule =
        main_schedule(cfg, h, y, spec, solvers, stream.split(1), rep.pilot_seconds);
    rep.totals = schedule.totals;

    start = std::chrono::steady_clock::now();
    MultilevelOptions opts;
    opts.chain = chain_opts;
    const EstimatorAccumulator acc =
        cfg.sampler == SamplerKind::ml
            ? run_ml_gibbs(h, y, spec, schedule, solvers, stream.split(0), opts)
            : run_ml_cs(h, y, spec, schedule, solvers, stream.split(0),
                        cfg.sampler == SamplerKind::mlcss ? Coupling::solves : Coupling::projection,
                        opts);
    pred = finalize_estimate(acc, h, X_test);
    rep.exec_seconds = seconds_since(start);
    for (Index l = 0; l < h.levels(); ++l) rep.mean_iterations.push_back(acc.mean_iterations(l));
    out.trace = acc.trace;
    out.trace_level = acc.trace_level;
  }
  rep.metrics = compute_metrics(pred, truth);
  rep.ok = true;
  return out;
}

void write_trace(const std::string& path, const std::vector<FoldOutput>& outputs) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace '" + path + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "fold,sweep,level,tau,lambda_v,lambda_u\n";
  for (const auto& o : outputs)
    for (std::size_t i = 0; i < o.trace.size(); ++i)
      out << o.report.fold << ',' << i + 1 << ',' << o.trace_level[i] << ',' << o.trace[i].tau
          << ',' << o.trace[i].lambda_v << ',' << o.trace[i].lambda_u << '\n';
}

}  // namespace

MetricsReport run_experiment(const SparseMatrix& X, const std::optional<Vector>& targets,
                             const ExperimentConfig& config) {
  config.validate();
  if (config.fixed > X.cols()) throw ConfigError("more fixed-effect columns than features");
  const RandomStream root(config.seed);

  Vector y_all, truth_all;
  if (targets) {
    if (targets->size() != X.rows()) throw DimensionError("targets length differs from rows");
    y_all = *targets;
    truth_all = *targets;
  } else {
    RandomStream s = root.split(0);
    SyntheticTargets syn = synthesize_targets(X, s, config.coef_variance, config.noise_variance);
    truth_all = spmv(X, syn.b_true);
    y_all = std::move(syn.y);
  }

  RandomStream split_stream = root.split(1);
  const std::vector<Fold> folds = kfold_split(X.rows(), config.folds, split_stream);
  const RandomStream fold_root = root.split(2);

  std::vector<FoldOutput> outputs(folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t f = next++; f < folds.size(); f = next++) {
      try {
        outputs[f] = run_fold(X, y_all, truth_all, folds[f], static_cast<Index>(f), config,
                              fold_root.split(f));
      } catch (const std::exception& e) {
        outputs[f].report.fold = static_cast<Index>(f);
        outputs[f].report.ok = false;
        outputs[f].report.error = e.what();
      }
    }
  };
  const int n_threads = thread_count(config);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MetricsReport report;
  report.label = sampler_label(config.sampler, config.precond);
  report.config = config;
  std::vector<double> rho, rmse, mae, setup, pilot, exec;
  for (auto& o : outputs) {
    const FoldReport& r = o.report;
    if (!r.ok) {
      ++report.failed;
      std::clog << "fold " << r.fold << " failed: " << r.error << '\n';
    } else {
      rho.push_back(r.metrics.rho);
      rmse.push_back(r.metrics.rmse);
      mae.push_back(r.metrics.mae);
      setup.push_back(r.setup_seconds);
      pilot.push_back(r.pilot_seconds);
      exec.push_back(r.exec_seconds);
    }
    report.folds.push_back(r);
  }
  report.rho = summarize(rho);
  report.rmse = summarize(rmse);
  report.mae = summarize(mae);
  report.setup = summarize(setup);
  report.pilot = summarize(pilot);
  report.exec = summarize(exec);
  if (!config.trace.empty()) write_trace(config.trace, outputs);
  return report;
}

MetricsReport run_experiment(const ExperimentConfig& config) {
  if (config.data.empty()) throw ConfigError("no data file given");
  const SparseMatrix X = load_matrix(config.data, config.format);
  std::optional<Vector> targets;
  if (!config.targets.empty()) targets = load_vector(config.targets);
  return run_experiment(X, targets, config);
}

namespace {

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

std::string report_json(const MetricsReport& report, bool include_timings) {
  json j;
  j["sampler"] = report.label;
  j["config"] = config_json(report.config);
  j["failed_folds"] = report.failed;
  j["rho"] = summary_json(report.rho);
  j["rmse"] = summary_json(report.rmse);
  j["mae"] = summary_json(report.mae);
  if (include_timings) {
    j["setup_seconds"] = summary_json(report.setup);
    j["pilot_seconds"] = summary_json(report.pilot);
    j["exec_seconds"] = summary_json(report.exec);
  }
  json folds = json::array();
  for (const FoldReport& f : report.folds) {
    json jf;
    jf["fold"] = f.fold;
    jf["ok"] = f.ok;
    if (!f.ok) jf["error"] = f.error;
    jf["train_rows"] = f.train_rows;
    jf["test_rows"] = f.test_rows;
    jf["rho"] = f.metrics.rho;
    jf["rmse"] = f.metrics.rmse;
    jf["mae"] = f.metrics.mae;
    jf["level_widths"] = f.widths;
    jf["level_nnz"] = f.nnz;
    jf["level_samples"] = f.totals;
    jf["mean_cg_iterations"] = f.mean_iterations;
    if (include_timings) {
      jf["setup_seconds"] = f.setup_seconds;
      jf["pilot_seconds"] = f.pilot_seconds;
      jf["exec_seconds"] = f.exec_seconds;
    }
    folds.push_back(std::move(jf));
  }
  j["folds"] = std::move(folds);
  return j.dump(2);
}

std::string report_table(const MetricsReport& report) {
  std::ostringstream out;
  auto row = [&](const std::string& name, const Summary& s, bool with_std) {
    out << std::left << std::setw(12) << name << std::right << std::setw(14)
        << std::setprecision(4) << std::scientific << s.mean;
    if (with_std) out << "  (" << std::setprecision(3) << s.std << ")";
    out << '\n';
  };
  out << std::left << std::setw(12) << "" << std::right << std::setw(14) << report.label << '\n';
  row("setup (s)", report.setup, false);
  if (report.config.alloc == Allocation::variance) row("pilot (s)", report.pilot, false);
  row("exec. (s)", report.exec, false);
  out << std::left << std::setw(12) << "rho" << std::right << std::setw(14) << std::fixed
      << std::setprecision(4) << report.rho.mean << "  (" << std::setprecision(3)
      << report.rho.std << ")\n";
  row("RMSE", report.rmse, true);
  row("MAE", report.mae, true);
  if (report.failed > 0) out << report.failed << " of " << report.folds.size() << " folds failed\n";
  return out.str();
}

std::string hierarchy_json(const LevelHierarchy& h) {
  json j;
  json levels = json::array();
  for (Index l = 0; l < h.levels(); ++l) {
    levels.push_back({{"level", l},
                      {"width", h.width(l)},
                      {"nnz", h.matrix(l).nnz()},
                      {"fixed_columns", h.group_boundary(l)}});
  }
  j["rows"] = h.matrix(0).rows();
  j["levels"] = std::move(levels);
  j["thresholds"] = h.thresholds();
  return j.dump(2);
}

LevelVarianceReport level_variance_report(const LevelHierarchy& h, const Vector& y,
                                          const MixedModelSpec& spec,
                                          const LevelVarianceOptions& options) {
  if (options.draws < 2) throw ConfigError("level variance needs at least two draws");
  if (options.burn_in < 0) throw ConfigError("negative burn-in");
  const Index n = h.matrix(0).rows();
  RandomStream root(options.seed);

  LevelVarianceReport rep;
  rep.observations = options.observations;
  if (rep.observations.empty()) {
    RandomStream pick = root.split(0);
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    std::shuffle(rows.begin(), rows.end(), pick.engine());
    rows.resize(static_cast<std::size_t>(std::min(options.probes, n)));
    std::sort(rows.begin(), rows.end());
    rep.observations = std::move(rows);
  }
  for (Index r : rep.observations)
    if (r < 0 || r >= n) throw IndexError("observation index out of range");
  const std::size_t n_obs = rep.observations.size();

  auto solvers = make_level_solvers(h, options.solver);
  for (Index l = 0; l < h.levels(); ++l) {
    const SparseMatrix X_obs = h.matrix(l).select_rows(rep.observations);
    std::vector<std::vector<double>> y_l(n_obs), d_s(n_obs), d_p(n_obs);
    GibbsChain chain(y, root.split(static_cast<std::uint64_t>(l) + 1));
    const MixedModelSpec lspec = level_spec(h, spec, l);
    const bool precond = pair_preconditioned(l);
    for (Index k = 0; k < options.burn_in + options.draws; ++k) {
      const Vector previous = chain.initialized() ? chain.state().b : Vector();
      const auto& sweep = chain.advance(h.matrix(l), lspec, solvers[l], precond);
      if (k < options.burn_in) continue;
      const Vector& b = chain.state().b;
      const Vector pred = spmv(X_obs, b);
      for (std::size_t i = 0; i < n_obs; ++i) y_l[i].push_back(pred[static_cast<Index>(i)]);
      if (l == 0) continue;
      const Prolongator& P = h.prolongator(l);
      const Vector x0 = previous.size() == b.size() ? P.restrict(previous) : Vector();
      const Vector cs = coupled_coarse_sample(h, y, spec, l, sweep, b, x0, solvers[l - 1], precond,
                                              Coupling::solves);
      const Vector cp = P.restrict(b);
      const Vector ds = spmv(X_obs, b - P.prolong(cs));
      const Vector dp = spmv(X_obs, b - P.prolong(cp));
      for (std::size_t i = 0; i < n_obs; ++i) {
        d_s[i].push_back(ds[static_cast<Index>(i)]);
        d_p[i].push_back(dp[static_cast<Index>(i)]);
      }
    }
    std::vector<double> v(n_obs), vs(n_obs, kNaN), vp(n_obs, kNaN);
    for (std::size_t i = 0; i < n_obs; ++i) {
      v[i] = sample_variance(y_l[i]);
      if (l > 0) {
        vs[i] = sample_variance(d_s[i]);
        vp[i] = sample_variance(d_p[i]);
      }
    }
    rep.level.push_back(std::move(v));
    rep.diff_solves.push_back(std::move(vs));
    rep.diff_projection.push_back(std::move(vp));
  }
  return rep;
}

std::string level_variance_csv(const LevelVarianceReport& rep) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "level,observation,var_level,var_diff_solves,var_diff_projection\n";
  for (std::size_t l = 0; l < rep.level.size(); ++l)
    for (std::size_t i = 0; i < rep.observations.size(); ++i) {
      out << l << ',' << rep.observations[i] << ',' << rep.level[l][i] << ',';
      if (l > 0) out << rep.diff_solves[l][i] << ',' << rep.diff_projection[l][i];
      else out << ',';
      out << '\n';
    }
  return out.str();
}

}  // namespace mlgibbs
