// Python bindings for the core operations. Vectors and dense matrices cross
// the boundary as NumPy arrays.
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mlgibbs/errors.hpp"
#include "mlgibbs/harness.hpp"
#include "mlgibbs/io.hpp"

namespace py = pybind11;
using namespace mlgibbs;

namespace {

SparseMatrix from_coo(Index rows, Index cols, const std::vector<Index>& r,
                      const std::vector<Index>& c, const std::vector<double>& v) {
  if (r.size() != c.size() || r.size() != v.size())
    throw DimensionError("row, column and value arrays differ in length");
  std::vector<Triplet> t;
  t.reserve(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) t.push_back({r[k], c[k], v[k]});
  return SparseMatrix::from_triplets(rows, cols, t);
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["rho"] = m.rho;
  d["rmse"] = m.rmse;
  d["mae"] = m.mae;
  return d;
}

py::object parse_json(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

}  // namespace

PYBIND11_MODULE(_mlgibbs, m) {
  m.doc() = "Multilevel noise-injection Gibbs samplers for sparse linear mixed models";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<IndexError>(m, "IndexError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<InvalidAssignment>(m, "InvalidAssignment", base.ptr());
  py::register_exception<HierarchyError>(m, "HierarchyError", base.ptr());
  py::register_exception<SetupError>(m, "SetupError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<EstimatorError>(m, "EstimatorError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());

  py::class_<SparseMatrix>(m, "SparseMatrix")
      .def(py::init(&from_coo), py::arg("rows"), py::arg("cols"), py::arg("row"),
           py::arg("col"), py::arg("value"), "Build from coordinate triplets; duplicates add up.")
      .def_static("from_dense", &SparseMatrix::from_dense, py::arg("dense"))
      .def_static("identity", &SparseMatrix::identity, py::arg("n"))
      .def_property_readonly("shape", [](const SparseMatrix& A) {
        return py::make_tuple(A.rows(), A.cols());
      })
      .def_property_readonly("nnz", &SparseMatrix::nnz)
      .def("to_dense", &SparseMatrix::to_dense)
      .def("select_rows", [](const SparseMatrix& A, const std::vector<Index>& rows) {
        return A.select_rows(rows);
      })
      .def("__matmul__", [](const SparseMatrix& A, const Vector& x) { return spmv(A, x); })
      .def("rmatvec", [](const SparseMatrix& A, const Vector& x) { return spmv_t(A, x); })
      .def("gram_apply", [](const SparseMatrix& A, const Vector& shift, const Vector& x) {
        return gram_apply(A, shift, x);
      })
      .def("__eq__", [](const SparseMatrix& a, const SparseMatrix& b) { return a == b; })
      .def("__repr__", [](const SparseMatrix& A) {
        return "<SparseMatrix " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
               ", nnz=" + std::to_string(A.nnz()) + ">";
      });

  py::class_<Prolongator>(m, "Prolongator")
      .def(py::init<std::vector<Index>>(), py::arg("assignment"))
      .def_static("identity", &Prolongator::identity)
      .def_property_readonly("fine_dim", &Prolongator::fine_dim)
      .def_property_readonly("coarse_dim", &Prolongator::coarse_dim)
      .def_property_readonly("assignment", [](const Prolongator& P) {
        return std::vector<Index>(P.assignment().begin(), P.assignment().end());
      })
      .def("prolong", &Prolongator::prolong)
      .def("restrict", &Prolongator::restrict)
      .def("to_dense", &Prolongator::to_dense);

  m.def("leader_follower",
        py::overload_cast<const SparseMatrix&, double>(&leader_follower), py::arg("X"),
        py::arg("threshold"));
  m.def("coarsen", &coarsen, py::arg("X"), py::arg("P"));

  py::class_<HierarchyOptions>(m, "HierarchyOptions")
      .def(py::init<>())
      .def_readwrite("group_boundary", &HierarchyOptions::group_boundary)
      .def_readwrite("coarse_min", &HierarchyOptions::coarse_min)
      .def_readwrite("coarse_max", &HierarchyOptions::coarse_max)
      .def_readwrite("max_levels", &HierarchyOptions::max_levels);

  py::class_<LevelHierarchy>(m, "LevelHierarchy")
      .def_static("single", &LevelHierarchy::single, py::arg("X"), py::arg("group_boundary") = 0)
      .def_static("from_prolongators", &LevelHierarchy::from_prolongators, py::arg("X"),
                  py::arg("group_boundary"), py::arg("fine_to_coarse"))
      .def_property_readonly("levels", &LevelHierarchy::levels)
      .def_property_readonly("widths", [](const LevelHierarchy& h) {
        std::vector<Index> w;
        for (Index l = 0; l < h.levels(); ++l) w.push_back(h.width(l));
        return w;
      })
      .def_property_readonly("thresholds", &LevelHierarchy::thresholds)
      .def("matrix", &LevelHierarchy::matrix, py::return_value_policy::copy)
      .def("prolongator", &LevelHierarchy::prolongator, py::return_value_policy::copy)
      .def("group_boundary", &LevelHierarchy::group_boundary)
      .def("transfer", &LevelHierarchy::transfer, py::arg("v"), py::arg("source"),
           py::arg("target"));
  m.def(
      "build_hierarchy",
      [](const SparseMatrix& X, Index levels, Index coarse_min, Index coarse_max, Index fixed) {
        HierarchyOptions o;
        o.max_levels = levels;
        o.coarse_min = coarse_min;
        o.coarse_max = coarse_max;
        o.group_boundary = fixed;
        return build_hierarchy(X, o);
      },
      py::arg("X"), py::arg("levels") = 3, py::arg("coarse_min") = 100,
      py::arg("coarse_max") = 500, py::arg("fixed") = 0);

  py::class_<SolveReport>(m, "SolveReport")
      .def_readonly("iterations", &SolveReport::iterations)
      .def_readonly("final_residual_norm", &SolveReport::final_residual_norm)
      .def_readonly("reference_norm", &SolveReport::reference_norm)
      .def_readonly("converged", &SolveReport::converged)
      .def_readonly("residual_history", &SolveReport::residual_history);

  m.def(
      "solve_gram",
      [](const SparseMatrix& X, const Vector& shift, const Vector& rhs, double tol,
         Index max_iter, const LevelHierarchy* hierarchy) {
        const GramOperator G(X, shift);
        const LinearOperator op = [&G](const Vector& x, Vector& y) { G.apply(x, y); };
        if (!hierarchy) {
          auto r = cg_solve(op, rhs, Vector(), tol, max_iter);
          return py::make_tuple(r.x, r.report);
        }
        if (hierarchy->matrix(hierarchy->finest()).cols() != X.cols())
          throw DimensionError("hierarchy does not match X");
        const auto M = build_two_level(*hierarchy, hierarchy->finest(), shift);
        const LinearOperator pre = [&M](const Vector& r, Vector& z) { M.apply(r, z); };
        auto r = cg_solve(op, rhs, Vector(), tol, max_iter, &pre);
        return py::make_tuple(r.x, r.report);
      },
      py::arg("X"), py::arg("shift"), py::arg("rhs"), py::arg("tol") = 1e-8,
      py::arg("max_iter") = 0, py::arg("hierarchy") = nullptr,
      "Solve (X^T X + diag(shift)) x = rhs with CG, or with the two-level "
      "preconditioner of the finest level when a hierarchy is given.");

  py::class_<RandomStream>(m, "RandomStream")
      .def(py::init<std::uint64_t>(), py::arg("seed") = 0)
      .def_property_readonly("seed", &RandomStream::seed)
      .def("split", &RandomStream::split)
      .def("normal", [](RandomStream& s, Index n, double mean, double var) {
        return normal_vector(s, n, mean, var);
      }, py::arg("n"), py::arg("mean") = 0.0, py::arg("variance") = 1.0)
      .def("gamma", [](RandomStream& s, double shape, double rate) {
        return gamma_sample(s, shape, rate);
      });

  py::class_<Priors>(m, "Priors")
      .def(py::init<>())
      .def_readwrite("alpha_e", &Priors::alpha_e)
      .def_readwrite("beta_e", &Priors::beta_e)
      .def_readwrite("alpha_v", &Priors::alpha_v)
      .def_readwrite("beta_v", &Priors::beta_v)
      .def_readwrite("alpha_u", &Priors::alpha_u)
      .def_readwrite("beta_u", &Priors::beta_u);

  py::class_<MixedModelSpec>(m, "MixedModelSpec")
      .def(py::init([](Index fixed, Index random, const Priors& p) {
             return MixedModelSpec{fixed, random, p};
           }),
           py::arg("fixed"), py::arg("random"), py::arg("priors") = Priors{})
      .def_readwrite("fixed", &MixedModelSpec::fixed)
      .def_readwrite("random", &MixedModelSpec::random)
      .def_readwrite("priors", &MixedModelSpec::priors);

  m.def("assemble_lambda", &assemble_lambda, py::arg("spec"), py::arg("lambda_v"),
        py::arg("lambda_u"));

  py::class_<Hyperparameters>(m, "Hyperparameters")
      .def(py::init<double, double, double>(), py::arg("tau"), py::arg("lambda_v"),
           py::arg("lambda_u"))
      .def_readwrite("tau", &Hyperparameters::tau)
      .def_readwrite("lambda_v", &Hyperparameters::lambda_v)
      .def_readwrite("lambda_u", &Hyperparameters::lambda_u);

  py::class_<ChainResult>(m, "ChainResult")
      .def_readonly("sum_b", &ChainResult::sum_b)
      .def_readonly("kept_count", &ChainResult::kept_count)
      .def_readonly("solves", &ChainResult::solves)
      .def_readonly("cg_iterations", &ChainResult::cg_iterations)
      .def_readonly("trace", &ChainResult::trace)
      .def_property_readonly("mean_b", [](const ChainResult& r) {
        return Vector(r.sum_b / static_cast<double>(r.kept_count));
      });

  m.def(
      "run_chain",
      [](const SparseMatrix& X, const Vector& y, const MixedModelSpec& spec, Index samples,
         Index burnin, std::uint64_t seed, double cg_tol, bool trace) {
        SolverConfig cfg;
        cfg.tol = cg_tol;
        ChainOptions opt;
        opt.record_trace = trace;
        return run_chain(X, y, spec, samples, burnin, cfg, RandomStream(seed), opt);
      },
      py::arg("X"), py::arg("y"), py::arg("spec"), py::arg("samples") = 2200,
      py::arg("burnin") = 200, py::arg("seed") = 1, py::arg("cg_tol") = 1e-8,
      py::arg("trace") = false);
  m.def("predict_mean", &predict_mean, py::arg("result"), py::arg("X_eval"));

  py::class_<SampleSchedule>(m, "SampleSchedule")
      .def_readonly("totals", &SampleSchedule::totals)
      .def_readonly("burn_in", &SampleSchedule::burn_in)
      .def_property_readonly("visits", [](const SampleSchedule& s) {
        py::list out;
        for (const Visit& v : s.visits) out.append(py::make_tuple(v.level, v.count, v.burn_in));
        return out;
      });
  m.def(
      "make_schedule",
      [](const std::string& kind, Index levels, Index samples, Index burnin) {
        return make_schedule(ScheduleSpec::parse(kind), levels, samples, burnin);
      },
      py::arg("kind"), py::arg("levels"), py::arg("samples"), py::arg("burnin"));
  m.def(
      "allocate_cost",
      [](const std::vector<std::uint64_t>& nnz, Index H) { return allocate_cost({nnz, {}}, H); },
      py::arg("costs"), py::arg("samples"));
  m.def(
      "allocate_variance",
      [](const std::vector<std::uint64_t>& nnz, const std::vector<double>& var, Index H) {
        return allocate_variance({nnz, var}, H);
      },
      py::arg("costs"), py::arg("variances"), py::arg("samples"));

  py::class_<EstimatorAccumulator>(m, "EstimatorAccumulator")
      .def_readonly("sums", &EstimatorAccumulator::sums)
      .def_readonly("counts", &EstimatorAccumulator::counts)
      .def_readonly("solves", &EstimatorAccumulator::solves)
      .def_readonly("max_abs_difference", &EstimatorAccumulator::max_abs_difference)
      .def("mean_iterations", &EstimatorAccumulator::mean_iterations);
  m.def(
      "run_multilevel",
      [](const LevelHierarchy& h, const Vector& y, const MixedModelSpec& spec,
         const SampleSchedule& schedule, const std::string& coupling, std::uint64_t seed,
         bool precond, double cg_tol) {
        SolverConfig cfg;
        cfg.tol = cg_tol;
        cfg.preconditioned = precond;
        if (coupling == "pooled") return run_ml_gibbs(h, y, spec, schedule, cfg, RandomStream(seed));
        if (coupling == "solves")
          return run_ml_cs(h, y, spec, schedule, cfg, RandomStream(seed), Coupling::solves);
        if (coupling == "projection")
          return run_ml_cs(h, y, spec, schedule, cfg, RandomStream(seed), Coupling::projection);
        throw ConfigError("coupling must be 'pooled', 'solves' or 'projection'");
      },
      py::arg("hierarchy"), py::arg("y"), py::arg("spec"), py::arg("schedule"),
      py::arg("coupling") = "pooled", py::arg("seed") = 1, py::arg("precond") = false,
      py::arg("cg_tol") = 1e-8,
      "Pooled multilevel Gibbs ('pooled') or the telescoping sampler with "
      "coupled solves or projections.");
  m.def("finalize_estimate", &finalize_estimate, py::arg("acc"), py::arg("hierarchy"),
        py::arg("X_eval"));

  m.def(
      "synthetic_matrix",
      [](Index rows, Index cols, double fill, Index group_size, double jitter, double scale,
         std::uint64_t seed) {
        RandomStream s(seed);
        return synthetic_matrix({rows, cols, fill, group_size, jitter, scale}, s);
      },
      py::arg("rows") = 500, py::arg("cols") = 2000, py::arg("fill") = 0.01,
      py::arg("group_size") = 20, py::arg("jitter") = 0.05, py::arg("scale") = 10.0,
      py::arg("seed") = 1);
  m.def(
      "synthesize_targets",
      [](const SparseMatrix& X, std::uint64_t seed, double coef_var, double noise_var) {
        RandomStream s(seed);
        auto t = synthesize_targets(X, s, coef_var, noise_var);
        return py::make_tuple(t.b_true, t.y);
      },
      py::arg("X"), py::arg("seed") = 1, py::arg("coef_var") = 10.0,
      py::arg("noise_var") = 1000.0, "Returns (b_true, y).");
  m.def(
      "kfold_split",
      [](Index n, Index folds, std::uint64_t seed) {
        RandomStream s(seed);
        py::list out;
        for (const Fold& f : kfold_split(n, folds, s)) out.append(py::make_tuple(f.train, f.test));
        return out;
      },
      py::arg("n"), py::arg("folds") = 5, py::arg("seed") = 1);
  m.def(
      "metrics", [](const Vector& p, const Vector& t) { return metrics_dict(compute_metrics(p, t)); },
      py::arg("pred"), py::arg("truth"));

  m.def(
      "run_experiment",
      [](const SparseMatrix& X, std::optional<Vector> targets, const std::string& config) {
        const auto report = run_experiment(X, targets, config_from_json(config));
        return parse_json(report_json(report));
      },
      py::arg("X"), py::arg("targets") = py::none(), py::arg("config") = "{}",
      "Cross-validated experiment; `config` is a JSON object with the CLI keys. "
      "Returns the report as a dict.");
  m.def(
      "level_variance",
      [](const LevelHierarchy& h, const Vector& y, const MixedModelSpec& spec, Index draws,
         Index burnin, std::vector<Index> observations, std::uint64_t seed) {
        LevelVarianceOptions o;
        o.draws = draws;
        o.burn_in = burnin;
        o.observations = std::move(observations);
        o.seed = seed;
        const auto r = level_variance_report(h, y, spec, o);
        py::dict d;
        d["observations"] = r.observations;
        d["level"] = r.level;
        d["diff_solves"] = r.diff_solves;
        d["diff_projection"] = r.diff_projection;
        return d;
      },
      py::arg("hierarchy"), py::arg("y"), py::arg("spec"), py::arg("draws") = 500,
      py::arg("burnin") = 50, py::arg("observations") = std::vector<Index>{},
      py::arg("seed") = 1);

  m.def(
      "load_matrix",
      [](const std::string& path, const std::string& format) {
        return load_matrix(path, parse_matrix_format(format));
      },
      py::arg("path"), py::arg("format") = "auto");
  m.def(
      "write_matrix_market",
      [](const std::string& path, const SparseMatrix& A) { write_matrix_market(path, A); },
      py::arg("path"), py::arg("A"));
}
