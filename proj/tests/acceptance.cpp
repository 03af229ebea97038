// Acceptance checks C1-C13. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <boost/multiprecision/cpp_int.hpp>

#include "mlgibbs/errors.hpp"
#include "mlgibbs/harness.hpp"
#include "support.hpp"

using namespace mlgibbs;
using boost::multiprecision::cpp_int;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* id, const char* name, double budget_seconds,
               const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool pass = o.pass;
  std::ostringstream line;
  line << id << ' ';
  if (budget_seconds > 0 && secs >= budget_seconds) {
    pass = false;
    o.detail += "; over the time budget";
  }
  line << (pass ? "PASS" : "FAIL") << ' ' << name << ": " << o.detail << " [" << secs << " s";
  if (budget_seconds > 0) line << " of " << budget_seconds << " s";
  line << "]";
  std::cout << line.str() << std::endl;
  if (!pass) ++failures;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

Eigen::SparseMatrix<double> sparse_prolongator(const std::vector<Index>& a) {
  Index k = 0;
  for (Index c : a) k = std::max(k, c + 1);
  std::vector<double> size(static_cast<std::size_t>(k), 0.0);
  for (Index c : a) size[c] += 1.0;
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t i = 0; i < a.size(); ++i)
    t.emplace_back(static_cast<int>(i), static_cast<int>(a[i]), 1.0 / std::sqrt(size[a[i]]));
  Eigen::SparseMatrix<double> P(static_cast<Index>(a.size()), k);
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

Outcome c1() {
  std::mt19937_64 gen(1001);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index n = 1 + static_cast<Index>(gen() % 500);
    const Index k = 1 + static_cast<Index>(gen() % n);
    const auto a = test::random_assignment(n, k, gen);
    const Prolongator P(a);
    // Oracle P built independently from the assignment; the library P must
    // agree with it entrywise before the product is checked.
    const auto S = sparse_prolongator(a);
    for (Index i = 0; i < n; ++i)
      worst = std::max(worst, std::abs(P.prolong(Vector::Unit(k, a[i]))[i] - S.coeff(i, a[i])));
    const Eigen::SparseMatrix<double> G = S.transpose() * S;
    const DenseMatrix dense_G = DenseMatrix(G) - DenseMatrix::Identity(k, k);
    worst = std::max(worst, dense_G.cwiseAbs().maxCoeff());
    // The same identity through the library operators on random vectors.
    const Vector v = test::random_vector(k, gen);
    worst = std::max(worst, (P.restrict(P.prolong(v)) - v).cwiseAbs().maxCoeff() /
                                std::max(1.0, v.cwiseAbs().maxCoeff()));
  }
  return {worst <= 1e-14, "max |P^T P - I| = " + fmt(worst) + " over 100 clusterings"};
}

Outcome c2() {
  std::mt19937_64 gen(1002);
  double worst = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    const Index rows = 50 + static_cast<Index>(gen() % 151);
    const Index cols = 50 + static_cast<Index>(gen() % 251);
    const DenseMatrix D = test::random_dense(rows, cols, 0.05, gen);
    const auto X = SparseMatrix::from_dense(D);
    const Index k = 1 + static_cast<Index>(gen() % cols);
    const auto a = test::random_assignment(cols, k, gen);
    const DenseMatrix P = test::dense_prolongator(a);
    const DenseMatrix Xc = coarsen(X, Prolongator(a)).to_dense();
    for (double beta : {0.0, 0.5, 10.0}) {
      const DenseMatrix lhs =
          P.transpose() * (D.transpose() * D + beta * DenseMatrix::Identity(cols, cols)) * P;
      const DenseMatrix rhs = Xc.transpose() * Xc + beta * DenseMatrix::Identity(k, k);
      worst = std::max(worst, (lhs - rhs).norm() / rhs.norm());
    }
  }
  return {worst <= 1e-10, "max relative Frobenius error " + fmt(worst)};
}

Outcome c3() {
  std::mt19937_64 gen(1003);
  const Index n = 50, f = 5;
  const DenseMatrix D = test::random_dense(n, f, 1.0, gen);
  const auto X = SparseMatrix::from_dense(D);
  const Vector b_star{{2.0, -1.0, 3.0, 0.5, -2.5}};
  const Vector y = D * b_star + test::random_vector(n, gen) / std::sqrt(2.0);
  MixedModelSpec spec;
  spec.random = f;
  GibbsState st;
  st.b = Vector::Zero(f);
  st.tau = 2.0;
  st.lambda_u = 1.0;
  SolverConfig cfg;
  cfg.tol = 1e-13;
  cfg.warm_start = false;
  CoefficientSolver solver(X, cfg);
  RandomStream rs(1004);
  const Index draws = 20000;
  Vector mean = Vector::Zero(f);
  DenseMatrix second = DenseMatrix::Zero(f, f);
  for (Index i = 0; i < draws; ++i) {
    const Vector b = draw_coefficient(X, y, st, spec, solver, rs).b;
    mean += b;
    second += b * b.transpose();
  }
  mean /= static_cast<double>(draws);
  const DenseMatrix cov =
      (second - static_cast<double>(draws) * mean * mean.transpose()) / (draws - 1.0);
  const DenseMatrix A = D.transpose() * D + DenseMatrix::Identity(f, f) / 2.0;
  const Vector ridge = A.llt().solve(D.transpose() * y);
  const DenseMatrix exact_cov = (A * 2.0).inverse();
  const double mean_err = (mean - ridge).norm() / ridge.norm();
  const double cov_err = (cov - exact_cov).norm() / exact_cov.norm();
  return {mean_err <= 0.03 && cov_err <= 0.10,
          "mean rel. error " + fmt(mean_err) + ", covariance rel. error " + fmt(cov_err)};
}

Outcome c4() {
  std::mt19937_64 gen(1005);
  const DenseMatrix D = test::random_dense(20, 4, 0.7, gen);
  const auto X = SparseMatrix::from_dense(D);
  const Vector y = test::random_vector(20, gen) * 2.0;
  MixedModelSpec spec;
  spec.fixed = 1;
  spec.random = 3;
  GibbsState st;
  st.b = Vector{{0.5, -1.0, 0.25, 2.0}};
  const double sse = (y - D * st.b).squaredNorm();
  const double shape = spec.priors.alpha_e + 10.0;
  const double rate = spec.priors.beta_e + 0.5 * sse;
  RandomStream rs(1006);
  const Index n = 100000;
  double s = 0.0, s2 = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double t = sample_hyperparams(st, X, y, spec, rs).tau;
    s += t;
    s2 += t * t;
  }
  const double m = s / n;
  const double v = (s2 - s * m) / (n - 1.0);
  const double mean = shape / rate, var = shape / (rate * rate);
  const double mu4 = 3.0 * var * var * (1.0 + 2.0 / shape);
  const double zm = std::abs(m - mean) / std::sqrt(var / n);
  const double zv = std::abs(v - var) / std::sqrt((mu4 - var * var) / n);
  return {zm <= 5.0 && zv <= 5.0, "mean z = " + fmt(zm) + ", variance z = " + fmt(zv)};
}

Outcome c5() {
  std::mt19937_64 gen(1007);
  const DenseMatrix D = test::random_dense(200, 50, 0.2, gen);
  const auto X = SparseMatrix::from_dense(D);
  const Vector y = D * test::random_vector(50, gen) + test::random_vector(200, gen);
  MixedModelSpec spec;
  spec.fixed = 5;
  spec.random = 45;
  const auto h = LevelHierarchy::single(X, 5);
  const auto sched = make_schedule(ScheduleSpec{}, 1, 2200, 200);
  const RandomStream rs(1008);
  const auto ref = run_chain(X, y, spec, 2200, 200, SolverConfig{}, rs);
  const auto ml = run_ml_gibbs(h, y, spec, sched, SolverConfig{}, rs);
  const auto cs = run_ml_cs(h, y, spec, sched, SolverConfig{}, rs, Coupling::solves);
  const bool same_ml = ml.sums[0] == ref.sum_b && ml.counts[0] == ref.kept_count;
  const bool same_cs = cs.sums[0] == ref.sum_b &&
                       cs.counts[0] == ref.kept_count;
  const bool same_pred = finalize_estimate(ml, h, X) == predict_mean(ref, X) &&
                         finalize_estimate(cs, h, X) == predict_mean(ref, X);
  return {same_ml && same_cs && same_pred,
          std::string("ML-G ") + (same_ml ? "bitwise equal" : "differs") + ", MLCSS-G " +
              (same_cs ? "bitwise equal" : "differs")};
}

Outcome c6() {
  std::mt19937_64 gen(1009);
  const DenseMatrix D = test::random_dense(60, 15, 0.3, gen);
  const auto X = SparseMatrix::from_dense(D);
  const Vector y = test::random_vector(60, gen);
  MixedModelSpec spec;
  spec.fixed = 3;
  spec.random = 12;
  const auto h = LevelHierarchy::from_prolongators(
      X, 3, {Prolongator::identity(15), Prolongator::identity(15)});
  const auto sched = make_schedule(ScheduleSpec{ScheduleKind::v_cycle, 10}, 3, 1000, 100);
  double worst = 0.0;
  Index stored = 0;
  for (bool pre : {false, true}) {
    SolverConfig cfg;
    cfg.preconditioned = pre;
    const auto acc = run_ml_cs(h, y, spec, sched, cfg, RandomStream(1010), Coupling::solves);
    for (Index l = 1; l < 3; ++l) {
      worst = std::max(worst, acc.max_abs_difference[l]);
      worst = std::max(worst, acc.sums[l].cwiseAbs().maxCoeff());
      stored += acc.counts[l];
    }
  }
  return {worst == 0.0, "max |d_l| = " + fmt(worst) + " over " + std::to_string(stored) +
                            " stored differences"};
}

Outcome c7() {
  SyntheticMatrixOptions o;
  o.rows = 300;
  o.cols = 600;
  o.fill = 0.05;
  RandomStream data(1011);
  const auto X = synthetic_matrix(o, data);
  RandomStream ts(1012);
  const auto syn = synthesize_targets(X, ts);
  HierarchyOptions ho;
  ho.coarse_min = 20;
  ho.coarse_max = 60;
  ho.max_levels = 3;
  const auto h = build_hierarchy(X, ho);
  if (h.levels() != 3) return {false, "hierarchy has " + std::to_string(h.levels()) + " levels"};
  MixedModelSpec spec;
  spec.random = X.cols();

  // Rows without any nonzero predict 0 at every level and carry no variance.
  std::vector<Index> candidates;
  const auto offsets = X.row_offsets();
  for (Index r = 0; r < X.rows(); ++r)
    if (offsets[r + 1] > offsets[r]) candidates.push_back(r);
  RandomStream pick(1013);
  std::shuffle(candidates.begin(), candidates.end(), pick.engine());
  candidates.resize(20);
  std::sort(candidates.begin(), candidates.end());

  LevelVarianceOptions vo;
  vo.draws = 500;
  vo.burn_in = 50;
  vo.observations = candidates;
  vo.seed = 1014;
  const auto rep = level_variance_report(h, syn.y, spec, vo);
  bool pass = true;
  std::ostringstream d;
  d << "widths " << h.width(0) << "/" << h.width(1) << "/" << h.width(2) << "; ";
  for (Index l = 1; l <= 2; ++l) {
    Index below = 0;
    double ratio = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      below += rep.diff_solves[l][i] < rep.level[l][i];
      ratio += rep.diff_solves[l][i] / rep.level[l][i] / 20.0;
    }
    pass = pass && below >= 18;
    d << "level " << l << ": " << below << "/20 below, mean ratio " << ratio << "; ";
  }
  return {pass, d.str()};
}

struct ParityRuns {
  MetricsReport gibbs, ml, gibbs_again, ml_again;
};

ParityRuns& parity_runs() {
  static ParityRuns runs = [] {
    RandomStream data(3);
    const auto X = synthetic_matrix(SyntheticMatrixOptions{}, data);
    ExperimentConfig cfg;
    cfg.samples = 2200;
    cfg.burnin = 200;
    cfg.folds = 5;
    cfg.seed = 3;
    cfg.levels = 3;
    cfg.coarse_min = 50;
    cfg.coarse_max = 150;
    cfg.threads = 1;
    ParityRuns r;
    cfg.sampler = SamplerKind::gibbs;
    r.gibbs = run_experiment(X, std::nullopt, cfg);
    cfg.sampler = SamplerKind::ml;
    r.ml = run_experiment(X, std::nullopt, cfg);
    return r;
  }();
  return runs;
}

Outcome c8() {
  const auto& r = parity_runs();
  if (r.gibbs.failed || r.ml.failed) return {false, "failed folds"};
  const double pooled =
      std::sqrt(0.5 * (r.gibbs.rmse.std * r.gibbs.rmse.std + r.ml.rmse.std * r.ml.rmse.std));
  const double diff = std::abs(r.ml.rmse.mean - r.gibbs.rmse.mean);
  std::ostringstream d;
  d << "RMSE Gibbs " << r.gibbs.rmse.mean << " +- " << r.gibbs.rmse.std << ", ML-G "
    << r.ml.rmse.mean << " +- " << r.ml.rmse.std << ", |diff| " << diff << " vs pooled std "
    << pooled << "; rho " << r.gibbs.rho.mean << " / " << r.ml.rho.mean << "; ML-G widths";
  for (Index w : r.ml.folds[0].widths) d << ' ' << w;
  return {diff <= pooled && r.gibbs.rho.mean >= 0.9 && r.ml.rho.mean >= 0.9, d.str()};
}

Outcome c9() {
  const auto& r = parity_runs();
  const double speedup = r.gibbs.exec.mean / r.ml.exec.mean;
  std::ostringstream d;
  d << "exec Gibbs " << r.gibbs.exec.mean << " s, ML-G " << r.ml.exec.mean
    << " s per fold, speed-up " << speedup;
  return {r.ml.exec.mean < r.gibbs.exec.mean, d.str()};
}

Outcome c10() {
  bool pass = true;
  std::ostringstream d;
  for (Index k : {10, 100}) {
    const auto s = make_schedule(ScheduleSpec{ScheduleKind::v_cycle, k}, 3, 2200, 200);
    const bool exact = s.totals == std::vector<Index>{500, 1000, 500};
    pass = pass && exact;
    d << "V(" << k << ") " << (exact ? "exact" : "differs") << "; ";
  }
  struct Row {
    ScheduleKind kind;
    Index chunk;
    std::vector<Index> totals;
  };
  const std::vector<Row> rows{
      {ScheduleKind::v_cycle, 3, {498, 999, 501}},  {ScheduleKind::v_cycle, 30, {480, 990, 510}},
      {ScheduleKind::w_cycle, 3, {666, 999, 333}},  {ScheduleKind::w_cycle, 10, {670, 1000, 330}},
      {ScheduleKind::w_cycle, 30, {660, 990, 330}}, {ScheduleKind::w_cycle, 100, {700, 1000, 300}}};
  Index within = 0;
  for (const Row& r : rows) {
    const auto s = make_schedule(ScheduleSpec{r.kind, r.chunk}, 3, 2200, 200);
    bool ok = true;
    for (std::size_t l = 0; l < 3; ++l) ok = ok && std::abs(s.totals[l] - r.totals[l]) <= r.chunk;
    within += ok;
  }
  pass = pass && within == static_cast<Index>(rows.size());
  d << within << "/" << rows.size() << " other rows within one chunk per level";
  return {pass, d.str()};
}

std::vector<Index> rational_oracle(const std::vector<cpp_int>& num, const std::vector<cpp_int>& den,
                                   Index H) {
  cpp_int common = 1;
  for (const auto& x : den) common *= x;
  std::vector<cpp_int> scaled;
  cpp_int total = 0;
  for (std::size_t l = 0; l < num.size(); ++l) {
    scaled.push_back(num[l] * (common / den[l]));
    total += scaled.back();
  }
  std::vector<Index> out;
  for (const auto& s : scaled) out.push_back(static_cast<Index>(cpp_int(s * H / total)));
  return out;
}

Outcome c11() {
  std::mt19937_64 gen(1015);
  Index cost_ok = 0, var_ok = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t L = 1 + gen() % 6;
    const Index H = 1 + static_cast<Index>(gen() % 100000);
    LevelCost c;
    std::vector<cpp_int> one(L, 1), cost, root_var, root_cost;
    for (std::size_t l = 0; l < L; ++l) {
      const std::uint64_t u = 1 + gen() % 5000;
      const std::uint64_t v = 1 + gen() % 5000;
      c.nnz.push_back(u * u);
      c.variance.push_back(static_cast<double>(v * v));
      cost.push_back(cpp_int(u * u));
      root_var.push_back(cpp_int(v));
      root_cost.push_back(cpp_int(u));
    }
    cost_ok += allocate_cost(c, H) == rational_oracle(one, cost, H);
    var_ok += allocate_variance(c, H) == rational_oracle(root_var, root_cost, H);
  }
  return {cost_ok == 50 && var_ok == 50, "cost " + std::to_string(cost_ok) + "/50, variance " +
                                              std::to_string(var_ok) + "/50 exact"};
}

Outcome c12() {
  std::mt19937_64 gen(1016);
  const auto X = SparseMatrix::from_dense(test::clustered_dense(150, 30, 10, 0.05, 0.05, gen));
  HierarchyOptions o;
  o.coarse_min = 25;
  o.coarse_max = 40;
  o.max_levels = 2;
  const auto h = build_hierarchy(X, o);
  const Vector shift = Vector::Constant(X.cols(), 1e-2);
  const DenseMatrix A = dense_gram(X) + DenseMatrix(shift.asDiagonal());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(A, Eigen::EigenvaluesOnly);
  const double cond = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
  const GramOperator G(X, shift);
  const auto M = build_two_level(h, 1, shift);
  const LinearOperator op = [&G](const Vector& x, Vector& y) { G.apply(x, y); };
  const LinearOperator pre = [&M](const Vector& r, Vector& z) { M.apply(r, z); };
  const Vector rhs = test::random_vector(X.cols(), gen);
  const auto plain = cg_solve(op, rhs, Vector::Zero(rhs.size()), 1e-8, 10 * X.cols());
  const auto flex = cg_solve(op, rhs, Vector::Zero(rhs.size()), 1e-8, 10 * X.cols(), &pre);
  std::ostringstream d;
  d << "condition " << cond << ", coarse width " << h.width(0) << ", plain CG "
    << plain.report.iterations << " iterations, preconditioned " << flex.report.iterations;
  return {cond >= 1e4 && plain.report.converged && flex.report.converged &&
              flex.report.iterations < plain.report.iterations,
          d.str()};
}

Outcome c13() {
  auto& r = parity_runs();
  RandomStream data(3);
  const auto X = synthetic_matrix(SyntheticMatrixOptions{}, data);
  ExperimentConfig cfg = r.gibbs.config;
  r.gibbs_again = run_experiment(X, std::nullopt, cfg);
  cfg = r.ml.config;
  r.ml_again = run_experiment(X, std::nullopt, cfg);
  const bool g = report_json(r.gibbs, false) == report_json(r.gibbs_again, false);
  const bool m = report_json(r.ml, false) == report_json(r.ml_again, false);
  return {g && m, std::string("Gibbs reports ") + (g ? "identical" : "differ") + ", ML-G reports " +
                      (m ? "identical" : "differ")};
}

}  // namespace

int main() {
  std::cout.precision(4);
  criterion("C1", "prolongator orthonormality", 1.0, c1);
  criterion("C2", "Galerkin identity", 5.0, c2);
  criterion("C3", "noise-injection moments", 30.0, c3);
  criterion("C4", "Gamma posterior moments", 5.0, c4);
  criterion("C5", "one-level degeneracy", 60.0, c5);
  criterion("C6", "identical-level cancellation", 0.0, c6);
  criterion("C7", "control-variate property", 300.0, c7);
  criterion("C8", "accuracy parity", 900.0, [] {
    parity_runs();
    return c8();
  });
  criterion("C9", "speed-up direction", 0.0, c9);
  criterion("C10", "schedule reproduction", 0.0, c10);
  criterion("C11", "allocation formulas", 0.0, c11);
  criterion("C12", "preconditioned solver", 0.0, c12);
  criterion("C13", "end-to-end determinism", 0.0, c13);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
