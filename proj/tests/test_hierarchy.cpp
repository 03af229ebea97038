#include <doctest.h>

#include <set>

#include "mlgibbs/errors.hpp"
#include "mlgibbs/hierarchy.hpp"
#include "support.hpp"

using namespace mlgibbs;

namespace {

SparseMatrix columns(const DenseMatrix& D) { return SparseMatrix::from_dense(D); }

Index count(const std::vector<Index>& a) {
  return a.empty() ? 0 : *std::max_element(a.begin(), a.end()) + 1;
}

void check_partition(const std::vector<Index>& a, Index n) {
  REQUIRE(static_cast<Index>(a.size()) == n);
  std::set<Index> ids(a.begin(), a.end());
  CHECK(static_cast<Index>(ids.size()) == count(a));
  if (!a.empty()) {
    CHECK(*ids.begin() == 0);
    CHECK(*ids.rbegin() == count(a) - 1);
  }
}

}  // namespace

TEST_CASE("leader_follower groups collinear columns") {
  DenseMatrix D(2, 3);
  D << 1, 2, 0,
       0, 0, 1;
  CHECK(leader_follower(columns(D), 0.1) == std::vector<Index>{0, 0, 1});
}

TEST_CASE("threshold 0 keeps distinct directions apart") {
  std::mt19937_64 gen(1);
  const auto X = test::random_sparse(20, 15, 0.5, gen);
  const auto a = leader_follower(X, 0.0);
  std::vector<Index> expect(15);
  std::iota(expect.begin(), expect.end(), Index{0});
  // A random column pair is parallel with probability zero.
  Index zero_cols = 0;
  const DenseMatrix D = X.to_dense();
  for (Index j = 0; j < 15; ++j) zero_cols += D.col(j).squaredNorm() == 0.0;
  CHECK(count(a) == 15);
  CHECK(zero_cols == 0);
}

TEST_CASE("threshold 0 still merges exact duplicates and rescaled copies") {
  DenseMatrix D(3, 3);
  D << 1, 3, 1,
       2, 6, 0,
       0, 0, 1;
  CHECK(leader_follower(columns(D), 0.0) == std::vector<Index>{0, 0, 1});
}

TEST_CASE("threshold 1 puts every nonzero column in one cluster") {
  DenseMatrix D(3, 5);
  D << 1, 0, -1, 0, 0,
       0, 1,  0, 0, 2,
       0, 0,  0, 0, 1;
  const auto a = leader_follower(columns(D), 1.0);
  // Column 3 is zero and forms its own cluster.
  CHECK(a == std::vector<Index>{0, 0, 0, 1, 0});
}

TEST_CASE("zero columns become singletons at every threshold") {
  DenseMatrix D = DenseMatrix::Zero(2, 4);
  D(0, 1) = 1.0;
  D(0, 3) = 2.0;
  for (double t : {0.0, 0.3, 1.0}) {
    const auto a = leader_follower(columns(D), t);
    CHECK(a[0] != a[1]);
    CHECK(a[2] != a[1]);
    CHECK(a[0] != a[2]);
    CHECK(a[1] == a[3]);
  }
}

TEST_CASE("a column joins the earliest qualifying leader") {
  // Columns 0 and 1 are leaders (orthogonal); column 2 is close to both.
  DenseMatrix D(2, 3);
  D << 1, 0, 1,
       0, 1, 1;
  CHECK(leader_follower(columns(D), 0.2) == std::vector<Index>{0, 1, 0});
  CHECK(leader_follower(columns(D), 0.1) == std::vector<Index>{0, 1, 2});
}

TEST_CASE("leader_follower is a partition for any threshold") {
  std::mt19937_64 gen(2);
  for (int rep = 0; rep < 30; ++rep) {
    const Index n = 1 + static_cast<Index>(gen() % 40);
    const auto X = test::random_sparse(25, n, 0.15, gen);
    const double t = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    check_partition(leader_follower(X, t), n);
  }
  const auto X = test::random_sparse(5, 6, 0.5, gen);
  CHECK_THROWS_AS((void)leader_follower(X, 0.5, 2, 7), IndexError);
}

TEST_CASE("build_prolongator examples") {
  const std::vector<Index> a{0, 0, 1};
  const Prolongator P = build_prolongator(a);
  DenseMatrix expect(3, 2);
  const double h = 1.0 / std::sqrt(2.0);
  expect << h, 0, h, 0, 0, 1;
  CHECK(test::rel_diff(P.to_dense(), expect) <= 1e-15);
  CHECK(P.cluster_sizes()[0] == 2);

  const std::vector<Index> s{0, 1, 2};
  CHECK(build_prolongator(s).to_dense() == DenseMatrix::Identity(3, 3));
}

TEST_CASE("assignments with gaps or negative ids are rejected") {
  const std::vector<Index> gap{0, 2, 2};
  CHECK_THROWS_AS((void)build_prolongator(gap), InvalidAssignment);
  const std::vector<Index> neg{0, -1};
  CHECK_THROWS_AS((void)build_prolongator(neg), InvalidAssignment);
}

TEST_CASE("P^T P = I on random clusterings") {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 1 + static_cast<Index>(gen() % 60);
    const Index k = 1 + static_cast<Index>(gen() % n);
    const auto a = test::random_assignment(n, k, gen);
    const DenseMatrix P = build_prolongator(a).to_dense();
    CHECK(test::rel_diff(P, test::dense_prolongator(a)) <= 1e-15);
    CHECK((P.transpose() * P - DenseMatrix::Identity(k, k)).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("prolong and restrict examples") {
  const std::vector<Index> a{0, 0, 1};
  const Prolongator P(a);
  const Vector fine = P.prolong(Vector{{std::sqrt(2.0), 5.0}});
  CHECK((fine - Vector{{1.0, 1.0, 5.0}}).cwiseAbs().maxCoeff() <= 1e-15);
  const Vector coarse = P.restrict(Vector{{1.0, 1.0, 5.0}});
  CHECK((coarse - Vector{{std::sqrt(2.0), 5.0}}).cwiseAbs().maxCoeff() <= 1e-15);

  const Prolongator I = Prolongator::identity(4);
  const Vector v{{1.0, -2.0, 3.0, 0.5}};
  CHECK(I.prolong(v) == v);
  CHECK(I.restrict(v) == v);

  CHECK_THROWS_AS((void)P.prolong(Vector::Zero(3)), DimensionError);
  CHECK_THROWS_AS((void)P.restrict(Vector::Zero(2)), DimensionError);
}

TEST_CASE("prolong, restrict and their composition against dense P") {
  std::mt19937_64 gen(4);
  for (int rep = 0; rep < 30; ++rep) {
    const Index n = 2 + static_cast<Index>(gen() % 50);
    const Index k = 1 + static_cast<Index>(gen() % n);
    const auto a = test::random_assignment(n, k, gen);
    const Prolongator P(a);
    const DenseMatrix D = test::dense_prolongator(a);
    const Vector vc = test::random_vector(k, gen);
    const Vector vf = test::random_vector(n, gen);
    CHECK((P.prolong(vc) - D * vc).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((P.restrict(vf) - D.transpose() * vf).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((P.restrict(P.prolong(vc)) - vc).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("coarsen examples") {
  DenseMatrix D(2, 3);
  D << 1, 1, 2,
       0, 2, 0;
  const std::vector<Index> a{0, 0, 1};
  const DenseMatrix C = coarsen(columns(D), Prolongator(a)).to_dense();
  DenseMatrix expect(2, 2);
  expect << 2 / std::sqrt(2.0), 2, 2 / std::sqrt(2.0), 0;
  CHECK(test::rel_diff(C, expect) <= 1e-15);

  const auto X = columns(D);
  CHECK(coarsen(X, Prolongator::identity(3)) == X);
  CHECK_THROWS_AS((void)coarsen(X, Prolongator::identity(2)), DimensionError);
}

TEST_CASE("coarsen equals the dense product and never adds pattern") {
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 30; ++rep) {
    const DenseMatrix D = test::random_dense(10, 6, 0.4, gen);
    const Index k = 1 + static_cast<Index>(gen() % 6);
    const auto a = test::random_assignment(6, k, gen);
    const auto C = coarsen(columns(D), Prolongator(a));
    CHECK(test::rel_diff(C.to_dense(), D * test::dense_prolongator(a)) <= 1e-13);
    CHECK(C.nnz() <= columns(D).nnz());
  }
}

TEST_CASE("Galerkin identity for the coarse Gram operator") {
  std::mt19937_64 gen(6);
  for (int rep = 0; rep < 10; ++rep) {
    const DenseMatrix D = test::random_dense(30, 20, 0.2, gen);
    const auto a = test::random_assignment(20, 7, gen);
    const DenseMatrix P = test::dense_prolongator(a);
    const DenseMatrix Xc = coarsen(columns(D), Prolongator(a)).to_dense();
    for (double beta : {0.0, 0.5, 10.0}) {
      const DenseMatrix lhs =
          P.transpose() * (D.transpose() * D + beta * DenseMatrix::Identity(20, 20)) * P;
      const DenseMatrix rhs = Xc.transpose() * Xc + beta * DenseMatrix::Identity(7, 7);
      CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());
    }
  }
}

TEST_CASE("build_hierarchy with one level returns the input") {
  std::mt19937_64 gen(7);
  const auto X = test::random_sparse(10, 30, 0.3, gen);
  HierarchyOptions o;
  o.max_levels = 1;
  o.coarse_min = 2;
  o.coarse_max = 5;
  const auto h = build_hierarchy(X, o);
  CHECK(h.levels() == 1);
  CHECK(h.matrix(0) == X);
  CHECK(h.thresholds().empty());
}

TEST_CASE("identical columns collapse to width 1 in one level") {
  DenseMatrix D(3, 8);
  for (Index j = 0; j < 8; ++j) D.col(j) = Vector{{1.5, 0.0, -2.0}};
  HierarchyOptions o;
  o.max_levels = 4;
  o.coarse_min = 1;
  o.coarse_max = 1;
  const auto h = build_hierarchy(columns(D), o);
  REQUIRE(h.levels() == 2);
  CHECK(h.width(0) == 1);
  CHECK(h.thresholds().front() > 0.0);
}

TEST_CASE("invalid hierarchy options and stagnation") {
  std::mt19937_64 gen(8);
  const auto X = test::random_sparse(10, 30, 0.3, gen);
  HierarchyOptions o;
  o.max_levels = 0;
  CHECK_THROWS_AS((void)build_hierarchy(X, o), ConfigError);
  o.max_levels = 2;
  o.coarse_min = 0;
  CHECK_THROWS_AS((void)build_hierarchy(X, o), ConfigError);
  o.coarse_min = 5;
  o.coarse_max = 4;
  CHECK_THROWS_AS((void)build_hierarchy(X, o), ConfigError);

  // Only zero columns: nothing can merge.
  const SparseMatrix Z = SparseMatrix::from_dense(DenseMatrix::Zero(3, 6));
  o.coarse_min = 1;
  o.coarse_max = 2;
  CHECK_THROWS_AS((void)build_hierarchy(Z, o), HierarchyError);
}

TEST_CASE("hierarchy structure on a clustered matrix") {
  // 40 groups of 12 near-parallel columns with 20 fixed-effect columns in front.
  std::mt19937_64 gen(9);
  std::normal_distribution<double> n01(0.0, 1.0);
  const Index rows = 120, groups = 40, per = 12, fixed = 20;
  DenseMatrix D = DenseMatrix::Zero(rows, fixed + groups * per);
  D.leftCols(fixed) = test::random_dense(rows, fixed, 0.3, gen);
  for (Index g = 0; g < groups; ++g) {
    const Vector base = test::random_dense(rows, 1, 0.05, gen).col(0) + Vector::Unit(rows, g);
    for (Index c = 0; c < per; ++c) {
      Vector col = base;
      for (Index i = 0; i < rows; ++i)
        if (col[i] != 0.0) col[i] *= 1.0 + 0.05 * n01(gen);
      D.col(fixed + g * per + c) = col;
    }
  }
  const auto X = columns(D);
  HierarchyOptions o;
  o.group_boundary = fixed;
  o.coarse_min = 40;
  o.coarse_max = 80;
  o.max_levels = 3;
  const auto h = build_hierarchy(X, o);

  CHECK(h.levels() >= 2);
  CHECK(h.width(h.finest()) == X.cols());
  CHECK(h.width(0) <= 80);
  CHECK(h.width(0) >= 40);
  CHECK(h.thresholds().size() == static_cast<std::size_t>(h.levels() - 1));
  for (Index l = 1; l < h.levels(); ++l) {
    const Prolongator& P = h.prolongator(l);
    CHECK(P.fine_dim() == h.width(l));
    CHECK(P.coarse_dim() == h.width(l - 1));
    CHECK(h.matrix(l).rows() == rows);
    CHECK(test::rel_diff(h.matrix(l - 1).to_dense(), h.matrix(l).to_dense() * P.to_dense()) <=
          1e-13);
    // No cluster spans the fixed/random boundary.
    const Index fine_b = h.group_boundary(l);
    const Index coarse_b = h.group_boundary(l - 1);
    for (Index i = 0; i < P.fine_dim(); ++i)
      CHECK((i < fine_b) == (P.assignment()[i] < coarse_b));
  }
  CHECK(h.group_boundary(h.finest()) == fixed);

  // Prediction-path identity X_{l-1} b = X_l P_l b and multi-level transfers.
  const Vector b0 = test::random_vector(h.width(0), gen);
  const Vector direct = h.matrix(0).to_dense() * b0;
  const Vector via = h.matrix(h.finest()).to_dense() * h.prolong(b0, 0, h.finest());
  CHECK((direct - via).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, direct.norm()));
  CHECK((h.restrict(h.prolong(b0, 0, h.finest()), h.finest(), 0) - b0).cwiseAbs().maxCoeff() <=
        1e-13);
  CHECK(h.transfer(b0, 0, 0) == b0);
  CHECK_THROWS_AS((void)h.prolong(b0, 1, 0), IndexError);
}

TEST_CASE("from_prolongators checks group separation") {
  DenseMatrix D = DenseMatrix::Identity(4, 4);
  const std::vector<Index> ok{0, 0, 1, 1};
  const auto h = LevelHierarchy::from_prolongators(columns(D), 2, {Prolongator(ok)});
  CHECK(h.levels() == 2);
  CHECK(h.group_boundary(0) == 1);
  const std::vector<Index> mixed{0, 1, 1, 2};
  CHECK_THROWS_AS((void)LevelHierarchy::from_prolongators(columns(D), 2, {Prolongator(mixed)}),
                  HierarchyError);
  CHECK_THROWS_AS(
      (void)LevelHierarchy::from_prolongators(columns(D), 0, {Prolongator::identity(3)}),
      DimensionError);
}
