#include "mlgibbs/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mlgibbs/errors.hpp"

namespace mlgibbs {

namespace {

// Two columns within this distance of an exact match count as equal
// direction even at threshold 0.
constexpr double kDistanceSlack = 1e-12;

struct ColumnStore {
  std::vector<Index> offsets;
  std::vector<Index> rows;
  std::vector<double> values;
};

ColumnStore columns_of(const SparseMatrix& X, Index col_begin, Index col_end) {
  const Index width = col_end - col_begin;
  ColumnStore cs;
  cs.offsets.assign(width + 1, 0);
  const auto offsets = X.row_offsets();
  const auto cols = X.col_indices();
  const auto vals = X.values();
  for (std::size_t k = 0; k < cols.size(); ++k)
    if (cols[k] >= col_begin && cols[k] < col_end) ++cs.offsets[cols[k] - col_begin + 1];
  std::partial_sum(cs.offsets.begin(), cs.offsets.end(), cs.offsets.begin());
  cs.rows.resize(cs.offsets.back());
  cs.values.resize(cs.offsets.back());
  std::vector<Index> fill(cs.offsets.begin(), cs.offsets.end() - 1);
  for (Index r = 0; r < X.rows(); ++r) {
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k) {
      if (cols[k] < col_begin || cols[k] >= col_end) continue;
      const Index pos = fill[cols[k] - col_begin]++;
      cs.rows[pos] = r;
      cs.values[pos] = vals[k];
    }
  }
  return cs;
}

void check_length(const char* op, Index got, Index expected) {
  if (got != expected) {
    std::ostringstream msg;
    msg << op << ": vector length " << got << " does not match " << expected;
    throw DimensionError(msg.str());
  }
}

}  // namespace

Prolongator::Prolongator(std::vector<Index> assignment) : assignment_(std::move(assignment)) {
  Index max_id = -1;
  for (Index id : assignment_) {
    if (id < 0) throw InvalidAssignment("cluster ids must be non-negative");
    max_id = std::max(max_id, id);
  }
  cluster_sizes_.assign(max_id + 1, 0);
  for (Index id : assignment_) ++cluster_sizes_[id];
  for (Index j = 0; j <= max_id; ++j) {
    if (cluster_sizes_[j] == 0) {
      std::ostringstream msg;
      msg << "cluster id " << j << " is unused; ids must be contiguous";
      throw InvalidAssignment(msg.str());
    }
  }
  inv_sqrt_size_.resize(cluster_sizes_.size());
  for (std::size_t j = 0; j < cluster_sizes_.size(); ++j)
    inv_sqrt_size_[j] = 1.0 / std::sqrt(static_cast<double>(cluster_sizes_[j]));
}

Prolongator Prolongator::identity(Index n) {
  std::vector<Index> ids(n);
  std::iota(ids.begin(), ids.end(), Index{0});
  return Prolongator(std::move(ids));
}

Vector Prolongator::prolong(const Vector& coarse) const {
  check_length("prolong", coarse.size(), coarse_dim());
  Vector fine(fine_dim());
  for (Index i = 0; i < fine_dim(); ++i) {
    const Index c = assignment_[i];
    fine[i] = coarse[c] * inv_sqrt_size_[c];
  }
  return fine;
}

Vector Prolongator::restrict(const Vector& fine) const {
  check_length("restrict", fine.size(), fine_dim());
  Vector coarse = Vector::Zero(coarse_dim());
  for (Index i = 0; i < fine_dim(); ++i) coarse[assignment_[i]] += fine[i];
  for (Index j = 0; j < coarse_dim(); ++j) coarse[j] *= inv_sqrt_size_[j];
  return coarse;
}

DenseMatrix Prolongator::to_dense() const {
  DenseMatrix P = DenseMatrix::Zero(fine_dim(), coarse_dim());
  for (Index i = 0; i < fine_dim(); ++i) P(i, assignment_[i]) = weight(i);
  return P;
}

Prolongator build_prolongator(std::span<const Index> assignment) {
  return Prolongator(std::vector<Index>(assignment.begin(), assignment.end()));
}

std::vector<Index> leader_follower(const SparseMatrix& X, double threshold) {
  return leader_follower(X, threshold, 0, X.cols());
}

std::vector<Index> leader_follower(const SparseMatrix& X, double threshold,
                                   Index col_begin, Index col_end) {
  if (col_begin < 0 || col_end > X.cols() || col_begin > col_end)
    throw IndexError("leader_follower: column range out of bounds");
  const Index width = col_end - col_begin;
  const ColumnStore cs = columns_of(X, col_begin, col_end);

  std::vector<Index> assignment(width, -1);
  Index next_id = 0;

  // Leaders, indexed by creation order, with an inverted row -> leader index.
  std::vector<Index> leader_cluster;
  std::vector<double> leader_norm;
  std::vector<std::vector<std::pair<Index, double>>> row_leaders(X.rows());

  std::vector<double> dot;        // per-leader accumulator
  std::vector<Index> touched;     // leaders overlapping the current column
  std::vector<char> is_touched;

  const double limit = threshold + kDistanceSlack;
  for (Index j = 0; j < width; ++j) {
    const Index begin = cs.offsets[j], end = cs.offsets[j + 1];
    double norm2 = 0.0;
    for (Index k = begin; k < end; ++k) norm2 += cs.values[k] * cs.values[k];
    if (norm2 == 0.0) {
      assignment[j] = next_id++;
      continue;
    }
    const double norm = std::sqrt(norm2);

    touched.clear();
    for (Index k = begin; k < end; ++k) {
      for (const auto& [leader, value] : row_leaders[cs.rows[k]]) {
        if (!is_touched[leader]) {
          is_touched[leader] = 1;
          touched.push_back(leader);
        }
        dot[leader] += value * cs.values[k];
      }
    }

    Index chosen = -1;
    for (Index leader : touched) {
      const double cosine = dot[leader] / (norm * leader_norm[leader]);
      if (0.5 * (1.0 - cosine) <= limit && (chosen < 0 || leader < chosen)) chosen = leader;
    }
    // Leaders sharing no row are orthogonal, at distance exactly 1/2.
    if (limit >= 0.5) {
      for (Index leader = 0;
           leader < static_cast<Index>(leader_cluster.size()) &&
           (chosen < 0 || leader < chosen);
           ++leader) {
        if (!is_touched[leader]) {
          chosen = leader;
          break;
        }
      }
    }
    for (Index leader : touched) {
      is_touched[leader] = 0;
      dot[leader] = 0.0;
    }

    if (chosen >= 0) {
      assignment[j] = leader_cluster[chosen];
      continue;
    }
    const Index leader = static_cast<Index>(leader_cluster.size());
    leader_cluster.push_back(next_id);
    leader_norm.push_back(norm);
    dot.push_back(0.0);
    is_touched.push_back(0);
    for (Index k = begin; k < end; ++k)
      row_leaders[cs.rows[k]].emplace_back(leader, cs.values[k]);
    assignment[j] = next_id++;
  }
  return assignment;
}

SparseMatrix coarsen(const SparseMatrix& X, const Prolongator& P) {
  if (X.cols() != P.fine_dim()) {
    std::ostringstream msg;
    msg << "coarsen: matrix has " << X.cols() << " columns, prolongator expects "
        << P.fine_dim();
    throw DimensionError(msg.str());
  }
  const auto offsets = X.row_offsets();
  const auto cols = X.col_indices();
  const auto vals = X.values();
  const auto assign = P.assignment();

  std::vector<Index> out_offsets{0};
  std::vector<Index> out_cols;
  std::vector<double> out_vals;
  out_offsets.reserve(X.rows() + 1);
  out_cols.reserve(X.nnz());
  out_vals.reserve(X.nnz());

  std::vector<double> acc(P.coarse_dim(), 0.0);
  std::vector<char> seen(P.coarse_dim(), 0);
  std::vector<Index> row_clusters;
  for (Index r = 0; r < X.rows(); ++r) {
    row_clusters.clear();
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k) {
      const Index c = assign[cols[k]];
      if (!seen[c]) {
        seen[c] = 1;
        row_clusters.push_back(c);
      }
      acc[c] += vals[k];
    }
    std::sort(row_clusters.begin(), row_clusters.end());
    for (Index c : row_clusters) {
      out_cols.push_back(c);
      out_vals.push_back(acc[c] * P.cluster_weight(c));
      acc[c] = 0.0;
      seen[c] = 0;
    }
    out_offsets.push_back(static_cast<Index>(out_cols.size()));
  }
  return SparseMatrix(X.rows(), P.coarse_dim(), std::move(out_offsets),
                      std::move(out_cols), std::move(out_vals));
}

LevelHierarchy LevelHierarchy::single(SparseMatrix X, Index group_boundary) {
  if (group_boundary < 0 || group_boundary > X.cols())
    throw DimensionError("group boundary outside the column range");
  LevelHierarchy h;
  h.matrices_.push_back(std::move(X));
  h.boundaries_.push_back(group_boundary);
  return h;
}

namespace {

// Number of clusters of `P` lying entirely in the fixed-effect group, or throws
// if a cluster straddles the boundary.
Index coarse_boundary(const Prolongator& P, Index boundary) {
  const auto assign = P.assignment();
  Index fixed_clusters = 0;
  for (Index i = 0; i < P.fine_dim(); ++i)
    if (i < boundary) fixed_clusters = std::max(fixed_clusters, assign[i] + 1);
  for (Index i = 0; i < P.fine_dim(); ++i) {
    const bool fixed = i < boundary;
    if (fixed != (assign[i] < fixed_clusters))
      throw HierarchyError("a cluster mixes fixed-effect and random-effect columns");
  }
  return fixed_clusters;
}

}  // namespace

LevelHierarchy LevelHierarchy::from_prolongators(SparseMatrix X, Index group_boundary,
                                                 std::vector<Prolongator> fine_to_coarse) {
  LevelHierarchy h = single(std::move(X), group_boundary);
  for (auto& P : fine_to_coarse) {
    const SparseMatrix& fine = h.matrices_.front();
    Index boundary = coarse_boundary(P, h.boundaries_.front());
    SparseMatrix coarse = coarsen(fine, P);
    h.matrices_.insert(h.matrices_.begin(), std::move(coarse));
    h.boundaries_.insert(h.boundaries_.begin(), boundary);
    h.prolongators_.insert(h.prolongators_.begin(), std::move(P));
  }
  return h;
}

Vector LevelHierarchy::prolong(const Vector& v, Index from, Index to) const {
  if (from > to) throw IndexError("prolong: target level is coarser than source");
  Vector out = v;
  for (Index l = from + 1; l <= to; ++l) out = prolongator(l).prolong(out);
  return out;
}

Vector LevelHierarchy::restrict(const Vector& v, Index from, Index to) const {
  if (to > from) throw IndexError("restrict: target level is finer than source");
  Vector out = v;
  for (Index l = from; l > to; --l) out = prolongator(l).restrict(out);
  return out;
}

Vector LevelHierarchy::transfer(const Vector& v, Index from, Index to) const {
  return to >= from ? prolong(v, from, to) : restrict(v, from, to);
}

namespace {

std::vector<Index> cluster_groups(const SparseMatrix& X, Index boundary, double threshold) {
  std::vector<Index> assignment = leader_follower(X, threshold, 0, boundary);
  const Index offset =
      assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::vector<Index> random = leader_follower(X, threshold, boundary, X.cols());
  for (Index id : random) assignment.push_back(id + offset);
  return assignment;
}

Index cluster_count(const std::vector<Index>& assignment) {
  return assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
}

}  // namespace

LevelHierarchy build_hierarchy(const SparseMatrix& X, const HierarchyOptions& options) {
  if (options.max_levels < 1) throw ConfigError("max_levels must be at least 1");
  if (options.coarse_min < 1 || options.coarse_max < options.coarse_min)
    throw ConfigError("coarse size range must satisfy 1 <= min <= max");

  LevelHierarchy h = LevelHierarchy::single(X, options.group_boundary);
  const Index fine_width = X.cols();
  if (options.max_levels == 1 || fine_width <= options.coarse_max) return h;

  const Index steps = options.max_levels - 1;
  const double final_target =
      std::sqrt(static_cast<double>(options.coarse_min) * static_cast<double>(options.coarse_max));
  const double low_ratio = options.coarse_min / final_target;
  const double high_ratio = options.coarse_max / final_target;

  for (Index step = 1; step <= steps; ++step) {
    const SparseMatrix& current = h.matrices_.front();
    const Index boundary = h.boundaries_.front();
    const Index width = current.cols();
    const double target =
        fine_width * std::pow(final_target / fine_width, static_cast<double>(step) / steps);
    const double band_lo = step == steps ? options.coarse_min : target * low_ratio;
    const double band_hi = step == steps ? options.coarse_max : target * high_ratio;

    auto in_band = [&](Index w) { return w >= band_lo && w <= band_hi; };
    auto miss = [&](Index w) { return std::abs(std::log(static_cast<double>(w) / target)); };

    double chosen_threshold = 1.0;
    std::vector<Index> chosen = cluster_groups(current, boundary, 1.0);
    Index chosen_width = cluster_count(chosen);
    if (chosen_width == width) {
      std::ostringstream msg;
      msg << "clustering stagnates at width " << width
          << " even at threshold 1; cannot reach the coarse size range";
      throw HierarchyError(msg.str());
    }
    if (chosen_width < band_lo) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < options.max_bisection_steps; ++it) {
        const double mid = 0.5 * (lo + hi);
        std::vector<Index> trial = cluster_groups(current, boundary, mid);
        const Index w = cluster_count(trial);
        const bool better = in_band(w) ? !in_band(chosen_width) || miss(w) < miss(chosen_width)
                                       : !in_band(chosen_width) && miss(w) < miss(chosen_width);
        if (better && w < width) {
          chosen = std::move(trial);
          chosen_width = w;
          chosen_threshold = mid;
        }
        if (in_band(w)) break;
        if (w > band_hi) lo = mid; else hi = mid;
      }
    }

    Prolongator P(std::move(chosen));
    const Index new_boundary = coarse_boundary(P, boundary);
    SparseMatrix coarse = coarsen(current, P);
    h.matrices_.insert(h.matrices_.begin(), std::move(coarse));
    h.boundaries_.insert(h.boundaries_.begin(), new_boundary);
    h.prolongators_.insert(h.prolongators_.begin(), std::move(P));
    h.thresholds_.insert(h.thresholds_.begin(), chosen_threshold);

    const Index w = h.matrices_.front().cols();
    if (w <= options.coarse_max || w == 1) break;
  }
  return h;
}

}  // namespace mlgibbs
