#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>

#include "mlgibbs/errors.hpp"
#include "mlgibbs/multilevel.hpp"

namespace mlgibbs {

ScheduleSpec ScheduleSpec::parse(const std::string& text) {
  if (text == "consecutive") return {ScheduleKind::consecutive, 0};
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  ScheduleSpec spec;
  if (name == "vcycle") {
    spec.kind = ScheduleKind::v_cycle;
  } else if (name == "wcycle") {
    spec.kind = ScheduleKind::w_cycle;
  } else {
    throw ConfigError("unknown schedule '" + text + "'; expected consecutive, vcycle:k or wcycle:k");
  }
  if (colon == std::string::npos) throw ConfigError("schedule '" + text + "' needs a chunk size");
  const std::string chunk = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(chunk.data(), chunk.data() + chunk.size(), spec.chunk);
  if (ec != std::errc() || ptr != chunk.data() + chunk.size() || spec.chunk < 1)
    throw ConfigError("schedule chunk size must be a positive integer: '" + text + "'");
  return spec;
}

std::string ScheduleSpec::to_string() const {
  switch (kind) {
    case ScheduleKind::consecutive: return "consecutive";
    case ScheduleKind::v_cycle: return "vcycle:" + std::to_string(chunk);
    case ScheduleKind::w_cycle: return "wcycle:" + std::to_string(chunk);
  }
  return "?";
}

Index SampleSchedule::kept() const {
  return std::accumulate(totals.begin(), totals.end(), Index{0});
}

namespace {

void multigrid_w(Index level, std::vector<Index>& out) {
  if (level == 0) {
    out.push_back(0);
    return;
  }
  out.push_back(level);
  multigrid_w(level - 1, out);
  multigrid_w(level - 1, out);
  out.push_back(level);
}

}  // namespace

std::vector<Index> cycle_pattern(ScheduleKind kind, Index levels) {
  if (levels < 1) throw ConfigError("a schedule needs at least one level");
  std::vector<Index> pattern;
  if (levels == 1 || kind == ScheduleKind::consecutive) {
    for (Index l = 0; l < levels; ++l) pattern.push_back(l);
    return pattern;
  }
  if (kind == ScheduleKind::v_cycle) {
    for (Index l = 0; l < levels; ++l) pattern.push_back(l);
    for (Index l = levels - 2; l >= 1; --l) pattern.push_back(l);
    return pattern;
  }
  std::vector<Index> raw;
  multigrid_w(levels - 1, raw);
  for (Index l : raw)
    if (pattern.empty() || pattern.back() != l) pattern.push_back(l);
  // The closing visit of the finest level opens the next period.
  pattern.pop_back();
  const auto first_coarse = std::find(pattern.begin(), pattern.end(), Index{0});
  std::rotate(pattern.begin(), first_coarse, pattern.end());
  return pattern;
}

SampleSchedule make_schedule(const ScheduleSpec& spec, Index levels, Index H_total,
                             Index burn_in) {
  if (levels < 1) throw ConfigError("a schedule needs at least one level");
  if (burn_in < 0 || H_total <= burn_in) throw ConfigError("schedule needs H_total > burn_in >= 0");
  if (spec.kind != ScheduleKind::consecutive && spec.chunk < 1)
    throw ConfigError("cycle schedules need a chunk size >= 1");

  const Index kept = H_total - burn_in;
  if (spec.kind == ScheduleKind::consecutive) {
    std::vector<Index> totals(levels, kept / levels);
    for (Index l = 0; l < kept % levels; ++l) ++totals[l];
    return make_schedule_from_totals(std::move(totals), burn_in);
  }

  SampleSchedule schedule;
  schedule.burn_in = burn_in;
  schedule.totals.assign(levels, 0);
  if (burn_in > 0) schedule.visits.push_back({0, burn_in, true});
  const std::vector<Index> pattern = cycle_pattern(spec.kind, levels);
  Index remaining = kept;
  for (std::size_t i = 0; remaining > 0; ++i) {
    const Index level = pattern[i % pattern.size()];
    const Index count = std::min(spec.chunk, remaining);
    schedule.visits.push_back({level, count, false});
    schedule.totals[level] += count;
    remaining -= count;
  }
  return schedule;
}

SampleSchedule make_schedule_from_totals(std::vector<Index> totals, Index burn_in) {
  if (totals.empty()) throw ConfigError("a schedule needs at least one level");
  if (burn_in < 0) throw ConfigError("burn-in must be non-negative");
  SampleSchedule schedule;
  schedule.burn_in = burn_in;
  if (burn_in > 0) schedule.visits.push_back({0, burn_in, true});
  for (std::size_t l = 0; l < totals.size(); ++l) {
    if (totals[l] < 0) throw ConfigError("per-level sample counts must be non-negative");
    if (totals[l] > 0) schedule.visits.push_back({static_cast<Index>(l), totals[l], false});
  }
  schedule.totals = std::move(totals);
  return schedule;
}

LevelCost level_costs(const LevelHierarchy& hierarchy) {
  LevelCost costs;
  for (Index l = 0; l < hierarchy.levels(); ++l)
    costs.nnz.push_back(std::max<std::uint64_t>(1, hierarchy.matrix(l).nnz()));
  return costs;
}

std::vector<Index> allocate_cost(const LevelCost& costs, Index H_total) {
  using boost::multiprecision::cpp_int;
  if (costs.nnz.empty()) throw ConfigError("allocate_cost: no levels");
  if (H_total < 0) throw ConfigError("allocate_cost: negative sample budget");
  for (auto c : costs.nnz)
    if (c == 0) throw ConfigError("allocate_cost: level costs must be positive");

  // (1/C_l) / sum_k (1/C_k) = prod_{k != l} C_k / sum_k prod_{j != k} C_j
  const std::size_t n = costs.nnz.size();
  std::vector<cpp_int> others(n, cpp_int(1));
  for (std::size_t l = 0; l < n; ++l)
    for (std::size_t k = 0; k < n; ++k)
      if (k != l) others[l] *= costs.nnz[k];
  cpp_int denominator = 0;
  for (const auto& o : others) denominator += o;

  std::vector<Index> H(n);
  for (std::size_t l = 0; l < n; ++l)
    H[l] = static_cast<Index>(cpp_int(others[l] * H_total / denominator));
  return H;
}

std::vector<Index> allocate_variance(const LevelCost& costs, Index H_total) {
  const std::size_t n = costs.nnz.size();
  if (n == 0 || costs.variance.size() != n)
    throw ConfigError("allocate_variance: need one variance and one cost per level");
  if (H_total < 0) throw ConfigError("allocate_variance: negative sample budget");
  std::vector<long double> weight(n);
  long double total = 0.0L;
  for (std::size_t l = 0; l < n; ++l) {
    if (costs.nnz[l] == 0) throw ConfigError("allocate_variance: level costs must be positive");
    if (!(costs.variance[l] >= 0.0)) throw ConfigError("allocate_variance: negative variance");
    weight[l] = std::sqrt(static_cast<long double>(costs.variance[l]) /
                          static_cast<long double>(costs.nnz[l]));
    total += weight[l];
  }
  if (total == 0.0L) throw ConfigError("allocate_variance: zero variance on every level");

  std::vector<Index> H(n);
  for (std::size_t l = 0; l < n; ++l) {
    const long double x = weight[l] / total * static_cast<long double>(H_total);
    long double whole = std::floor(x);
    // Round-off can leave an exact integer a hair below itself.
    if (whole + 1.0L - x <= 1e-9L * std::max(1.0L, x)) whole += 1.0L;
    H[l] = static_cast<Index>(whole);
  }
  return H;
}

}  // namespace mlgibbs
