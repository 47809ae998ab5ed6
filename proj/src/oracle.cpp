#include "equiroute/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "equiroute/rng.hpp"

namespace equiroute {

namespace {

void check_query(const RoutingTable& table, std::size_t n) {
  if (n >= table.num_queries()) {
    throw ValidationError("query index " + std::to_string(n) + " out of range");
  }
}

}  // namespace

FeasibleSet feasible_set(std::span<const double> costs, double budget) {
  if (costs.empty()) throw ValidationError("feasible_set: empty cost row");
  if (!(budget > 0.0)) throw ValidationError("feasible_set: budget must be positive");
  FeasibleSet fs;
  fs.budget = budget;
  for (std::size_t j = 0; j < costs.size(); ++j) {
    if (costs[j] <= budget) fs.members.push_back(j);
  }
  if (fs.members.empty()) {
    const auto cheapest = std::min_element(costs.begin(), costs.end());
    fs.members.push_back(static_cast<std::size_t>(cheapest - costs.begin()));
    fs.clamped = true;
  }
  return fs;
}

FeasibleSet feasible_set(const RoutingTable& table, std::size_t n, double budget) {
  check_query(table, n);
  auto fs = feasible_set(table.cost.row(n), budget);
  fs.query = n;
  return fs;
}

std::size_t lexicographic_best(std::span<const double> value, std::span<const double> cost,
                               std::span<const std::size_t> members) {
  if (members.empty()) throw ValidationError("lexicographic_best: no candidates");
  std::size_t best = members.front();
  for (std::size_t j : members.subspan(1)) {
    if (value[j] > value[best] || (value[j] == value[best] && cost[j] < cost[best])) best = j;
  }
  return best;
}

std::size_t oracle_select(const RoutingTable& table, std::size_t n, double budget) {
  const auto fs = feasible_set(table, n, budget);
  return lexicographic_best(table.perf.row(n), table.cost.row(n), fs.members);
}

std::optional<double> margin(const RoutingTable& table, std::size_t n, double budget) {
  const auto fs = feasible_set(table, n, budget);
  if (fs.members.size() < 2) return std::nullopt;
  const auto perf = table.perf.row(n);
  double first = -INFINITY;
  double second = -INFINITY;
  for (std::size_t j : fs.members) {
    const double a = perf[j];
    if (a > first) {
      second = first;
      first = a;
    } else if (a > second) {
      second = a;
    }
  }
  return first - second;
}

MarginStats margin_stats(const RoutingTable& table, double budget, std::span<const double> thresholds) {
  const auto all = all_indices(table.num_queries());
  return margin_stats(table, budget, thresholds, all);
}

MarginStats margin_stats(const RoutingTable& table, double budget, std::span<const double> thresholds,
                         std::span<const std::size_t> queries) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ValidationError("margin_stats: thresholds must be sorted ascending");
  }
  MarginStats stats;
  for (std::size_t n : queries) {
    if (auto m = margin(table, n, budget)) stats.margins.push_back(*m);
  }
  if (stats.margins.empty()) throw ValidationError("no query has >=2 feasible models");
  const auto total = static_cast<double>(stats.margins.size());
  std::vector<double> sorted = stats.margins;
  std::sort(sorted.begin(), sorted.end());
  stats.tie_rate = static_cast<double>(std::count(sorted.begin(), sorted.end(), 0.0)) / total;
  for (double eps : thresholds) {
    const auto upto = std::upper_bound(sorted.begin(), sorted.end(), eps) - sorted.begin();
    stats.cdf_at.emplace_back(eps, static_cast<double>(upto) / total);
  }
  return stats;
}

RoutingTable inject_noise(const RoutingTable& table, const NoiseConfig& cfg) {
  if (!(cfg.sigma >= 0.0) || !std::isfinite(cfg.sigma)) {
    throw ValidationError("inject_noise: sigma must be >= 0");
  }
  RoutingTable noisy = table;
  if (cfg.sigma == 0.0) return noisy;
  Rng rng(cfg.seed);
  for (double& a : noisy.perf.values()) a += cfg.sigma * rng.gaussian();
  return noisy;
}

SelectionFrequencies mc_selection_frequencies(std::span<const double> means, double sigma,
                                              std::size_t trials, std::uint64_t seed) {
  if (means.empty()) throw ValidationError("mc_selection_frequencies: empty mean vector");
  if (trials < 1) throw ValidationError("mc_selection_frequencies: trials must be >= 1");
  if (!(sigma >= 0.0)) throw ValidationError("mc_selection_frequencies: sigma must be >= 0");

  Rng rng(seed);
  std::vector<std::size_t> wins(means.size(), 0);
  for (std::size_t t = 0; t < trials; ++t) {
    std::size_t best = 0;
    double best_value = -INFINITY;
    for (std::size_t j = 0; j < means.size(); ++j) {
      const double v = means[j] + sigma * rng.gaussian();
      if (v > best_value) {
        best_value = v;
        best = j;
      }
    }
    ++wins[best];
  }
  SelectionFrequencies out;
  out.trials = trials;
  const auto total = static_cast<double>(trials);
  for (std::size_t w : wins) {
    const double p = static_cast<double>(w) / total;
    out.frequency.push_back(p);
    out.standard_error.push_back(std::sqrt(p * (1.0 - p) / total));
  }
  return out;
}

}  // namespace equiroute
