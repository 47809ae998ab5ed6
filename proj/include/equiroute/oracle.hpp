#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "equiroute/dataset.hpp"

namespace equiroute {

/// Models whose cost fits the budget. When none fit, the cheapest model (lowest
/// index on cost ties) is force-included and `clamped` is set.
struct FeasibleSet {
  std::size_t query = 0;
  double budget = 0.0;
  std::vector<std::size_t> members;
  bool clamped = false;
};

FeasibleSet feasible_set(std::span<const double> costs, double budget);
FeasibleSet feasible_set(const RoutingTable& table, std::size_t n, double budget);

/// Highest value of `value` among `members`; ties go to the lower `cost`, then
/// the lower index.
std::size_t lexicographic_best(std::span<const double> value, std::span<const double> cost,
                               std::span<const std::size_t> members);

/// Ground-truth routing rule: best feasible performance, cheapest among equals.
std::size_t oracle_select(const RoutingTable& table, std::size_t n, double budget);

/// Best minus second-best feasible performance; empty when fewer than two models fit.
std::optional<double> margin(const RoutingTable& table, std::size_t n, double budget);

struct MarginStats {
  std::vector<double> margins;
  double tie_rate = 0.0;
  /// (threshold, Pr(margin <= threshold)), thresholds ascending.
  std::vector<std::pair<double, double>> cdf_at;
};

MarginStats margin_stats(const RoutingTable& table, double budget, std::span<const double> thresholds);
MarginStats margin_stats(const RoutingTable& table, double budget, std::span<const double> thresholds,
                         std::span<const std::size_t> queries);

struct NoiseConfig {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Copy of the table with i.i.d. N(0, sigma^2) added to every performance entry,
/// drawn row-major from Rng(seed).
RoutingTable inject_noise(const RoutingTable& table, const NoiseConfig& cfg);

struct SelectionFrequencies {
  std::vector<double> frequency;
  std::vector<double> standard_error;
  std::size_t trials = 0;
};

/// Monte-Carlo frequency with which each entry wins argmax(means + noise), noise
/// i.i.d. N(0, sigma^2), ties to the lowest index.
SelectionFrequencies mc_selection_frequencies(std::span<const double> means, double sigma,
                                              std::size_t trials, std::uint64_t seed);

}  // namespace equiroute
