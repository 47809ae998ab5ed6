#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "equiroute/dataset.hpp"
#include "equiroute/regressor.hpp"
#include "equiroute/router.hpp"

namespace equiroute {

inline constexpr std::size_t kDefaultGridPoints = 100;

/// Evenly spaced budgets from the smallest per-query minimum cost to the largest
/// single cost over `queries`, both endpoints included.
std::vector<double> budget_grid(const RoutingTable& table, std::span<const std::size_t> queries,
                                std::size_t n_points = kDefaultGridPoints);

struct CurvePoint {
  double budget = 0.0;
  double mean_cost = 0.0;
  double mean_perf = 0.0;
  std::vector<std::size_t> calls;
  std::size_t clamped = 0;
};

/// Points sorted by mean cost (budget order breaks ties).
struct SweepCurve {
  std::vector<CurvePoint> points;
  std::size_t num_queries = 0;
};

/// Per-query selections at one budget given precomputed scores and filter costs
/// (rows aligned with the query list).
std::vector<Selection> select_all(const Matrix& scores, const Matrix& filter_costs, double budget);

/// Realized performance and cost always come from the table's true values.
SweepCurve sweep(const Matrix& scores, const Matrix& filter_costs, const RoutingTable& table,
                 std::span<const std::size_t> queries, std::span<const double> grid);
SweepCurve sweep(const Router& router, const RoutingTable& table, std::span<const std::size_t> queries,
                 std::span<const double> grid, CostSource source, const CostPredictor* predictor);

struct CostPerf {
  double x = 0.0;
  double y = 0.0;
};

/// Curve points with equal mean cost merged, keeping the best performance.
std::vector<CostPerf> merged_points(const SweepCurve& curve);

/// Trapezoidal area normalized by the cost range. `points` must be sorted by x.
double nauc(std::span<const CostPerf> points);
double nauc(const SweepCurve& curve);

struct PeakScore {
  double score = 0.0;
  double cost = 0.0;
};

PeakScore peak_score(std::span<const CostPerf> points);
PeakScore peak_score(const SweepCurve& curve);

/// The single model with the best mean performance over `queries`.
struct StandaloneBest {
  double a_max = 0.0;
  double x_max = 0.0;
  std::size_t j_max = 0;
};

StandaloneBest standalone_best(const RoutingTable& table, std::span<const std::size_t> queries);

struct QncResult {
  std::optional<double> cost;
  std::optional<double> relative;
  bool achieved() const { return cost.has_value(); }
};

QncResult qnc(std::span<const CostPerf> points, double a_max, double x_max);
QncResult qnc(const SweepCurve& curve, const RoutingTable& table, std::span<const std::size_t> queries);

struct CollapseRecord {
  std::size_t n = 0;
  std::size_t selected = 0;
  double a_selected = 0.0;
  double a_star = 0.0;
  std::size_t cheaper = 0;       // X_n
  std::size_t cheaper_good = 0;  // K_n
  double score = 0.0;            // s_n
};

struct CollapseReport {
  std::vector<CollapseRecord> records;
  double rci = 0.0;
  std::vector<double> call_rates;
};

/// `selections[i]` is the model chosen for `queries[i]`.
CollapseReport rci(const RoutingTable& table, std::span<const std::size_t> selections,
                   std::span<const std::size_t> queries);

/// One row per curve point, one column per model; rows sum to 1.
Matrix call_rate_curve(const SweepCurve& curve);

struct MetricsSummary {
  std::optional<double> nauc;
  double peak_score = 0.0;
  double peak_cost = 0.0;
  QncResult qnc;
  double rci = 0.0;
  StandaloneBest standalone;
};

MetricsSummary summarize(const SweepCurve& curve, const CollapseReport& collapse, const RoutingTable& table,
                         std::span<const std::size_t> queries);

struct Evaluation {
  std::vector<double> grid;
  SweepCurve curve;
  CollapseReport collapse;
  MetricsSummary metrics;
};

/// Sweep plus collapse analysis at the unconstrained budget.
Evaluation evaluate_router(const Router& router, const RoutingTable& table, std::span<const std::size_t> queries,
                           std::size_t grid_points, CostSource source, const CostPredictor* predictor);

struct NoiseRow {
  double sigma = 0.0;
  double accuracy = 0.0;
  double strongest_share = 0.0;
};

/// Noisy-oracle routing at one budget for each sigma. All sigmas share one
/// standard-normal draw, scaled by sigma. The strongest model is the one with
/// the highest mean cost over `queries`.
std::vector<NoiseRow> noise_sensitivity(const RoutingTable& table, std::span<const std::size_t> queries,
                                        std::span<const double> sigmas, double budget, std::uint64_t seed);

std::size_t most_expensive_model(const RoutingTable& table, std::span<const std::size_t> queries);

using RouterTrainer = std::function<std::unique_ptr<Router>(const RoutingTable&, const SplitIndices&)>;

/// Trains on every query and evaluates on the same queries.
Evaluation training_set_eval(const RouterTrainer& trainer, const RoutingTable& table, std::size_t grid_points,
                             CostSource source, const RegressorHyper& cost_hyper);

}  // namespace equiroute
