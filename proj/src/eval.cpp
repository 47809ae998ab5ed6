#include "equiroute/eval.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "equiroute/oracle.hpp"

namespace equiroute {

namespace {

void require_queries(const RoutingTable& table, std::span<const std::size_t> queries, const char* what) {
  if (queries.empty()) throw ValidationError(std::string(what) + ": empty query set");
  for (std::size_t n : queries) {
    if (n >= table.num_queries()) throw ValidationError(std::string(what) + ": query index out of range");
  }
}

}  // namespace

std::vector<double> budget_grid(const RoutingTable& table, std::span<const std::size_t> queries,
                                std::size_t n_points) {
  require_queries(table, queries, "budget_grid");
  if (n_points < 2) throw ValidationError("budget_grid: need at least 2 points");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t n : queries) {
    const auto row = table.cost.row(n);
    lo = std::min(lo, *std::min_element(row.begin(), row.end()));
    hi = std::max(hi, *std::max_element(row.begin(), row.end()));
  }
  std::vector<double> grid(n_points);
  const double step = (hi - lo) / static_cast<double>(n_points - 1);
  for (std::size_t t = 0; t < n_points; ++t) grid[t] = lo + step * static_cast<double>(t);
  // Pin the top endpoint so the last budget admits every model.
  grid.back() = hi;
  return grid;
}

std::vector<Selection> select_all(const Matrix& scores, const Matrix& filter_costs, double budget) {
  if (scores.rows() != filter_costs.rows() || scores.cols() != filter_costs.cols()) {
    throw ValidationError("select_all: scores " + shape_string(scores) + " vs costs " + shape_string(filter_costs));
  }
  std::vector<Selection> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) out[i] = select_model(scores.row(i), filter_costs.row(i), budget);
  return out;
}

SweepCurve sweep(const Matrix& scores, const Matrix& filter_costs, const RoutingTable& table,
                 std::span<const std::size_t> queries, std::span<const double> grid) {
  require_queries(table, queries, "sweep");
  if (grid.empty()) throw ValidationError("sweep: empty budget grid");
  if (scores.rows() != queries.size()) throw ValidationError("sweep: score rows do not match queries");
  if (!scores.all_finite()) throw NumericsError("sweep: router produced non-finite scores");
  const std::size_t k = table.num_models();
  const auto count = static_cast<double>(queries.size());

  SweepCurve curve;
  curve.num_queries = queries.size();
  curve.points.reserve(grid.size());
  for (double budget : grid) {
    const auto sel = select_all(scores, filter_costs, budget);
    CurvePoint p;
    p.budget = budget;
    p.calls.assign(k, 0);
    double cost = 0.0;
    double perf = 0.0;
    for (std::size_t i = 0; i < sel.size(); ++i) {
      const std::size_t n = queries[i];
      cost += table.cost(n, sel[i].model);
      perf += table.perf(n, sel[i].model);
      ++p.calls[sel[i].model];
      if (sel[i].clamped) ++p.clamped;
    }
    p.mean_cost = cost / count;
    p.mean_perf = perf / count;
    curve.points.push_back(std::move(p));
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.mean_cost < b.mean_cost; });
  return curve;
}

SweepCurve sweep(const Router& router, const RoutingTable& table, std::span<const std::size_t> queries,
                 std::span<const double> grid, CostSource source, const CostPredictor* predictor) {
  require_queries(table, queries, "sweep");
  if (router.num_models() != table.num_models()) throw ValidationError("sweep: router model count mismatch");
  const Matrix scores = router.score_matrix(table, queries);
  const Matrix costs = filter_costs(table, queries, source, predictor);
  return sweep(scores, costs, table, queries, grid);
}

std::vector<CostPerf> merged_points(const SweepCurve& curve) {
  std::vector<CostPerf> out;
  for (const auto& p : curve.points) {
    if (!out.empty() && out.back().x == p.mean_cost) {
      out.back().y = std::max(out.back().y, p.mean_perf);
    } else {
      out.push_back({p.mean_cost, p.mean_perf});
    }
  }
  return out;
}

double nauc(std::span<const CostPerf> points) {
  if (points.size() < 2 || !(points.back().x > points.front().x)) {
    throw ValidationError("degenerate cost range");
  }
  double area = 0.0;
  for (std::size_t t = 0; t + 1 < points.size(); ++t) {
    area += 0.5 * (points[t].y + points[t + 1].y) * (points[t + 1].x - points[t].x);
  }
  return area / (points.back().x - points.front().x);
}

double nauc(const SweepCurve& curve) { return nauc(merged_points(curve)); }

PeakScore peak_score(std::span<const CostPerf> points) {
  if (points.empty()) throw ValidationError("peak_score: empty curve");
  PeakScore best{points[0].y, points[0].x};
  for (const auto& p : points) {
    if (p.y > best.score || (p.y == best.score && p.x < best.cost)) best = {p.y, p.x};
  }
  return best;
}

PeakScore peak_score(const SweepCurve& curve) { return peak_score(merged_points(curve)); }

StandaloneBest standalone_best(const RoutingTable& table, std::span<const std::size_t> queries) {
  require_queries(table, queries, "standalone_best");
  const std::size_t k = table.num_models();
  std::vector<double> perf(k, 0.0);
  std::vector<double> cost(k, 0.0);
  for (std::size_t n : queries) {
    for (std::size_t j = 0; j < k; ++j) {
      perf[j] += table.perf(n, j);
      cost[j] += table.cost(n, j);
    }
  }
  StandaloneBest best;
  for (std::size_t j = 0; j < k; ++j) {
    if (j == 0 || perf[j] > perf[best.j_max]) best.j_max = j;
  }
  const auto count = static_cast<double>(queries.size());
  best.a_max = perf[best.j_max] / count;
  best.x_max = cost[best.j_max] / count;
  return best;
}

QncResult qnc(std::span<const CostPerf> points, double a_max, double x_max) {
  QncResult r;
  for (const auto& p : points) {
    if (p.y >= a_max && (!r.cost || p.x < *r.cost)) r.cost = p.x;
  }
  if (r.cost) r.relative = *r.cost / x_max;
  return r;
}

QncResult qnc(const SweepCurve& curve, const RoutingTable& table, std::span<const std::size_t> queries) {
  const auto best = standalone_best(table, queries);
  return qnc(merged_points(curve), best.a_max, best.x_max);
}

CollapseReport rci(const RoutingTable& table, std::span<const std::size_t> selections,
                   std::span<const std::size_t> queries) {
  require_queries(table, queries, "rci");
  if (selections.size() != queries.size()) throw ValidationError("rci: one selection per query required");
  const std::size_t k = table.num_models();
  CollapseReport report;
  report.call_rates.assign(k, 0.0);
  report.records.reserve(queries.size());
  double total = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::size_t n = queries[i];
    const std::size_t m = selections[i];
    if (m >= k) throw ValidationError("rci: selection index out of range at query " + std::to_string(n));
    const auto a = table.perf.row(n);
    const auto c = table.cost.row(n);
    CollapseRecord rec;
    rec.n = n;
    rec.selected = m;
    rec.a_selected = a[m];
    rec.a_star = *std::max_element(a.begin(), a.end());
    for (std::size_t j = 0; j < k; ++j) {
      if (c[j] < c[m]) {
        ++rec.cheaper;
        if (a[j] >= a[m]) ++rec.cheaper_good;
      }
    }
    if (rec.a_selected < rec.a_star) {
      rec.score = 1.0;
    } else if (rec.cheaper > 0) {
      rec.score = static_cast<double>(rec.cheaper_good) / static_cast<double>(rec.cheaper);
    }
    total += rec.score;
    report.call_rates[m] += 1.0;
    report.records.push_back(rec);
  }
  const auto count = static_cast<double>(queries.size());
  report.rci = total / count;
  for (double& r : report.call_rates) r /= count;
  return report;
}

Matrix call_rate_curve(const SweepCurve& curve) {
  if (curve.points.empty()) return {};
  const std::size_t k = curve.points.front().calls.size();
  Matrix shares(curve.points.size(), k);
  for (std::size_t t = 0; t < curve.points.size(); ++t) {
    const auto& calls = curve.points[t].calls;
    const double total = static_cast<double>(std::accumulate(calls.begin(), calls.end(), std::size_t{0}));
    for (std::size_t j = 0; j < k; ++j) shares(t, j) = total > 0 ? static_cast<double>(calls[j]) / total : 0.0;
  }
  return shares;
}

MetricsSummary summarize(const SweepCurve& curve, const CollapseReport& collapse, const RoutingTable& table,
                         std::span<const std::size_t> queries) {
  MetricsSummary s;
  const auto pts = merged_points(curve);
  if (pts.size() >= 2 && pts.back().x > pts.front().x) s.nauc = nauc(pts);
  const auto peak = peak_score(pts);
  s.peak_score = peak.score;
  s.peak_cost = peak.cost;
  s.standalone = standalone_best(table, queries);
  s.qnc = qnc(pts, s.standalone.a_max, s.standalone.x_max);
  s.rci = collapse.rci;
  return s;
}

Evaluation evaluate_router(const Router& router, const RoutingTable& table, std::span<const std::size_t> queries,
                           std::size_t grid_points, CostSource source, const CostPredictor* predictor) {
  require_queries(table, queries, "evaluate_router");
  if (router.num_models() != table.num_models()) throw ValidationError("evaluate: router model count mismatch");
  Evaluation ev;
  ev.grid = budget_grid(table, queries, grid_points);
  const Matrix scores = router.score_matrix(table, queries);
  const Matrix costs = filter_costs(table, queries, source, predictor);
  ev.curve = sweep(scores, costs, table, queries, ev.grid);

  const auto unconstrained = select_all(scores, costs, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen(unconstrained.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = unconstrained[i].model;
  ev.collapse = rci(table, chosen, queries);
  ev.metrics = summarize(ev.curve, ev.collapse, table, queries);
  return ev;
}

std::size_t most_expensive_model(const RoutingTable& table, std::span<const std::size_t> queries) {
  require_queries(table, queries, "most_expensive_model");
  std::vector<double> total(table.num_models(), 0.0);
  for (std::size_t n : queries) {
    for (std::size_t j = 0; j < total.size(); ++j) total[j] += table.cost(n, j);
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < total.size(); ++j) {
    if (total[j] > total[best]) best = j;
  }
  return best;
}

std::vector<NoiseRow> noise_sensitivity(const RoutingTable& table, std::span<const std::size_t> queries,
                                        std::span<const double> sigmas, double budget, std::uint64_t seed) {
  require_queries(table, queries, "noise_sensitivity");
  if (!(budget > 0.0)) throw ValidationError("noise_sensitivity: budget must be > 0");
  const std::size_t strongest = most_expensive_model(table, queries);
  const auto count = static_cast<double>(queries.size());
  std::vector<NoiseRow> rows;
  rows.reserve(sigmas.size());
  for (double sigma : sigmas) {
    const RoutingTable noisy = inject_noise(table, {sigma, seed});
    NoiseRow row;
    row.sigma = sigma;
    std::size_t strong_calls = 0;
    for (std::size_t n : queries) {
      const Selection s = select_model(noisy.perf.row(n), table.cost.row(n), budget);
      row.accuracy += table.perf(n, s.model);
      if (s.model == strongest) ++strong_calls;
    }
    row.accuracy /= count;
    row.strongest_share = static_cast<double>(strong_calls) / count;
    rows.push_back(row);
  }
  return rows;
}

Evaluation training_set_eval(const RouterTrainer& trainer, const RoutingTable& table, std::size_t grid_points,
                             CostSource source, const RegressorHyper& cost_hyper) {
  const SplitIndices all = full_split(table.num_queries());
  const auto router = trainer(table, all);
  std::optional<CostPredictor> predictor;
  if (source == CostSource::predicted) predictor = train_cost_predictor(table, all, cost_hyper).predictor;
  return evaluate_router(*router, table, all.train, grid_points, source, predictor ? &*predictor : nullptr);
}

}  // namespace equiroute
