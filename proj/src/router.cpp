#include "equiroute/router.hpp"

#include <limits>

#include "equiroute/baselines.hpp"
#include "equiroute/equirouter.hpp"
#include "equiroute/regressor.hpp"

namespace equiroute {

CostSource parse_cost_source(const std::string& text) {
  if (text == "predicted") return CostSource::predicted;
  if (text == "oracle") return CostSource::oracle;
  throw ValidationError("unknown cost source '" + text + "' (expected predicted or oracle)");
}

std::string to_string(CostSource source) { return source == CostSource::predicted ? "predicted" : "oracle"; }

Matrix Router::score_matrix(const RoutingTable& table, std::span<const std::size_t> queries) const {
  Matrix out(queries.size(), num_models());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto s = scores(table, queries[i]);
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

Checkpoint Router::to_checkpoint() const {
  throw ValidationError("router kind '" + kind() + "' has no checkpoint");
}

std::vector<double> OracleRouter::scores(const RoutingTable& table, std::size_t n) const {
  const auto row = table.perf.row(n);
  return {row.begin(), row.end()};
}

Matrix OracleRouter::score_matrix(const RoutingTable& table, std::span<const std::size_t> queries) const {
  return table.perf.gather_rows(queries);
}

Selection select_model(std::span<const double> scores, std::span<const double> costs, double budget) {
  if (scores.size() != costs.size() || scores.empty()) throw ValidationError("select_model: size mismatch");
  Selection best;
  bool found = false;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!(costs[j] <= budget)) continue;
    if (!found || scores[j] > scores[best.model] ||
        (scores[j] == scores[best.model] && costs[j] < costs[best.model])) {
      best.model = j;
      found = true;
    }
  }
  if (found) return best;
  best.clamped = true;
  best.model = 0;
  for (std::size_t j = 1; j < costs.size(); ++j) {
    if (costs[j] < costs[best.model]) best.model = j;
  }
  return best;
}

Matrix filter_costs(const RoutingTable& table, std::span<const std::size_t> queries, CostSource source,
                    const CostPredictor* predictor) {
  if (source == CostSource::oracle) return table.cost.gather_rows(queries);
  if (predictor == nullptr) throw ValidationError("predicted cost source requires a cost predictor");
  if (predictor->num_models() != table.num_models()) throw ValidationError("cost predictor model count mismatch");
  return predictor->predict(table, queries);
}

RouterDecision route(const Router& router, const RoutingTable& table, std::size_t n, double budget,
                     CostSource source, const CostPredictor* predictor) {
  if (n >= table.num_queries()) throw ValidationError("route: query index out of range");
  if (router.num_models() != table.num_models()) throw ValidationError("route: router model count mismatch");
  RouterDecision d;
  d.query = n;
  d.budget = budget;
  d.scores = router.scores(table, n);
  const std::size_t one[] = {n};
  const Matrix c = filter_costs(table, one, source, predictor);
  d.predicted_costs.assign(c.values().begin(), c.values().end());
  const Selection s = select_model(d.scores, d.predicted_costs, budget);
  d.chosen = s.model;
  d.feasible_clamped = s.clamped;
  return d;
}

std::unique_ptr<Router> router_from_checkpoint(const Checkpoint& ckpt, const RoutingTable& table) {
  std::unique_ptr<Router> r;
  if (ckpt.kind == "equirouter" || ckpt.kind == "equirouter_nojoint" || ckpt.kind == "mse") {
    r = std::make_unique<EquiRouter>(EquiRouter::from_checkpoint(ckpt));
  } else if (ckpt.kind == "knn") {
    r = std::make_unique<KnnRouter>(KnnRouter::from_checkpoint(ckpt, table));
  } else if (ckpt.kind == "mlp") {
    r = std::make_unique<MlpRouter>(MlpRouter::from_checkpoint(ckpt));
  } else {
    throw ValidationError("checkpoint kind '" + ckpt.kind + "' is not a router");
  }
  if (r->num_models() != table.num_models()) throw ValidationError("checkpoint model count does not match table");
  return r;
}

}  // namespace equiroute
