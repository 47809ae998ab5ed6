#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "equiroute/checkpoint.hpp"
#include "equiroute/dataset.hpp"

namespace equiroute {

class CostPredictor;

enum class CostSource { predicted, oracle };

CostSource parse_cost_source(const std::string& text);
std::string to_string(CostSource source);

/// Anything that scores every model of the pool for a query; higher is better.
class Router {
 public:
  virtual ~Router() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t num_models() const = 0;
  virtual std::vector<double> scores(const RoutingTable& table, std::size_t n) const = 0;

  /// One row of scores per entry of `queries`.
  virtual Matrix score_matrix(const RoutingTable& table, std::span<const std::size_t> queries) const;

  virtual Checkpoint to_checkpoint() const;
};

/// Scores are the true performance row. With true costs this reproduces the
/// ground-truth routing rule exactly.
class OracleRouter final : public Router {
 public:
  explicit OracleRouter(std::size_t num_models) : num_models_(num_models) {}
  std::string kind() const override { return "oracle"; }
  std::size_t num_models() const override { return num_models_; }
  std::vector<double> scores(const RoutingTable& table, std::size_t n) const override;
  Matrix score_matrix(const RoutingTable& table, std::span<const std::size_t> queries) const override;

 private:
  std::size_t num_models_;
};

struct Selection {
  std::size_t model = 0;
  bool clamped = false;
};

/// Highest score among models with cost <= budget; ties go to the lower cost, then
/// the lower index. With no affordable model the cheapest one is chosen and
/// flagged as clamped.
Selection select_model(std::span<const double> scores, std::span<const double> costs, double budget);

struct RouterDecision {
  std::size_t query = 0;
  double budget = 0.0;
  std::size_t chosen = 0;
  std::vector<double> scores;
  /// Costs used for the feasibility filter (true costs in oracle-cost mode).
  std::vector<double> predicted_costs;
  bool feasible_clamped = false;
};

RouterDecision route(const Router& router, const RoutingTable& table, std::size_t n, double budget,
                     CostSource source, const CostPredictor* predictor);

/// Costs used to filter feasibility, one row per entry of `queries`.
Matrix filter_costs(const RoutingTable& table, std::span<const std::size_t> queries, CostSource source,
                    const CostPredictor* predictor);

/// Rebuilds a trained router from its checkpoint. kNN checkpoints reference rows
/// of `table`, which must be the table they were trained on.
std::unique_ptr<Router> router_from_checkpoint(const Checkpoint& ckpt, const RoutingTable& table);

}  // namespace equiroute
