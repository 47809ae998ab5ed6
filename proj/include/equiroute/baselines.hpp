#pragma once

#include <cstdint>
#include <vector>

#include "equiroute/regressor.hpp"
#include "equiroute/router.hpp"

namespace equiroute {

/// Predicts performance as the mean perf row of the k nearest training queries
/// (Euclidean distance on embeddings, distance ties to the lower query index).
class KnnRouter final : public Router {
 public:
  KnnRouter(const RoutingTable& table, std::vector<std::size_t> train, std::size_t k, std::uint64_t split_seed);

  std::string kind() const override { return "knn"; }
  std::size_t num_models() const override { return perf_.cols(); }
  std::vector<double> scores(const RoutingTable& table, std::size_t n) const override;
  std::vector<double> predict(std::span<const double> query) const;
  /// Stores k, the split seed and the training row indices; the rows themselves
  /// come from the table at load time.
  Checkpoint to_checkpoint() const override;
  static KnnRouter from_checkpoint(const Checkpoint& ckpt, const RoutingTable& table);

  std::size_t k() const { return k_; }

 private:
  std::vector<std::size_t> train_;
  Matrix embeddings_;
  Matrix perf_;
  std::size_t k_;
  std::uint64_t split_seed_;
};

inline constexpr std::size_t kDefaultKnnNeighbors = 50;

KnnRouter train_knn(const RoutingTable& table, const SplitIndices& split, std::size_t k = kDefaultKnnNeighbors);

/// Two-layer MLP regressing every model's performance from the embedding.
class MlpRouter final : public Router {
 public:
  explicit MlpRouter(TwoLayerRegressor net, RegressorHyper hyper);

  std::string kind() const override { return "mlp"; }
  std::size_t num_models() const override { return net_.output.out_dim(); }
  std::vector<double> scores(const RoutingTable& table, std::size_t n) const override;
  Matrix score_matrix(const RoutingTable& table, std::span<const std::size_t> queries) const override;
  Checkpoint to_checkpoint() const override;
  static MlpRouter from_checkpoint(const Checkpoint& ckpt);

  const TwoLayerRegressor& net() const { return net_; }

 private:
  TwoLayerRegressor net_;
  RegressorHyper hyper_;
};

struct MlpRouterFit {
  MlpRouter router;
  std::vector<TrainLogRow> log;
  std::size_t best_epoch = 0;
};

MlpRouterFit train_mlp_router(const RoutingTable& table, const SplitIndices& split, const RegressorHyper& hyper);

}  // namespace equiroute
