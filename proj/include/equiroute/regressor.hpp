#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "equiroute/checkpoint.hpp"
#include "equiroute/dataset.hpp"
#include "equiroute/equirouter.hpp"
#include "equiroute/nn.hpp"

namespace equiroute {

struct RegressorHyper {
  std::size_t hidden = 128;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 2048;
  std::uint64_t seed = 0;

  bool operator==(const RegressorHyper&) const = default;
};

/// in -> hidden (relu) -> out.
struct TwoLayerRegressor {
  DenseLayer hidden;
  DenseLayer output;

  static TwoLayerRegressor init(std::size_t in, std::size_t out, const RegressorHyper& hyper);
  Matrix predict(const Matrix& x) const;
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  bool operator==(const TwoLayerRegressor&) const = default;
};

struct RegressorFit {
  TwoLayerRegressor net;
  std::vector<TrainLogRow> log;
  std::size_t best_epoch = 0;
};

/// Minibatch Adam on mean squared error over all outputs. Rows of `inputs` and
/// `targets` are indexed by `train` and `valid`; keeps the epoch with the lowest
/// validation MSE (training MSE when `valid` is empty).
/// `start` replaces the default initialization when given.
RegressorFit fit_regressor(const Matrix& inputs, const Matrix& targets, std::span<const std::size_t> train,
                           std::span<const std::size_t> valid, const RegressorHyper& hyper,
                           const TwoLayerRegressor* start = nullptr);

/// Replaces the output layer with the least-squares fit of `targets` on the
/// hidden features of the `rows`. Feature columns that are numerically
/// dependent on earlier ones get zero weight.
void refit_output_layer(TwoLayerRegressor& net, const Matrix& inputs, const Matrix& targets,
                        std::span<const std::size_t> rows);

/// Mean squared error of `net` over the given rows.
double regressor_mse(const TwoLayerRegressor& net, const Matrix& inputs, const Matrix& targets,
                     std::span<const std::size_t> rows);

struct CostPredictorParams {
  RegressorHyper hyper;
  TwoLayerRegressor net;
  /// Per-model standardization from the training split.
  std::vector<double> target_mean;
  std::vector<double> target_std;

  bool operator==(const CostPredictorParams&) const = default;
};

/// Predicts every model's cost for a query from its embedding.
class CostPredictor {
 public:
  explicit CostPredictor(CostPredictorParams params);

  std::size_t num_models() const { return params_.target_mean.size(); }
  std::vector<double> predict(std::span<const double> query) const;
  /// One row of predicted costs per entry of `queries`.
  Matrix predict(const RoutingTable& table, std::span<const std::size_t> queries) const;

  const CostPredictorParams& params() const { return params_; }
  Checkpoint to_checkpoint() const;
  static CostPredictor from_checkpoint(const Checkpoint& ckpt);

 private:
  Matrix predict_matrix_rows(const Matrix& x) const;

  CostPredictorParams params_;
};

struct CostPredictorFit {
  CostPredictor predictor;
  std::vector<TrainLogRow> log;  // losses in standardized units
  std::size_t best_epoch = 0;
};

/// Fits standardized costs; predictions are de-standardized and clamped to the
/// smallest positive normal double. Hidden units start in +w/-w pairs, so any
/// affine function of the embedding is reachable by the output layer alone,
/// and training starts from the least-squares output layer.
CostPredictorFit train_cost_predictor(const RoutingTable& table, const SplitIndices& split,
                                      const RegressorHyper& hyper);

}  // namespace equiroute
