#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "equiroute/dataset.hpp"
#include "equiroute/nn.hpp"
#include "equiroute/router.hpp"

namespace equiroute {

struct TrainLogRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct EquiRouterHyper {
  std::size_t query_dim = 0;    // d_q
  std::size_t model_dim = 64;   // d_m
  std::size_t hidden = 128;     // D
  std::size_t num_models = 0;   // K
  double weight_decay = 1e-4;
  double learning_rate = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 2048;
  std::uint64_t seed = 0;

  bool operator==(const EquiRouterHyper&) const = default;
};

/// Which head input the network builds from the modulated query z_j and the
/// projected model vector e_j.
enum class HeadInput {
  joint,       // [z_j, e_j, z_j * e_j, |z_j - e_j|]
  concat_only  // [z_j, e_j]
};

enum class TrainingObjective { ranking, mse };

struct EquiRouterParams {
  EquiRouterHyper hyper;
  HeadInput head_input = HeadInput::joint;
  Matrix model_embeddings;         // K x d_m
  std::vector<DenseLayer> trunk;   // d_q -> D -> D, relu
  DenseLayer film;                 // d_m -> 2D, rows [gamma; beta]
  DenseLayer model_proj;           // d_m -> D
  std::vector<DenseLayer> head;    // 4D (or 2D) -> D relu -> 1

  static EquiRouterParams init(const EquiRouterHyper& hyper, HeadInput head_input);
  EquiRouterParams zeros_like() const;

  std::size_t head_width() const;
  /// Fixed order: embeddings, trunk, film, model_proj, head (weights before biases).
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  bool operator==(const EquiRouterParams&) const = default;
};

std::vector<double> film_modulate(std::span<const double> z, std::span<const double> gamma,
                                  std::span<const double> beta);
std::vector<double> joint_feature(std::span<const double> z_mod, std::span<const double> e);

/// Scores of every model for one query embedding: one trunk pass, then per model
/// the modulation, projection and head.
std::vector<double> score_all(const EquiRouterParams& params, std::span<const double> query,
                              OpCounter* ops = nullptr);
/// Rows of `queries` are query embeddings; returns one score row per query.
Matrix score_batch(const EquiRouterParams& params, const Matrix& queries, OpCounter* ops = nullptr);

using PairList = std::vector<std::pair<std::size_t, std::size_t>>;

/// Ordered pairs (i, j) with a_i > a_j, or a_i == a_j and c_i < c_j.
PairList build_pairs(std::span<const double> perf, std::span<const double> cost);

/// Mean of log(1 + exp(-(s_i - s_j))) over the pairs; 0 for an empty list.
double ranking_loss(std::span<const double> scores, const PairList& pairs);
/// Adds d(ranking_loss)/ds * scale into `grad`.
void ranking_loss_grad(std::span<const double> scores, const PairList& pairs, double scale,
                       std::span<double> grad);

/// Mean training loss over `queries` (queries with no pairs are skipped under
/// the ranking objective) plus regularization * sum(theta^2). When `grad` is
/// given it receives the exact gradient.
double objective(const EquiRouterParams& params, const RoutingTable& table, std::span<const std::size_t> queries,
                 TrainingObjective kind, double regularization, EquiRouterParams* grad);

struct EquiRouterFit {
  EquiRouterParams params;
  std::vector<TrainLogRow> log;  // epoch 0 is the initialization
  std::size_t best_epoch = 0;
};

/// Minibatch Adam with decoupled weight decay; returns the parameters of the
/// epoch with the lowest validation loss (training loss if the validation part is
/// empty or carries no ranking supervision).
EquiRouterFit train_equirouter(const RoutingTable& table, const SplitIndices& split, const EquiRouterHyper& hyper);
EquiRouterFit train_mse_ablation(const RoutingTable& table, const SplitIndices& split, const EquiRouterHyper& hyper);
EquiRouterFit train_no_joint_ablation(const RoutingTable& table, const SplitIndices& split,
                                      const EquiRouterHyper& hyper);
EquiRouterFit train_network(const RoutingTable& table, const SplitIndices& split, const EquiRouterHyper& hyper,
                            HeadInput head_input, TrainingObjective kind);

class EquiRouter final : public Router {
 public:
  /// `tag` is one of equirouter, equirouter_nojoint, mse.
  EquiRouter(EquiRouterParams params, std::string tag);

  std::string kind() const override { return tag_; }
  std::size_t num_models() const override { return params_.hyper.num_models; }
  std::vector<double> scores(const RoutingTable& table, std::size_t n) const override;
  Matrix score_matrix(const RoutingTable& table, std::span<const std::size_t> queries) const override;
  Checkpoint to_checkpoint() const override;

  static EquiRouter from_checkpoint(const Checkpoint& ckpt);
  const EquiRouterParams& params() const { return params_; }

 private:
  EquiRouterParams params_;
  std::string tag_;
};

}  // namespace equiroute
