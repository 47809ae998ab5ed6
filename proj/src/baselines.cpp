#include "equiroute/baselines.hpp"

#include <algorithm>
#include <numeric>

namespace equiroute {

KnnRouter::KnnRouter(const RoutingTable& table, std::vector<std::size_t> train, std::size_t k,
                     std::uint64_t split_seed)
    : train_(std::move(train)), k_(k), split_seed_(split_seed) {
  if (train_.empty()) throw ValidationError("knn: empty training split");
  if (k_ == 0) throw ValidationError("knn: k must be positive");
  embeddings_ = table.embeddings.gather_rows(train_);
  perf_ = table.perf.gather_rows(train_);
}

std::vector<double> KnnRouter::predict(std::span<const double> query) const {
  if (query.size() != embeddings_.cols()) throw ValidationError("knn: query dimension mismatch");
  const std::size_t rows = embeddings_.rows();
  std::vector<double> dist(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto e = embeddings_.row(r);
    double s = 0.0;
    for (std::size_t d = 0; d < e.size(); ++d) {
      const double diff = e[d] - query[d];
      s += diff * diff;
    }
    dist[r] = s;
  }
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k_, rows);
  auto closer = [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && train_[a] < train_[b]);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), closer);

  std::vector<double> mean(perf_.cols(), 0.0);
  for (std::size_t i = 0; i < take; ++i) {
    const auto row = perf_.row(order[i]);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
  }
  for (double& m : mean) m /= static_cast<double>(take);
  return mean;
}

std::vector<double> KnnRouter::scores(const RoutingTable& table, std::size_t n) const {
  return predict(table.embeddings.row(n));
}

Checkpoint KnnRouter::to_checkpoint() const {
  Checkpoint c;
  c.kind = "knn";
  c.header = {{"k", k_}, {"split_seed", split_seed_}, {"train", train_},
              {"query_dim", embeddings_.cols()}, {"num_models", perf_.cols()}};
  return c;
}

KnnRouter KnnRouter::from_checkpoint(const Checkpoint& ckpt, const RoutingTable& table) {
  if (ckpt.kind != "knn") throw ValidationError("checkpoint is not a knn router");
  try {
    const auto& j = ckpt.header;
    auto train = j.at("train").get<std::vector<std::size_t>>();
    if (j.at("query_dim").get<std::size_t>() != table.embed_dim() ||
        j.at("num_models").get<std::size_t>() != table.num_models()) {
      throw ValidationError("knn checkpoint does not match the routing table");
    }
    for (std::size_t i : train) {
      if (i >= table.num_queries()) throw ValidationError("knn checkpoint references a missing query");
    }
    return KnnRouter(table, std::move(train), j.at("k").get<std::size_t>(), j.at("split_seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("knn checkpoint: ") + e.what());
  }
}

KnnRouter train_knn(const RoutingTable& table, const SplitIndices& split, std::size_t k) {
  return KnnRouter(table, split.train, k, split.seed);
}

MlpRouter::MlpRouter(TwoLayerRegressor net, RegressorHyper hyper) : net_(std::move(net)), hyper_(hyper) {}

std::vector<double> MlpRouter::scores(const RoutingTable& table, std::size_t n) const {
  const std::size_t one[] = {n};
  const Matrix s = score_matrix(table, one);
  return {s.values().begin(), s.values().end()};
}

Matrix MlpRouter::score_matrix(const RoutingTable& table, std::span<const std::size_t> queries) const {
  if (table.embed_dim() != net_.hidden.in_dim()) throw ValidationError("mlp: query dimension mismatch");
  return net_.predict(table.embeddings.gather_rows(queries));
}

Checkpoint MlpRouter::to_checkpoint() const {
  Checkpoint c;
  c.kind = "mlp";
  c.header = {{"query_dim", net_.hidden.in_dim()},
              {"num_models", num_models()},
              {"hidden", hyper_.hidden},
              {"learning_rate", hyper_.learning_rate},
              {"weight_decay", hyper_.weight_decay},
              {"epochs", hyper_.epochs},
              {"batch_size", hyper_.batch_size},
              {"seed", hyper_.seed}};
  for (const auto& block : net_.parameters()) c.values.insert(c.values.end(), block.begin(), block.end());
  return c;
}

MlpRouter MlpRouter::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "mlp") throw ValidationError("checkpoint is not an mlp router");
  RegressorHyper h;
  std::size_t in = 0;
  std::size_t out = 0;
  try {
    const auto& j = ckpt.header;
    in = j.at("query_dim").get<std::size_t>();
    out = j.at("num_models").get<std::size_t>();
    h.hidden = j.at("hidden").get<std::size_t>();
    h.learning_rate = j.at("learning_rate").get<double>();
    h.weight_decay = j.at("weight_decay").get<double>();
    h.epochs = j.at("epochs").get<std::size_t>();
    h.batch_size = j.at("batch_size").get<std::size_t>();
    h.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("mlp checkpoint: ") + e.what());
  }
  TwoLayerRegressor net = TwoLayerRegressor::init(in, out, h);
  const auto blocks = net.parameters();
  if (parameter_count(blocks) != ckpt.values.size()) {
    throw ValidationError("mlp checkpoint: parameter count does not match header");
  }
  unflatten(ckpt.values, blocks);
  return MlpRouter(std::move(net), h);
}

MlpRouterFit train_mlp_router(const RoutingTable& table, const SplitIndices& split, const RegressorHyper& hyper) {
  auto fit = fit_regressor(table.embeddings, table.perf, split.train, split.valid, hyper);
  return {MlpRouter(std::move(fit.net), hyper), std::move(fit.log), fit.best_epoch};
}

}  // namespace equiroute
