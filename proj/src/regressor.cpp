#include "equiroute/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace equiroute {

namespace {

// Relative to the mean; below this a model's costs count as constant.
constexpr double kRelativeMinStd = 1e-12;

std::vector<double> to_vector(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

// Adds d(MSE)/d(params) for the rows `ids` into `grad`; returns the batch MSE.
double mse_grad(const TwoLayerRegressor& net, const Matrix& inputs, const Matrix& targets,
                std::span<const std::size_t> ids, TwoLayerRegressor& grad) {
  const Matrix x = inputs.gather_rows(ids);
  const Matrix y = targets.gather_rows(ids);
  const Matrix h = forward(net.hidden, x);
  const Matrix out = forward(net.output, h);
  const double scale = 1.0 / static_cast<double>(out.size());
  Matrix g(out.rows(), out.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = out.values()[i] - y.values()[i];
    loss += r * r * scale;
    g.values()[i] = 2.0 * r * scale;
  }
  Matrix g_h;
  backward_accumulate(net.output, h, out, g, grad.output, &g_h);
  backward_accumulate(net.hidden, x, h, g_h, grad.hidden, nullptr);
  return loss;
}

}  // namespace

TwoLayerRegressor TwoLayerRegressor::init(std::size_t in, std::size_t out, const RegressorHyper& hyper) {
  if (in == 0 || out == 0 || hyper.hidden == 0) throw ValidationError("regressor: dimensions must be positive");
  Rng rng(Rng::derive(hyper.seed, 13));
  TwoLayerRegressor net;
  net.hidden = DenseLayer::glorot(in, hyper.hidden, Activation::relu, rng);
  net.output = DenseLayer::glorot(hyper.hidden, out, Activation::identity, rng);
  return net;
}

Matrix TwoLayerRegressor::predict(const Matrix& x) const { return forward(output, forward(hidden, x)); }

std::vector<std::span<double>> TwoLayerRegressor::parameters() {
  std::vector<std::span<double>> blocks;
  hidden.append_parameters(blocks);
  output.append_parameters(blocks);
  return blocks;
}

std::vector<std::span<const double>> TwoLayerRegressor::parameters() const {
  std::vector<std::span<const double>> blocks;
  hidden.append_parameters(blocks);
  output.append_parameters(blocks);
  return blocks;
}

double regressor_mse(const TwoLayerRegressor& net, const Matrix& inputs, const Matrix& targets,
                     std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  const Matrix pred = net.predict(inputs.gather_rows(rows));
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double d = pred(r, c) - targets(rows[r], c);
      total += d * d;
    }
  }
  return total / static_cast<double>(pred.size());
}

RegressorFit fit_regressor(const Matrix& inputs, const Matrix& targets, std::span<const std::size_t> train,
                           std::span<const std::size_t> valid, const RegressorHyper& hyper,
                           const TwoLayerRegressor* start) {
  if (train.empty()) throw ValidationError("regressor: empty training split");
  if (hyper.epochs == 0 || hyper.batch_size == 0) throw ValidationError("regressor: epochs and batch_size must be positive");
  if (!(hyper.learning_rate > 0.0)) throw ValidationError("regressor: learning rate must be positive");
  if (inputs.rows() != targets.rows()) throw ValidationError("regressor: inputs and targets differ in rows");

  RegressorFit fit;
  fit.net = start ? *start : TwoLayerRegressor::init(inputs.cols(), targets.cols(), hyper);
  if (fit.net.hidden.in_dim() != inputs.cols() || fit.net.output.out_dim() != targets.cols()) {
    throw ValidationError("regressor: starting network does not match data");
  }
  auto evaluate = [&](std::size_t epoch) {
    const double tr = regressor_mse(fit.net, inputs, targets, train);
    const double va = valid.empty() ? tr : regressor_mse(fit.net, inputs, targets, valid);
    fit.log.push_back({epoch, tr, va});
    return va;
  };

  AdamState adam({hyper.learning_rate, 0.9, 0.999, 1e-8, hyper.weight_decay});
  const std::size_t batch = std::min(hyper.batch_size, train.size());
  Rng rng(Rng::derive(hyper.seed, 7));
  std::vector<std::size_t> order(train.begin(), train.end());

  double best = evaluate(0);
  TwoLayerRegressor best_net = fit.net;
  TwoLayerRegressor grad;
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      grad = {fit.net.hidden.zeros_like(), fit.net.output.zeros_like()};
      const double loss = mse_grad(fit.net, inputs, targets, {order.data() + start, end - start}, grad);
      if (!std::isfinite(loss)) throw NumericsError("regressor: training loss is not finite");
      adam_step(adam, fit.net.parameters(), grad.parameters());
    }
    const double v = evaluate(epoch);
    if (v < best) {
      best = v;
      best_net = fit.net;
      fit.best_epoch = epoch;
    }
  }
  fit.net = std::move(best_net);
  return fit;
}

void refit_output_layer(TwoLayerRegressor& net, const Matrix& inputs, const Matrix& targets,
                        std::span<const std::size_t> rows) {
  const Matrix h = forward(net.hidden, inputs.gather_rows(rows));
  const std::size_t m = h.rows();
  const std::size_t p = h.cols() + 1;  // hidden features plus a constant column
  const std::size_t k = targets.cols();
  Matrix a(m, p, 1.0);
  Matrix y(m, k);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c + 1 < p; ++c) a(r, c) = h(r, c);
    for (std::size_t j = 0; j < k; ++j) y(r, j) = targets(rows[r], j);
  }

  // Householder QR applied in place to [a | y]; a column whose remaining norm is
  // negligible next to its original norm is skipped and gets zero weight.
  std::vector<double> col_norm(p, 0.0);
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t r = 0; r < m; ++r) col_norm[c] += a(r, c) * a(r, c);
    col_norm[c] = std::sqrt(col_norm[c]);
  }
  std::vector<std::size_t> pivot_row(p, m);  // m marks a skipped column
  std::vector<double> v(m);
  std::size_t next = 0;
  for (std::size_t c = 0; c < p && next < m; ++c) {
    double norm = 0.0;
    for (std::size_t r = next; r < m; ++r) norm += a(r, c) * a(r, c);
    norm = std::sqrt(norm);
    if (!(norm > 1e-10 * col_norm[c])) continue;
    const double alpha = a(next, c) > 0.0 ? -norm : norm;
    double vnorm2 = 0.0;
    for (std::size_t r = next; r < m; ++r) {
      v[r] = a(r, c) - (r == next ? alpha : 0.0);
      vnorm2 += v[r] * v[r];
    }
    auto reflect = [&](Matrix& mat, std::size_t col) {
      double dot = 0.0;
      for (std::size_t r = next; r < m; ++r) dot += v[r] * mat(r, col);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t r = next; r < m; ++r) mat(r, col) -= f * v[r];
    };
    for (std::size_t cc = c; cc < p; ++cc) reflect(a, cc);
    for (std::size_t j = 0; j < k; ++j) reflect(y, j);
    pivot_row[c] = next++;
  }

  Matrix beta(p, k);
  for (std::size_t c = p; c-- > 0;) {
    const std::size_t r = pivot_row[c];
    if (r == m) continue;
    for (std::size_t j = 0; j < k; ++j) {
      double s = y(r, j);
      for (std::size_t cc = c + 1; cc < p; ++cc) s -= a(r, cc) * beta(cc, j);
      beta(c, j) = s / a(r, c);
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c + 1 < p; ++c) net.output.weight(j, c) = beta(c, j);
    net.output.bias[j] = beta(p - 1, j);
  }
}

CostPredictor::CostPredictor(CostPredictorParams params) : params_(std::move(params)) {
  if (params_.target_mean.size() != params_.net.output.out_dim() ||
      params_.target_std.size() != params_.target_mean.size()) {
    throw ValidationError("cost predictor: standardization does not match network outputs");
  }
}

std::vector<double> CostPredictor::predict(std::span<const double> query) const {
  Matrix x(1, query.size(), std::vector<double>(query.begin(), query.end()));
  const Matrix c = predict_matrix_rows(x);
  return {c.values().begin(), c.values().end()};
}

Matrix CostPredictor::predict(const RoutingTable& table, std::span<const std::size_t> queries) const {
  return predict_matrix_rows(table.embeddings.gather_rows(queries));
}

Matrix CostPredictor::predict_matrix_rows(const Matrix& x) const {
  if (x.cols() != params_.net.hidden.in_dim()) throw ValidationError("cost predictor: query dimension mismatch");
  Matrix out = params_.net.predict(x);
  constexpr double kFloor = std::numeric_limits<double>::min();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const double c = out(r, j) * params_.target_std[j] + params_.target_mean[j];
      out(r, j) = std::max(c, kFloor);
    }
  }
  return out;
}

Checkpoint CostPredictor::to_checkpoint() const {
  Checkpoint c;
  c.kind = "cost";
  const auto& h = params_.hyper;
  c.header = {{"query_dim", params_.net.hidden.in_dim()},
              {"num_models", num_models()},
              {"hidden", h.hidden},
              {"learning_rate", h.learning_rate},
              {"weight_decay", h.weight_decay},
              {"epochs", h.epochs},
              {"batch_size", h.batch_size},
              {"seed", h.seed},
              {"target_mean", params_.target_mean},
              {"target_std", params_.target_std}};
  for (const auto& block : params_.net.parameters()) c.values.insert(c.values.end(), block.begin(), block.end());
  return c;
}

CostPredictor CostPredictor::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "cost") throw ValidationError("checkpoint is not a cost predictor");
  CostPredictorParams p;
  std::size_t in = 0;
  std::size_t out = 0;
  try {
    const auto& j = ckpt.header;
    in = j.at("query_dim").get<std::size_t>();
    out = j.at("num_models").get<std::size_t>();
    p.hyper.hidden = j.at("hidden").get<std::size_t>();
    p.hyper.learning_rate = j.at("learning_rate").get<double>();
    p.hyper.weight_decay = j.at("weight_decay").get<double>();
    p.hyper.epochs = j.at("epochs").get<std::size_t>();
    p.hyper.batch_size = j.at("batch_size").get<std::size_t>();
    p.hyper.seed = j.at("seed").get<std::uint64_t>();
    p.target_mean = to_vector(j.at("target_mean"));
    p.target_std = to_vector(j.at("target_std"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cost checkpoint: ") + e.what());
  }
  p.net = TwoLayerRegressor::init(in, out, p.hyper);
  const auto blocks = p.net.parameters();
  if (parameter_count(blocks) != ckpt.values.size()) {
    throw ValidationError("cost checkpoint: parameter count does not match header");
  }
  unflatten(ckpt.values, blocks);
  return CostPredictor(std::move(p));
}

CostPredictorFit train_cost_predictor(const RoutingTable& table, const SplitIndices& split,
                                      const RegressorHyper& hyper) {
  if (split.train.empty()) throw ValidationError("cost predictor: empty training split");
  const std::size_t k = table.num_models();
  CostPredictorParams p;
  p.hyper = hyper;
  p.target_mean.assign(k, 0.0);
  p.target_std.assign(k, 0.0);
  const auto n_train = static_cast<double>(split.train.size());
  for (std::size_t n : split.train) {
    for (std::size_t j = 0; j < k; ++j) p.target_mean[j] += table.cost(n, j) / n_train;
  }
  for (std::size_t n : split.train) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = table.cost(n, j) - p.target_mean[j];
      p.target_std[j] += d * d / n_train;
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    double& s = p.target_std[j];
    s = std::sqrt(s);
    if (!(s > kRelativeMinStd * std::abs(p.target_mean[j]))) s = 1.0;
  }

  Matrix targets(table.num_queries(), k);
  for (std::size_t n = 0; n < table.num_queries(); ++n) {
    for (std::size_t j = 0; j < k; ++j) targets(n, j) = (table.cost(n, j) - p.target_mean[j]) / p.target_std[j];
  }
  TwoLayerRegressor start = TwoLayerRegressor::init(table.embed_dim(), k, hyper);
  const std::size_t half = hyper.hidden / 2;
  for (std::size_t u = 0; u < half; ++u) {
    for (std::size_t c = 0; c < start.hidden.in_dim(); ++c) start.hidden.weight(half + u, c) = -start.hidden.weight(u, c);
    start.hidden.bias[half + u] = -start.hidden.bias[u];
  }
  refit_output_layer(start, table.embeddings, targets, split.train);
  auto fit = fit_regressor(table.embeddings, targets, split.train, split.valid, hyper, &start);
  p.net = std::move(fit.net);
  return {CostPredictor(std::move(p)), std::move(fit.log), fit.best_epoch};
}

}  // namespace equiroute
