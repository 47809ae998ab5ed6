#include "equiroute/equirouter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace equiroute {

namespace {

constexpr std::size_t kScoreChunk = 512;

// Numerically stable log(1 + exp(-x)).
double softplus_neg(double x) {
  return x > 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

// 1 / (1 + exp(x)), the magnitude of d softplus_neg / dx.
double sigmoid_neg(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct BatchForward {
  Matrix input;
  std::vector<Matrix> trunk_acts;  // back() is z, B x D
  Matrix film_out;                 // K x 2D
  Matrix proj_out;                 // K x D
  Matrix head_in;                  // (B*K) x F
  std::vector<Matrix> head_acts;   // back() is (B*K) x 1
};

BatchForward run_forward(const EquiRouterParams& p, Matrix input, OpCounter* ops) {
  const std::size_t dim = p.hyper.hidden;
  const std::size_t k = p.hyper.num_models;
  const bool joint = p.head_input == HeadInput::joint;

  BatchForward fw;
  fw.input = std::move(input);
  fw.trunk_acts = forward_stack(p.trunk, fw.input, ops);
  fw.film_out = forward(p.film, p.model_embeddings, ops);
  fw.proj_out = forward(p.model_proj, p.model_embeddings, ops);

  const Matrix& z = fw.trunk_acts.back();
  const std::size_t batch = z.rows();
  fw.head_in = Matrix(batch * k, p.head_width());
  for (std::size_t b = 0; b < batch; ++b) {
    const auto zb = z.row(b);
    for (std::size_t j = 0; j < k; ++j) {
      const auto gb = fw.film_out.row(j);
      const auto e = fw.proj_out.row(j);
      double* h = fw.head_in.row(b * k + j).data();
      for (std::size_t d = 0; d < dim; ++d) {
        const double zm = gb[d] * zb[d] + gb[dim + d];
        h[d] = zm;
        h[dim + d] = e[d];
        if (joint) {
          h[2 * dim + d] = zm * e[d];
          h[3 * dim + d] = std::abs(zm - e[d]);
        }
      }
    }
  }
  if (ops) ops->macs += static_cast<std::uint64_t>(batch) * k * dim * (joint ? 2 : 1);
  fw.head_acts = forward_stack(p.head, fw.head_in, ops);
  return fw;
}

Matrix scores_of(const BatchForward& fw, std::size_t k) {
  const Matrix& s = fw.head_acts.back();
  return Matrix(s.rows() / k, k, std::vector<double>(s.values().begin(), s.values().end()));
}

void run_backward(const EquiRouterParams& p, const BatchForward& fw, const Matrix& grad_scores,
                  EquiRouterParams& grad) {
  const std::size_t dim = p.hyper.hidden;
  const std::size_t k = p.hyper.num_models;
  const bool joint = p.head_input == HeadInput::joint;
  const Matrix& z = fw.trunk_acts.back();
  const std::size_t batch = z.rows();

  Matrix g_out(batch * k, 1, std::vector<double>(grad_scores.values().begin(), grad_scores.values().end()));
  const Matrix g_head_in = backward_stack(p.head, fw.head_acts, fw.head_in, std::move(g_out), grad.head, true);

  Matrix g_z(batch, dim);
  Matrix g_film(k, 2 * dim);
  Matrix g_proj(k, dim);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto zb = z.row(b);
    auto gzb = g_z.row(b);
    for (std::size_t j = 0; j < k; ++j) {
      const auto gb = fw.film_out.row(j);
      const auto e = fw.proj_out.row(j);
      const auto h = fw.head_in.row(b * k + j);
      const auto gh = g_head_in.row(b * k + j);
      auto gf = g_film.row(j);
      auto ge = g_proj.row(j);
      for (std::size_t d = 0; d < dim; ++d) {
        const double zm = h[d];
        double g_zm = gh[d];
        double g_e = gh[dim + d];
        if (joint) {
          const double s = sign(zm - e[d]);
          g_zm += gh[2 * dim + d] * e[d] + gh[3 * dim + d] * s;
          g_e += gh[2 * dim + d] * zm - gh[3 * dim + d] * s;
        }
        gzb[d] += gb[d] * g_zm;
        gf[d] += zb[d] * g_zm;
        gf[dim + d] += g_zm;
        ge[d] += g_e;
      }
    }
  }

  Matrix g_m1;
  Matrix g_m2;
  backward_accumulate(p.film, p.model_embeddings, fw.film_out, g_film, grad.film, &g_m1);
  backward_accumulate(p.model_proj, p.model_embeddings, fw.proj_out, g_proj, grad.model_proj, &g_m2);
  auto gm = grad.model_embeddings.values();
  for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g_m1.values()[i] + g_m2.values()[i];

  backward_stack(p.trunk, fw.trunk_acts, fw.input, std::move(g_z), grad.trunk, false);
}

struct LossValue {
  double loss = 0.0;
  std::size_t contributing = 0;
};

LossValue loss_and_grad(const EquiRouterParams& p, const RoutingTable& table, std::span<const std::size_t> queries,
                        TrainingObjective kind, double regularization, EquiRouterParams* grad) {
  const std::size_t k = p.hyper.num_models;
  LossValue out;
  if (queries.empty()) return out;
  const BatchForward fw = run_forward(p, table.embeddings.gather_rows(queries), nullptr);
  const Matrix scores = scores_of(fw, k);
  Matrix g_scores(queries.size(), k);

  if (kind == TrainingObjective::ranking) {
    std::vector<PairList> pairs;
    pairs.reserve(queries.size());
    for (std::size_t n : queries) {
      pairs.push_back(build_pairs(table.perf.row(n), table.cost.row(n)));
      if (!pairs.back().empty()) ++out.contributing;
    }
    if (out.contributing > 0) {
      const double scale = 1.0 / static_cast<double>(out.contributing);
      for (std::size_t b = 0; b < queries.size(); ++b) {
        if (pairs[b].empty()) continue;
        out.loss += ranking_loss(scores.row(b), pairs[b]) * scale;
        if (grad) ranking_loss_grad(scores.row(b), pairs[b], scale, g_scores.row(b));
      }
    }
  } else {
    out.contributing = queries.size();
    const double scale = 1.0 / static_cast<double>(queries.size() * k);
    for (std::size_t b = 0; b < queries.size(); ++b) {
      const auto a = table.perf.row(queries[b]);
      for (std::size_t j = 0; j < k; ++j) {
        const double r = scores(b, j) - a[j];
        out.loss += r * r * scale;
        g_scores(b, j) = 2.0 * r * scale;
      }
    }
  }
  if (!std::isfinite(out.loss)) throw NumericsError("training loss is not finite");

  if (grad) {
    *grad = p.zeros_like();
    run_backward(p, fw, g_scores, *grad);
  }
  if (regularization != 0.0) {
    const auto blocks = p.parameters();
    std::vector<std::span<double>> gblocks;
    if (grad) gblocks = grad->parameters();
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      for (std::size_t i = 0; i < blocks[bi].size(); ++i) {
        const double theta = blocks[bi][i];
        out.loss += regularization * theta * theta;
        if (grad) gblocks[bi][i] += 2.0 * regularization * theta;
      }
    }
  }
  return out;
}

void check_hyper(const EquiRouterHyper& h) {
  if (h.query_dim == 0 || h.model_dim == 0 || h.hidden == 0) {
    throw ValidationError("equirouter: dimensions must be positive");
  }
  if (h.num_models < 2) throw ValidationError("equirouter: need at least 2 models");
  if (h.epochs == 0 || h.batch_size == 0) throw ValidationError("equirouter: epochs and batch_size must be positive");
  if (!(h.learning_rate > 0.0)) throw ValidationError("equirouter: learning rate must be positive");
  if (!(h.weight_decay >= 0.0)) throw ValidationError("equirouter: weight decay must be >= 0");
}

}  // namespace

EquiRouterParams EquiRouterParams::init(const EquiRouterHyper& hyper, HeadInput head_input) {
  check_hyper(hyper);
  EquiRouterParams p;
  p.hyper = hyper;
  p.head_input = head_input;
  Rng rng(Rng::derive(hyper.seed, 11));
  const std::size_t k = hyper.num_models;
  const std::size_t dm = hyper.model_dim;
  const std::size_t dim = hyper.hidden;

  p.model_embeddings = Matrix(k, dm);
  const double limit = std::sqrt(6.0 / static_cast<double>(k + dm));
  for (double& v : p.model_embeddings.values()) v = rng.uniform(-limit, limit);
  p.trunk.push_back(DenseLayer::glorot(hyper.query_dim, dim, Activation::relu, rng));
  p.trunk.push_back(DenseLayer::glorot(dim, dim, Activation::relu, rng));
  p.film = DenseLayer::glorot(dm, 2 * dim, Activation::identity, rng);
  p.model_proj = DenseLayer::glorot(dm, dim, Activation::identity, rng);
  p.head.push_back(DenseLayer::glorot(p.head_width(), dim, Activation::relu, rng));
  p.head.push_back(DenseLayer::glorot(dim, 1, Activation::identity, rng));
  return p;
}

EquiRouterParams EquiRouterParams::zeros_like() const {
  EquiRouterParams z;
  z.hyper = hyper;
  z.head_input = head_input;
  z.model_embeddings = Matrix(model_embeddings.rows(), model_embeddings.cols());
  for (const auto& l : trunk) z.trunk.push_back(l.zeros_like());
  z.film = film.zeros_like();
  z.model_proj = model_proj.zeros_like();
  for (const auto& l : head) z.head.push_back(l.zeros_like());
  return z;
}

std::size_t EquiRouterParams::head_width() const {
  return (head_input == HeadInput::joint ? 4 : 2) * hyper.hidden;
}

std::vector<std::span<double>> EquiRouterParams::parameters() {
  std::vector<std::span<double>> blocks;
  blocks.push_back(model_embeddings.values());
  for (auto& l : trunk) l.append_parameters(blocks);
  film.append_parameters(blocks);
  model_proj.append_parameters(blocks);
  for (auto& l : head) l.append_parameters(blocks);
  return blocks;
}

std::vector<std::span<const double>> EquiRouterParams::parameters() const {
  std::vector<std::span<const double>> blocks;
  blocks.push_back(model_embeddings.values());
  for (const auto& l : trunk) l.append_parameters(blocks);
  film.append_parameters(blocks);
  model_proj.append_parameters(blocks);
  for (const auto& l : head) l.append_parameters(blocks);
  return blocks;
}

std::vector<double> film_modulate(std::span<const double> z, std::span<const double> gamma,
                                  std::span<const double> beta) {
  if (z.size() != gamma.size() || z.size() != beta.size()) {
    throw ValidationError("film_modulate: dimension mismatch");
  }
  std::vector<double> out(z.size());
  for (std::size_t d = 0; d < z.size(); ++d) out[d] = gamma[d] * z[d] + beta[d];
  return out;
}

std::vector<double> joint_feature(std::span<const double> z_mod, std::span<const double> e) {
  if (z_mod.size() != e.size()) throw ValidationError("joint_feature: dimension mismatch");
  const std::size_t dim = z_mod.size();
  std::vector<double> h(4 * dim);
  for (std::size_t d = 0; d < dim; ++d) {
    h[d] = z_mod[d];
    h[dim + d] = e[d];
    h[2 * dim + d] = z_mod[d] * e[d];
    h[3 * dim + d] = std::abs(z_mod[d] - e[d]);
  }
  return h;
}

std::vector<double> score_all(const EquiRouterParams& params, std::span<const double> query, OpCounter* ops) {
  if (query.size() != params.hyper.query_dim) throw ValidationError("score_all: query dimension mismatch");
  Matrix x(1, query.size(), std::vector<double>(query.begin(), query.end()));
  const Matrix s = scores_of(run_forward(params, std::move(x), ops), params.hyper.num_models);
  return {s.values().begin(), s.values().end()};
}

Matrix score_batch(const EquiRouterParams& params, const Matrix& queries, OpCounter* ops) {
  if (queries.cols() != params.hyper.query_dim) throw ValidationError("score_batch: query dimension mismatch");
  const std::size_t k = params.hyper.num_models;
  Matrix out(queries.rows(), k);
  for (std::size_t start = 0; start < queries.rows(); start += kScoreChunk) {
    const std::size_t end = std::min(queries.rows(), start + kScoreChunk);
    std::vector<std::size_t> rows(end - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    const Matrix s = scores_of(run_forward(params, queries.gather_rows(rows), ops), k);
    std::copy(s.values().begin(), s.values().end(), out.row(start).begin());
  }
  return out;
}

PairList build_pairs(std::span<const double> perf, std::span<const double> cost) {
  if (perf.size() != cost.size()) throw ValidationError("build_pairs: length mismatch");
  PairList pairs;
  for (std::size_t i = 0; i < perf.size(); ++i) {
    for (std::size_t j = 0; j < perf.size(); ++j) {
      if (perf[i] > perf[j] || (perf[i] == perf[j] && cost[i] < cost[j])) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

double ranking_loss(std::span<const double> scores, const PairList& pairs) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericsError("ranking_loss: non-finite score");
  }
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [i, j] : pairs) total += softplus_neg(scores[i] - scores[j]);
  return total / static_cast<double>(pairs.size());
}

void ranking_loss_grad(std::span<const double> scores, const PairList& pairs, double scale,
                       std::span<double> grad) {
  if (pairs.empty()) return;
  const double w = scale / static_cast<double>(pairs.size());
  for (const auto& [i, j] : pairs) {
    const double g = w * sigmoid_neg(scores[i] - scores[j]);
    grad[i] -= g;
    grad[j] += g;
  }
}

double objective(const EquiRouterParams& params, const RoutingTable& table, std::span<const std::size_t> queries,
                 TrainingObjective kind, double regularization, EquiRouterParams* grad) {
  return loss_and_grad(params, table, queries, kind, regularization, grad).loss;
}

EquiRouterFit train_network(const RoutingTable& table, const SplitIndices& split, const EquiRouterHyper& hyper_in,
                            HeadInput head_input, TrainingObjective kind) {
  EquiRouterHyper hyper = hyper_in;
  if (hyper.query_dim == 0) hyper.query_dim = table.embed_dim();
  if (hyper.num_models == 0) hyper.num_models = table.num_models();
  if (hyper.query_dim != table.embed_dim() || hyper.num_models != table.num_models()) {
    throw ValidationError("equirouter: hyperparameters do not match the routing table");
  }
  if (split.train.empty()) throw ValidationError("equirouter: empty training split");

  EquiRouterFit fit;
  fit.params = EquiRouterParams::init(hyper, head_input);

  auto evaluate = [&](std::size_t epoch) {
    const auto train = loss_and_grad(fit.params, table, split.train, kind, 0.0, nullptr);
    const auto valid = loss_and_grad(fit.params, table, split.valid, kind, 0.0, nullptr);
    if (epoch == 0 && train.contributing == 0) throw ValidationError("no ranking supervision");
    TrainLogRow row{epoch, train.loss, valid.contributing > 0 ? valid.loss : train.loss};
    fit.log.push_back(row);
    return row.valid_loss;
  };

  AdamState adam({hyper.learning_rate, 0.9, 0.999, 1e-8, hyper.weight_decay});
  const std::size_t batch = std::min(hyper.batch_size, split.train.size());
  Rng rng(Rng::derive(hyper.seed, 7));
  std::vector<std::size_t> order = split.train;

  double best = evaluate(0);
  EquiRouterParams best_params = fit.params;
  EquiRouterParams grad;
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::span<const std::size_t> ids(order.data() + start, end - start);
      const auto lv = loss_and_grad(fit.params, table, ids, kind, 0.0, &grad);
      if (lv.contributing == 0) continue;
      adam_step(adam, fit.params.parameters(), grad.parameters());
    }
    const double v = evaluate(epoch);
    if (v < best) {
      best = v;
      best_params = fit.params;
      fit.best_epoch = epoch;
    }
  }
  fit.params = std::move(best_params);
  return fit;
}

EquiRouterFit train_equirouter(const RoutingTable& table, const SplitIndices& split, const EquiRouterHyper& hyper) {
  return train_network(table, split, hyper, HeadInput::joint, TrainingObjective::ranking);
}

EquiRouterFit train_mse_ablation(const RoutingTable& table, const SplitIndices& split, const EquiRouterHyper& hyper) {
  return train_network(table, split, hyper, HeadInput::joint, TrainingObjective::mse);
}

EquiRouterFit train_no_joint_ablation(const RoutingTable& table, const SplitIndices& split,
                                      const EquiRouterHyper& hyper) {
  return train_network(table, split, hyper, HeadInput::concat_only, TrainingObjective::ranking);
}

EquiRouter::EquiRouter(EquiRouterParams params, std::string tag) : params_(std::move(params)), tag_(std::move(tag)) {
  if (tag_ != "equirouter" && tag_ != "equirouter_nojoint" && tag_ != "mse") {
    throw ValidationError("unknown equirouter tag '" + tag_ + "'");
  }
}

std::vector<double> EquiRouter::scores(const RoutingTable& table, std::size_t n) const {
  return score_all(params_, table.embeddings.row(n));
}

Matrix EquiRouter::score_matrix(const RoutingTable& table, std::span<const std::size_t> queries) const {
  return score_batch(params_, table.embeddings.gather_rows(queries));
}

Checkpoint EquiRouter::to_checkpoint() const {
  Checkpoint c;
  c.kind = tag_;
  const auto& h = params_.hyper;
  c.header = {{"query_dim", h.query_dim},
              {"model_dim", h.model_dim},
              {"hidden", h.hidden},
              {"num_models", h.num_models},
              {"weight_decay", h.weight_decay},
              {"learning_rate", h.learning_rate},
              {"epochs", h.epochs},
              {"batch_size", h.batch_size},
              {"seed", h.seed},
              {"head_input", params_.head_input == HeadInput::joint ? "joint" : "concat_only"}};
  for (const auto& block : params_.parameters()) c.values.insert(c.values.end(), block.begin(), block.end());
  return c;
}

EquiRouter EquiRouter::from_checkpoint(const Checkpoint& ckpt) {
  EquiRouterHyper h;
  HeadInput head_input = HeadInput::joint;
  try {
    const auto& j = ckpt.header;
    h.query_dim = j.at("query_dim").get<std::size_t>();
    h.model_dim = j.at("model_dim").get<std::size_t>();
    h.hidden = j.at("hidden").get<std::size_t>();
    h.num_models = j.at("num_models").get<std::size_t>();
    h.weight_decay = j.at("weight_decay").get<double>();
    h.learning_rate = j.at("learning_rate").get<double>();
    h.epochs = j.at("epochs").get<std::size_t>();
    h.batch_size = j.at("batch_size").get<std::size_t>();
    h.seed = j.at("seed").get<std::uint64_t>();
    head_input = j.at("head_input").get<std::string>() == "joint" ? HeadInput::joint : HeadInput::concat_only;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("equirouter checkpoint: ") + e.what());
  }
  EquiRouterParams p = EquiRouterParams::init(h, head_input).zeros_like();
  const auto blocks = p.parameters();
  if (parameter_count(blocks) != ckpt.values.size()) {
    throw ValidationError("equirouter checkpoint: parameter count does not match header");
  }
  unflatten(ckpt.values, blocks);
  return EquiRouter(std::move(p), ckpt.kind);
}

}  // namespace equiroute
