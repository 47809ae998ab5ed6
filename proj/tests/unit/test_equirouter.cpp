#include <cmath>
#include <numeric>

#include "doctest.h"
#include "equiroute/checkpoint.hpp"
#include "equiroute/equirouter.hpp"
#include "../support/reference.hpp"

using namespace equiroute;

namespace {

EquiRouterHyper small_hyper(std::size_t dq, std::size_t k, std::size_t dim = 8) {
  EquiRouterHyper h;
  h.query_dim = dq;
  h.num_models = k;
  h.hidden = dim;
  h.model_dim = 5;
  h.seed = 99;
  return h;
}

// Biases are zero at init; randomize them so the check exercises every path.
void jitter_biases(EquiRouterParams& p, std::uint64_t seed) {
  Rng rng(seed);
  auto jitter = [&](DenseLayer& l) {
    for (double& b : l.bias) b = rng.uniform(-0.3, 0.3);
  };
  for (auto& l : p.trunk) jitter(l);
  jitter(p.film);
  jitter(p.model_proj);
  for (auto& l : p.head) jitter(l);
}

std::vector<double> query_row(const RoutingTable& t, std::size_t n) { return ref::row(t.embeddings, n); }

}  // namespace

TEST_CASE("film_modulate and joint_feature examples") {
  const std::vector<double> z{1, 2};
  CHECK(film_modulate(z, std::vector<double>{1, 1}, std::vector<double>{0, 0}) == z);
  CHECK(film_modulate(z, std::vector<double>{0, 0}, std::vector<double>{3, 4}) == std::vector<double>{3, 4});
  CHECK(film_modulate(z, std::vector<double>{2, 0.5}, std::vector<double>{-1, 1}) == std::vector<double>{1, 2});
  CHECK_THROWS_AS(film_modulate(z, std::vector<double>{1}, std::vector<double>{0, 0}), ValidationError);

  CHECK(joint_feature(std::vector<double>{1, -1}, std::vector<double>{2, 3}) ==
        std::vector<double>{1, -1, 2, 3, 2, -3, 1, 4});
  const std::vector<double> v{0.5, -2, 3};
  const auto h = joint_feature(v, v);
  CHECK(h.size() == 12);
  CHECK(h == std::vector<double>{0.5, -2, 3, 0.5, -2, 3, 0.25, 4, 9, 0, 0, 0});
  CHECK_THROWS_AS(joint_feature(v, z), ValidationError);
}

TEST_CASE("score_all equals the reference pipeline") {
  std::mt19937_64 gen(1);
  const RoutingTable t = ref::random_table(gen, 6, 4, 7);
  for (HeadInput hi : {HeadInput::joint, HeadInput::concat_only}) {
    EquiRouterParams p = EquiRouterParams::init(small_hyper(7, 4), hi);
    jitter_biases(p, 5);
    CHECK(p.head_width() == (hi == HeadInput::joint ? 32u : 16u));
    CHECK(p.head.front().in_dim() == p.head_width());
    const Matrix batch = score_batch(p, t.embeddings);
    for (std::size_t n = 0; n < t.num_queries(); ++n) {
      const auto expect = ref::scores(p, query_row(t, n));
      const auto got = score_all(p, query_row(t, n));
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(got[j] == doctest::Approx(expect[j]).epsilon(1e-12));
        CHECK(batch(n, j) == got[j]);
      }
    }
  }
}

TEST_CASE("score symmetry and constant head") {
  EquiRouterParams p = EquiRouterParams::init(small_hyper(3, 3), HeadInput::joint);
  for (std::size_t c = 0; c < p.model_embeddings.cols(); ++c) p.model_embeddings(2, c) = p.model_embeddings(0, c);
  const std::vector<double> q{0.3, -1.0, 2.0};
  auto s = score_all(p, q);
  CHECK(s[0] == s[2]);

  p.head.back().weight.fill(0.0);
  p.head.back().bias[0] = 0.25;
  s = score_all(p, q);
  for (double v : s) CHECK(v == 0.25);
}

TEST_CASE("property: permuting models permutes scores") {
  std::mt19937_64 gen(8);
  EquiRouterParams p = EquiRouterParams::init(small_hyper(4, 5), HeadInput::joint);
  jitter_biases(p, 2);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  EquiRouterParams q = p;
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t c = 0; c < p.model_embeddings.cols(); ++c) q.model_embeddings(j, c) = p.model_embeddings(perm[j], c);
  }
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(4);
    for (double& v : x) v = nd(gen);
    const auto a = score_all(p, x);
    const auto b = score_all(q, x);
    for (std::size_t j = 0; j < 5; ++j) CHECK(b[j] == a[perm[j]]);
  }
}

TEST_CASE("operation count is linear in K with a K-independent trunk") {
  const std::size_t dq = 6, dim = 8, dm = 5;
  const std::vector<double> q(dq, 0.5);
  for (HeadInput hi : {HeadInput::joint, HeadInput::concat_only}) {
    const std::uint64_t width = hi == HeadInput::joint ? 4 * dim : 2 * dim;
    const std::uint64_t elementwise = hi == HeadInput::joint ? 2 * dim : dim;
    for (std::size_t k : {2, 3, 5, 8, 13}) {
      const EquiRouterParams p = EquiRouterParams::init(small_hyper(dq, k, dim), hi);
      OpCounter ops;
      score_all(p, q, &ops);
      const std::uint64_t trunk = dq * dim + dim * dim;
      const std::uint64_t per_model = dm * 2 * dim + dm * dim + elementwise + width * dim + dim;
      CHECK(ops.macs == trunk + k * per_model);
    }
  }
}

TEST_CASE("build_pairs examples and soundness") {
  auto pairs = build_pairs(std::vector<double>{1, 1, 0}, std::vector<double>{2, 1, 1});
  std::sort(pairs.begin(), pairs.end());
  CHECK(pairs == PairList{{0, 2}, {1, 0}, {1, 2}});
  CHECK(build_pairs(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 1}).empty());
  CHECK(build_pairs(std::vector<double>{0, 1}, std::vector<double>{5, 1}) == PairList{{1, 0}});

  std::mt19937_64 gen(12);
  const RoutingTable t = ref::random_table(gen, 200, 5, 1);
  for (std::size_t n = 0; n < t.num_queries(); ++n) {
    const auto a = ref::row(t.perf, n);
    const auto c = ref::row(t.cost, n);
    for (auto [i, j] : build_pairs(a, c)) {
      CHECK(i != j);
      // With only i and j feasible the oracle must never pick j.
      std::vector<double> c2(c.size(), 100.0);
      c2[i] = c[i];
      c2[j] = c[j];
      CHECK(ref::lexicographic_oracle(a, c2, 50.0) == i);
    }
  }
}

TEST_CASE("ranking_loss values and stability") {
  const PairList one{{0, 1}};
  CHECK(ranking_loss(std::vector<double>{0.4, 0.4, 0.4}, PairList{{0, 1}, {2, 1}}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ranking_loss(std::vector<double>{2, 0}, one) == doctest::Approx(0.126928011042972).epsilon(1e-12));
  const double tiny = ranking_loss(std::vector<double>{50, 0}, one);
  CHECK(tiny < 1e-21);
  CHECK(tiny > 0.0);
  CHECK(ranking_loss(std::vector<double>{-1000, 0}, one) == doctest::Approx(1000.0));
  CHECK(std::isfinite(ranking_loss(std::vector<double>{1000, 0}, one)));
  CHECK(ranking_loss(std::vector<double>{1, 2}, PairList{}) == 0.0);
  CHECK_THROWS_AS(ranking_loss(std::vector<double>{std::nan(""), 0}, one), NumericsError);

  // Adding a constant to all scores changes nothing.
  const std::vector<double> s{0.3, -1.2, 2.0};
  const std::vector<double> shifted{10.3, 8.8, 12.0};
  const PairList pl{{0, 1}, {2, 0}, {2, 1}};
  CHECK(ranking_loss(s, pl) == doctest::Approx(ranking_loss(shifted, pl)).epsilon(1e-12));
}

TEST_CASE("full objective gradient matches finite differences") {
  std::mt19937_64 gen(21);
  const RoutingTable t = ref::random_table(gen, 4, 3, 5);
  const auto queries = all_indices(4);
  for (HeadInput hi : {HeadInput::joint, HeadInput::concat_only}) {
    for (TrainingObjective kind : {TrainingObjective::ranking, TrainingObjective::mse}) {
      EquiRouterParams p = EquiRouterParams::init(small_hyper(5, 3), hi);
      jitter_biases(p, 3);
      const double lambda = 1e-2;
      const LossFunction loss = [&](std::span<const double> theta, std::span<double> g) {
        EquiRouterParams q = p;
        unflatten(theta, q.parameters());
        if (g.empty()) return objective(q, t, queries, kind, lambda, nullptr);
        EquiRouterParams grad = q.zeros_like();
        const double v = objective(q, t, queries, kind, lambda, &grad);
        const auto flat = flatten(grad.parameters());
        std::copy(flat.begin(), flat.end(), g.begin());
        return v;
      };
      const auto theta = flatten(p.parameters());
      const auto rep = grad_check(loss, theta, 1e-5, 1e-4);
      CAPTURE(rep.worst_coordinate);
      CHECK(rep.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("objective at initialization is near ln 2 per pair") {
  std::mt19937_64 gen(4);
  const RoutingTable t = ref::random_table(gen, 30, 4, 6);
  EquiRouterHyper h = small_hyper(6, 4);
  const EquiRouterParams p = EquiRouterParams::init(h, HeadInput::joint);
  const double v = objective(p, t, all_indices(30), TrainingObjective::ranking, 0.0, nullptr);
  CHECK(v == doctest::Approx(std::log(2.0)).epsilon(0.1));
}

TEST_CASE("training errors and determinism") {
  RoutingTable flat;
  flat.models = {{0, "a", 1}, {1, "b", 1}};
  flat.query_ids = {"x", "y", "z"};
  flat.embeddings = Matrix(3, 2, 1.0);
  flat.perf = Matrix(3, 2, 0.5);
  flat.cost = Matrix(3, 2, 1.0);
  CHECK_THROWS_WITH(train_equirouter(flat, full_split(3), small_hyper(2, 2)), doctest::Contains("no ranking supervision"));

  std::mt19937_64 gen(6);
  const RoutingTable t = ref::random_table(gen, 40, 3, 4);
  EquiRouterHyper h = small_hyper(4, 3);
  h.epochs = 3;
  h.batch_size = 16;
  const auto split = make_split(40, {3, 1, 6}, 42);
  const auto a = train_equirouter(t, split, h);
  const auto b = train_equirouter(t, split, h);
  CHECK(a.params == b.params);
  CHECK(encode_checkpoint(EquiRouter(a.params, "equirouter").to_checkpoint()) ==
        encode_checkpoint(EquiRouter(b.params, "equirouter").to_checkpoint()));
  CHECK(a.log.size() == 4);
  CHECK(a.log.front().epoch == 0);
}

TEST_CASE("separable two-model table is learned") {
  // Model 1 wins when the first coordinate is positive, model 0 otherwise.
  std::mt19937_64 gen(31);
  std::normal_distribution<double> nd;
  const std::size_t n = 200;
  RoutingTable t;
  t.models = {{0, "a", 1}, {1, "b", 1}};
  t.embeddings = Matrix(n, 3);
  t.perf = Matrix(n, 2);
  t.cost = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    t.query_ids.push_back("q" + std::to_string(i));
    for (std::size_t c = 0; c < 3; ++c) t.embeddings(i, c) = nd(gen);
    if (std::abs(t.embeddings(i, 0)) < 0.05) t.embeddings(i, 0) = 0.05;
    const bool right = t.embeddings(i, 0) > 0;
    t.perf(i, 0) = right ? 0.0 : 1.0;
    t.perf(i, 1) = right ? 1.0 : 0.0;
    t.cost(i, 0) = 1.0;
    t.cost(i, 1) = 2.0;
  }
  EquiRouterHyper h = small_hyper(3, 2, 16);
  h.epochs = 150;
  h.batch_size = 32;
  h.learning_rate = 3e-3;
  const auto fit = train_equirouter(t, full_split(n), h);
  CHECK(fit.log.back().train_loss < fit.log.front().train_loss);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = score_all(fit.params, query_row(t, i));
    correct += (s[1] > s[0]) == (t.perf(i, 1) > t.perf(i, 0));
  }
  CHECK(static_cast<double>(correct) / n >= 0.99);
}

TEST_CASE("mse ablation fits constants and memorizes") {
  RoutingTable t;
  t.models = {{0, "a", 1}, {1, "b", 1}, {2, "c", 1}};
  t.query_ids = {"x", "y", "z"};
  t.embeddings = Matrix(3, 2, {1, 0, 0, 1, -1, -1});
  t.perf = Matrix(3, 3, 0.5);
  t.cost = Matrix(3, 3, {1, 2, 3, 1, 2, 3, 1, 2, 3});
  EquiRouterHyper h = small_hyper(2, 3, 16);
  h.epochs = 1500;
  h.batch_size = 3;
  h.learning_rate = 3e-3;
  h.weight_decay = 0.0;
  auto fit = train_mse_ablation(t, full_split(3), h);
  for (std::size_t n = 0; n < 3; ++n) {
    for (double s : score_all(fit.params, query_row(t, n))) CHECK(s == doctest::Approx(0.5).epsilon(0.02));
  }

  t.perf = Matrix(3, 3, {1, 0, 0.5, 0, 1, 0.25, 0.75, 0.5, 0});
  fit = train_mse_ablation(t, full_split(3), h);
  const double mse = objective(fit.params, t, all_indices(3), TrainingObjective::mse, 0.0, nullptr);
  CHECK(mse < 1e-4);
}

TEST_CASE("no-joint ablation head and checkpoint round trip") {
  std::mt19937_64 gen(14);
  const RoutingTable t = ref::random_table(gen, 20, 3, 4);
  EquiRouterHyper h = small_hyper(4, 3);
  h.epochs = 2;
  const auto fit = train_no_joint_ablation(t, full_split(20), h);
  CHECK(fit.params.head_input == HeadInput::concat_only);
  CHECK(fit.params.head.front().in_dim() == 2 * h.hidden);

  for (const char* tag : {"equirouter_nojoint", "mse", "equirouter"}) {
    const EquiRouter r(fit.params, tag);
    const Checkpoint c = decode_checkpoint(encode_checkpoint(r.to_checkpoint()));
    CHECK(c.kind == tag);
    const EquiRouter back = EquiRouter::from_checkpoint(c);
    CHECK(back.params() == fit.params);
    CHECK(back.kind() == tag);
  }
  CHECK_THROWS_AS(EquiRouter(fit.params, "knn"), ValidationError);
}
