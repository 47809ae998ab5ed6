#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "equiroute/dataset.hpp"
#include "equiroute/rng.hpp"

namespace equiroute {

namespace {

constexpr double kBasePrice = 1e-6;
constexpr double kBaseTokens = 1000.0;
constexpr double kTokenSlope = 0.1;

// Random unit direction, orthogonal to `against` when the dimension allows it.
std::vector<double> hidden_direction(Rng& rng, std::size_t dim,
                                     const std::vector<std::vector<double>>& against) {
  std::vector<double> w(dim);
  for (auto& v : w) v = rng.gaussian();
  std::vector<double> raw = w;
  for (const auto& a : against) {
    const double dot = std::inner_product(w.begin(), w.end(), a.begin(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) w[i] -= dot * a[i];
  }
  double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
  if (norm < 1e-8) {
    w = raw;
    norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
  }
  for (auto& v : w) v /= norm;
  return w;
}

std::vector<std::size_t> order_by(const std::vector<double>& key, std::vector<std::size_t> idx) {
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return idx;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_queries < 1) throw ValidationError("synth: n_queries must be positive");
  if (n_models < 2) throw ValidationError("synth: n_models must be >= 2");
  if (embed_dim < 1) throw ValidationError("synth: embed_dim must be positive");
  if (!(tie_fraction >= 0.0 && tie_fraction <= 1.0)) {
    throw ValidationError("synth: tie_fraction must lie in [0,1]");
  }
  if (!(margin_scale > 0.0) || !std::isfinite(margin_scale)) {
    throw ValidationError("synth: margin_scale must be positive");
  }
  if (!(cost_spread > 0.0) || !std::isfinite(cost_spread)) {
    throw ValidationError("synth: cost_spread must be positive");
  }
}

RoutingTable generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_queries;
  const std::size_t k = cfg.n_models;
  const std::size_t d = cfg.embed_dim;

  RoutingTable t;
  for (std::size_t j = 0; j < k; ++j) {
    const double frac = k > 1 ? static_cast<double>(j) / static_cast<double>(k - 1) : 0.0;
    t.models.push_back({j, "model-" + std::to_string(j), kBasePrice * std::pow(cfg.cost_spread, frac)});
  }

  Rng embed_rng(Rng::derive(cfg.noise_seed, 1));
  t.embeddings = Matrix(n, d);
  for (auto& v : t.embeddings.values()) v = embed_rng.gaussian();

  Rng dir_rng(Rng::derive(cfg.noise_seed, 2));
  std::vector<std::vector<double>> dirs;
  dirs.push_back(hidden_direction(dir_rng, d, dirs));  // difficulty
  dirs.push_back(hidden_direction(dir_rng, d, dirs));  // strongest-model failure
  dirs.push_back(hidden_direction(dir_rng, d, dirs));  // token count

  std::vector<double> difficulty(n), failure(n), tokens(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = t.embeddings.row(i);
    difficulty[i] = std::inner_product(x.begin(), x.end(), dirs[0].begin(), 0.0);
    failure[i] = std::inner_product(x.begin(), x.end(), dirs[1].begin(), 0.0);
    const double proj = std::inner_product(x.begin(), x.end(), dirs[2].begin(), 0.0);
    tokens[i] = kBaseTokens * std::max(0.05, 1.0 + kTokenSlope * proj);
  }

  // Band t: models j >= t solve the query. Tied queries occupy bands 0..K-2.
  const auto by_difficulty = order_by(difficulty, all_indices(n));
  const auto n_tied = static_cast<std::size_t>(std::llround(cfg.tie_fraction * static_cast<double>(n)));
  std::vector<std::size_t> band(n, k - 1);
  for (std::size_t r = 0; r < n_tied; ++r) {
    band[by_difficulty[r]] = r * (k - 1) / n_tied;
  }

  std::vector<char> strongest_fails(n, 0);
  if (k >= 3) {
    std::vector<std::size_t> eligible;
    for (std::size_t r = 0; r < n_tied; ++r) {
      if (band[by_difficulty[r]] + 3 <= k) eligible.push_back(by_difficulty[r]);
    }
    std::sort(eligible.begin(), eligible.end());
    eligible = order_by(failure, eligible);
    const auto n_fail = std::min<std::size_t>(
        eligible.size(),
        static_cast<std::size_t>(std::llround(0.5 * (1.0 - cfg.tie_fraction) * static_cast<double>(n))));
    for (std::size_t r = 0; r < n_fail; ++r) strongest_fails[eligible[eligible.size() - 1 - r]] = 1;
  }

  t.perf = Matrix(n, k);
  t.cost = Matrix(n, k);
  t.query_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "q%06zu", i);
    t.query_ids.emplace_back(id);
    for (std::size_t j = 0; j < k; ++j) {
      double a = 1.0;
      if (j < band[i]) {
        a = std::max(0.0, 1.0 - cfg.margin_scale * static_cast<double>(band[i] - j));
      } else if (j == k - 1 && strongest_fails[i]) {
        a = std::max(0.0, 1.0 - cfg.margin_scale);
      }
      t.perf(i, j) = a;
      t.cost(i, j) = tokens[i] * t.models[j].unit_price;
    }
  }
  t.validate();
  return t;
}

}  // namespace equiroute
