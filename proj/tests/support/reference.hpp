#pragma once

// Straight-line reimplementations used as test oracles. They deliberately avoid
// the library's helpers so a shared bug cannot hide on both sides.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "equiroute/dataset.hpp"
#include "equiroute/equirouter.hpp"

namespace ref {

using equiroute::Matrix;
using equiroute::RoutingTable;

/// Exhaustive minimum of (-a, c, j) over models with c <= budget; when none fits,
/// minimum of (c, j) over all models.
inline std::size_t lexicographic_oracle(const std::vector<double>& a, const std::vector<double>& c, double budget) {
  std::vector<std::tuple<double, double, std::size_t>> keys;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (c[j] <= budget) keys.emplace_back(-a[j], c[j], j);
  }
  if (keys.empty()) {
    std::vector<std::pair<double, std::size_t>> cheap;
    for (std::size_t j = 0; j < c.size(); ++j) cheap.emplace_back(c[j], j);
    return std::min_element(cheap.begin(), cheap.end())->second;
  }
  return std::get<2>(*std::min_element(keys.begin(), keys.end()));
}

/// Per-query collapse score by direct case analysis.
inline double collapse_score(const std::vector<double>& a, const std::vector<double>& c, std::size_t m) {
  double best = a[0];
  for (double v : a) best = v > best ? v : best;
  if (a[m] < best) return 1.0;
  int cheaper = 0;
  int matching = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (c[j] < c[m]) {
      cheaper += 1;
      if (a[j] >= a[m]) matching += 1;
    }
  }
  if (cheaper == 0) return 0.0;
  return static_cast<double>(matching) / static_cast<double>(cheaper);
}

inline double softplus_neg(double d) { return std::log1p(std::exp(-d)); }

inline double ranking_loss(const std::vector<double>& s, const std::vector<double>& a, const std::vector<double>& c) {
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (a[i] > a[j] || (a[i] == a[j] && c[i] < c[j])) {
        total += softplus_neg(s[i] - s[j]);
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : total / count;
}

inline std::vector<double> dense(const equiroute::DenseLayer& l, const std::vector<double>& x) {
  std::vector<double> y(l.weight.rows());
  for (std::size_t o = 0; o < y.size(); ++o) {
    double acc = l.bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) acc += l.weight(o, i) * x[i];
    y[o] = (l.activation == equiroute::Activation::relu && acc < 0.0) ? 0.0 : acc;
  }
  return y;
}

/// Trunk, FiLM, projection, joint feature and head written out in loops.
inline std::vector<double> scores(const equiroute::EquiRouterParams& p, const std::vector<double>& q) {
  std::vector<double> z = q;
  for (const auto& layer : p.trunk) z = dense(layer, z);
  const std::size_t d = z.size();
  std::vector<double> out;
  for (std::size_t j = 0; j < p.model_embeddings.rows(); ++j) {
    std::vector<double> m(p.model_embeddings.cols());
    for (std::size_t t = 0; t < m.size(); ++t) m[t] = p.model_embeddings(j, t);
    const std::vector<double> gb = dense(p.film, m);
    const std::vector<double> e = dense(p.model_proj, m);
    std::vector<double> zj(d);
    for (std::size_t t = 0; t < d; ++t) zj[t] = gb[t] * z[t] + gb[d + t];
    std::vector<double> h(zj);
    h.insert(h.end(), e.begin(), e.end());
    if (p.head_input == equiroute::HeadInput::joint) {
      for (std::size_t t = 0; t < d; ++t) h.push_back(zj[t] * e[t]);
      for (std::size_t t = 0; t < d; ++t) h.push_back(std::fabs(zj[t] - e[t]));
    }
    for (const auto& layer : p.head) h = dense(layer, h);
    out.push_back(h[0]);
  }
  return out;
}

/// Random valid table from std::mt19937_64 (independent of the library PRNG).
/// Performance values come from a small discrete set so ties are common.
inline RoutingTable random_table(std::mt19937_64& gen, std::size_t n, std::size_t k, std::size_t d,
                                 bool distinct_costs = false) {
  RoutingTable t;
  for (std::size_t j = 0; j < k; ++j) t.models.push_back({j, "m" + std::to_string(j), 1.0});
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> level(0, 4);
  std::uniform_int_distribution<int> price(1, 6);
  t.embeddings = Matrix(n, d);
  t.perf = Matrix(n, k);
  t.cost = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    t.query_ids.push_back("q" + std::to_string(i));
    for (std::size_t c = 0; c < d; ++c) t.embeddings(i, c) = normal(gen);
    for (std::size_t j = 0; j < k; ++j) {
      t.perf(i, j) = level(gen) / 4.0;
      t.cost(i, j) = distinct_costs ? static_cast<double>(j + 1) + 0.001 * price(gen) * (i % 3)
                                    : static_cast<double>(price(gen));
    }
  }
  return t;
}

inline std::vector<double> row(const Matrix& m, std::size_t r) {
  return {m.row(r).begin(), m.row(r).end()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("equiroute_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace ref
