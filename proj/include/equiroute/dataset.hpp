#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "equiroute/tensor.hpp"

namespace equiroute {

struct ModelInfo {
  std::size_t id = 0;
  std::string name;
  /// Currency per token. Table costs are already per-query totals.
  double unit_price = 0.0;

  bool operator==(const ModelInfo&) const = default;
};

/// Offline routing table: per-query embeddings plus performance and cost of every
/// model in the pool on that query.
struct RoutingTable {
  std::vector<ModelInfo> models;
  std::vector<std::string> query_ids;
  Matrix embeddings;  // N x d_q
  Matrix perf;        // N x K
  Matrix cost;        // N x K, strictly positive

  std::size_t num_queries() const { return query_ids.size(); }
  std::size_t num_models() const { return models.size(); }
  std::size_t embed_dim() const { return embeddings.cols(); }

  /// Throws ValidationError naming the offending coordinates.
  void validate() const;

  bool operator==(const RoutingTable&) const = default;
};

/// Reads models.json, queries.jsonl, perf.csv and cost.csv from `dir`.
RoutingTable load_table(const std::filesystem::path& dir);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_real(double v);

/// Writes the four table files; floating-point values round-trip bit-exactly.
void save_table(const RoutingTable& table, const std::filesystem::path& dir);

struct SplitRatio {
  double train = 3.0;
  double valid = 1.0;
  double test = 6.0;

  bool operator==(const SplitRatio&) const = default;
};

/// Parses "3:1:6".
SplitRatio parse_split_ratio(const std::string& text);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  bool operator==(const SplitIndices&) const = default;
};

/// Seeded shuffle, then consecutive slices. Part sizes are floor(n * r_i / sum r),
/// with the remainder handed out one by one to train, valid, test in that order.
/// Each part is returned sorted ascending.
SplitIndices make_split(std::size_t n, const SplitRatio& ratio, std::uint64_t seed);

/// Every query in all three parts; used for training-set evaluation.
SplitIndices full_split(std::size_t n);

std::vector<std::size_t> all_indices(std::size_t n);

void save_split(const SplitIndices& split, const std::filesystem::path& file);
SplitIndices load_split(const std::filesystem::path& file, std::size_t n_queries);

/// Knobs for the synthetic table generator.
struct SynthConfig {
  std::size_t n_queries = 2000;
  std::size_t n_models = 6;
  std::size_t embed_dim = 32;
  /// Share of queries whose best performance is attained by at least two models.
  double tie_fraction = 0.9;
  /// Gap between adjacent performance levels; the top-two margin of untied queries.
  double margin_scale = 1.0;
  /// Ratio between the most and least expensive model's per-token price.
  double cost_spread = 100.0;
  std::uint64_t noise_seed = 0;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

/// Deterministic synthetic table with planted per-query difficulty.
///
/// Queries are standard Gaussian vectors. A hidden unit direction orders them by
/// difficulty: the hardest (1 - tie_fraction) share is solved only by the most
/// expensive model, the rest are split into K-1 bands where band t is solved by
/// every model j >= t (so at least two models tie at the top). On
/// (1 - tie_fraction)/2 of all queries, chosen along a second hidden direction
/// among bands t <= K-3, the most expensive model fails while the tie survives.
/// Unsolved models score max(0, 1 - margin_scale * (t - j)). Cost of model j on
/// query n is tokens(n) * price(j), where tokens is affine in the embedding and
/// price grows geometrically from 1e-6 to cost_spread * 1e-6.
RoutingTable generate_synthetic(const SynthConfig& cfg);

}  // namespace equiroute
