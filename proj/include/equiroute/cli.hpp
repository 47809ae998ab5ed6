#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "equiroute/dataset.hpp"
#include "equiroute/equirouter.hpp"
#include "equiroute/eval.hpp"
#include "equiroute/regressor.hpp"
#include "equiroute/router.hpp"

namespace equiroute {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2, kExitThreshold = 3 };

/// Metric bounds checked by `sweep`; a violated bound makes the command exit with 3.
struct Thresholds {
  std::optional<double> min_nauc;
  std::optional<double> min_peak_score;
  std::optional<double> max_rci;
  std::optional<double> max_qnc_relative;
};

struct ExperimentConfig {
  std::optional<std::filesystem::path> table;
  SynthConfig synth;
  bool synth_keys_given = false;

  SplitRatio split_ratio;
  std::uint64_t split_seed = 42;

  std::string router = "equirouter";
  std::uint64_t seed = 42;
  EquiRouterHyper network;
  RegressorHyper mlp;
  RegressorHyper cost;
  std::size_t knn_k = 50;

  CostSource cost_source = CostSource::predicted;
  std::size_t grid_points = kDefaultGridPoints;
  std::filesystem::path out = "out";
  std::optional<std::filesystem::path> checkpoint;
  Thresholds thresholds;

  std::vector<double> noise_sigmas{0.0, 0.05, 0.1, 0.2, 0.4};
  std::vector<double> margin_thresholds{0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0};
  /// Budget for margin and noise diagnostics; +inf admits every model.
  double diagnose_budget = std::numeric_limits<double>::infinity();
  double mc_sigma = 0.1;
  std::size_t mc_trials = 100000;

  /// Applies one documented key; unknown keys and malformed values throw.
  void set(const std::string& key, const std::string& value);
  /// Cross-field checks; run before any command touches the filesystem.
  void validate() const;
};

/// Flat `key = value` text; `#` starts a comment, blank lines are ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);

/// Every config key with a one-line description, in documentation order.
const std::vector<std::pair<std::string, std::string>>& config_keys();

/// Table named by `table`, or the synthetic table the config describes.
RoutingTable config_table(const ExperimentConfig& cfg);
/// `split.json` beside the table when present, otherwise the configured split.
SplitIndices config_split(const ExperimentConfig& cfg, const RoutingTable& table);

struct TrainedRouter {
  std::unique_ptr<Router> router;
  std::vector<TrainLogRow> log;
};

/// Trains the configured router kind on the train part of `split`.
TrainedRouter train_router(const ExperimentConfig& cfg, const RoutingTable& table, const SplitIndices& split);

struct SynthSummary {
  std::size_t n_queries = 0;
  std::size_t n_models = 0;
  double tie_rate = 0.0;
  double cost_ratio = 0.0;
};

SynthSummary cmd_synth(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
/// Returns the metrics; throws ThresholdFailure after writing outputs when a bound is violated.
MetricsSummary cmd_sweep(const ExperimentConfig& cfg);
void cmd_diagnose(const ExperimentConfig& cfg);
MetricsSummary cmd_pipeline(const ExperimentConfig& cfg);

class ThresholdFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace equiroute
