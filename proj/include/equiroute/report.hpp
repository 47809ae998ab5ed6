#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "equiroute/equirouter.hpp"
#include "equiroute/eval.hpp"
#include "equiroute/oracle.hpp"

namespace equiroute {

/// Sentinel written for QNC when the router never reaches the best standalone model.
inline constexpr const char* kQncNotAchieved = "/";

std::string curve_csv(const SweepCurve& curve);
std::string metrics_json(const MetricsSummary& m);
std::string rci_detail_csv(const CollapseReport& report);
std::string noise_csv(const std::vector<NoiseRow>& rows);
std::string margins_csv(const MarginStats& stats);
/// budget, mean_cost, share_model_0..K-1, strongest_share.
std::string callrates_csv(const SweepCurve& curve, std::size_t strongest);
std::string frequencies_csv(const SelectionFrequencies& freq);
std::string train_log_csv(const std::vector<TrainLogRow>& log);

/// Writes `text` to `file`, creating parent directories.
void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace equiroute
