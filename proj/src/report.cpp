#include "equiroute/report.hpp"

#include <fstream>

#include "json.hpp"

#include "equiroute/dataset.hpp"

namespace equiroute {

std::string curve_csv(const SweepCurve& curve) {
  std::string out = "budget,mean_cost,mean_perf";
  const std::size_t k = curve.points.empty() ? 0 : curve.points.front().calls.size();
  for (std::size_t j = 0; j < k; ++j) out += ",calls_model_" + std::to_string(j);
  out += ",clamped\n";
  for (const auto& p : curve.points) {
    out += format_real(p.budget) + ',' + format_real(p.mean_cost) + ',' + format_real(p.mean_perf);
    for (std::size_t c : p.calls) out += ',' + std::to_string(c);
    out += ',' + std::to_string(p.clamped) + '\n';
  }
  return out;
}

std::string metrics_json(const MetricsSummary& m) {
  nlohmann::ordered_json j;
  j["nauc"] = m.nauc ? nlohmann::ordered_json(*m.nauc) : nlohmann::ordered_json(nullptr);
  j["peak_score"] = m.peak_score;
  j["peak_cost"] = m.peak_cost;
  j["qnc"] = m.qnc.cost ? nlohmann::ordered_json(*m.qnc.cost) : nlohmann::ordered_json(kQncNotAchieved);
  j["qnc_relative"] = m.qnc.relative ? nlohmann::ordered_json(*m.qnc.relative) : nlohmann::ordered_json(kQncNotAchieved);
  j["rci"] = m.rci;
  j["a_max"] = m.standalone.a_max;
  j["x_max"] = m.standalone.x_max;
  j["j_max"] = m.standalone.j_max;
  return j.dump(2) + '\n';
}

std::string rci_detail_csv(const CollapseReport& report) {
  std::string out = "n,m_n,a_sel,a_star,X_n,K_n,s_n\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.n) + ',' + std::to_string(r.selected) + ',' + format_real(r.a_selected) + ',' +
           format_real(r.a_star) + ',' + std::to_string(r.cheaper) + ',' + std::to_string(r.cheaper_good) + ',' +
           format_real(r.score) + '\n';
  }
  return out;
}

std::string noise_csv(const std::vector<NoiseRow>& rows) {
  std::string out = "sigma,accuracy,strongest_share\n";
  for (const auto& r : rows) {
    out += format_real(r.sigma) + ',' + format_real(r.accuracy) + ',' + format_real(r.strongest_share) + '\n';
  }
  return out;
}

std::string margins_csv(const MarginStats& stats) {
  std::string out = "threshold,cdf\n";
  for (const auto& [eps, cdf] : stats.cdf_at) out += format_real(eps) + ',' + format_real(cdf) + '\n';
  return out;
}

std::string callrates_csv(const SweepCurve& curve, std::size_t strongest) {
  const Matrix shares = call_rate_curve(curve);
  std::string out = "budget,mean_cost";
  for (std::size_t j = 0; j < shares.cols(); ++j) out += ",share_model_" + std::to_string(j);
  out += ",strongest_share\n";
  for (std::size_t t = 0; t < shares.rows(); ++t) {
    out += format_real(curve.points[t].budget) + ',' + format_real(curve.points[t].mean_cost);
    for (std::size_t j = 0; j < shares.cols(); ++j) out += ',' + format_real(shares(t, j));
    out += ',' + format_real(strongest < shares.cols() ? shares(t, strongest) : 0.0) + '\n';
  }
  return out;
}

std::string frequencies_csv(const SelectionFrequencies& freq) {
  std::string out = "model,frequency,stderr\n";
  for (std::size_t j = 0; j < freq.frequency.size(); ++j) {
    out += std::to_string(j) + ',' + format_real(freq.frequency[j]) + ',' + format_real(freq.standard_error[j]) + '\n';
  }
  return out;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "epoch,train_loss,valid_loss\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + ',' + format_real(r.train_loss) + ',' + format_real(r.valid_loss) + '\n';
  }
  return out;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + file.string());
}

}  // namespace equiroute
