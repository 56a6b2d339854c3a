#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace psse {

/// Metrics of one method aggregated over runs (one run per seed).
struct MethodMetrics {
  std::string name;
  std::vector<double> rmse_runs;
  Eigen::VectorXd instance_rmse;    ///< per test instance, first run; may be empty
  Eigen::VectorXd export_estimate;  ///< state at the export instance, first run; may be empty
  double train_seconds = 0.0;       ///< timing.json only
  double infer_seconds_per_sample = 0.0;

  double rmse_mean() const;
  /// Population standard deviation over runs.
  double rmse_std() const;
};

/// Deterministic content goes to report.json; wall-clock figures go to the
/// separate timing.json so that reports of equal seeds are byte-identical.
struct RunReport {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<MethodMetrics> methods;
  std::optional<Eigen::VectorXd> export_truth;  ///< 2N ground truth at the export instance
  long export_instance = 0;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::string> artifacts;
};

std::string report_json(const RunReport& report);
std::string timing_json(const RunReport& report);

/// Writes report.json, timing.json, instances.csv (per-instance RMSE per
/// method) and, when export_truth is set, buses.csv (per-bus magnitude and
/// angle errors at the export instance). Throws IoError.
void emit_report(const RunReport& report, const std::string& out_dir);

}  // namespace psse
