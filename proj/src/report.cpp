#include "psse/report.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "psse/error.hpp"
#include "psse/util.hpp"

namespace psse {

namespace {

double magnitude(const Eigen::VectorXd& v, Eigen::Index bus) { return std::hypot(v[2 * bus], v[2 * bus + 1]); }

double angle_deg(const Eigen::VectorXd& v, Eigen::Index bus) {
  return std::atan2(v[2 * bus + 1], v[2 * bus]) * 180.0 / std::numbers::pi;
}

}  // namespace

double MethodMetrics::rmse_mean() const {
  if (rmse_runs.empty()) return 0.0;
  double sum = 0.0;
  for (double r : rmse_runs) sum += r;
  return sum / static_cast<double>(rmse_runs.size());
}

double MethodMetrics::rmse_std() const {
  if (rmse_runs.empty()) return 0.0;
  const double mean = rmse_mean();
  double sq = 0.0;
  for (double r : rmse_runs) sq += (r - mean) * (r - mean);
  return std::sqrt(sq / static_cast<double>(rmse_runs.size()));
}

std::string report_json(const RunReport& report) {
  nlohmann::json j;
  j["schema"] = "report/1";
  j["command"] = report.command;
  j["config"] = report.config;
  j["seeds"] = report.seeds;
  nlohmann::json methods = nlohmann::json::array();
  for (const MethodMetrics& m : report.methods) {
    methods.push_back({{"name", m.name},
                       {"runs", m.rmse_runs.size()},
                       {"rmse_mean", m.rmse_mean()},
                       {"rmse_std", m.rmse_std()},
                       {"rmse_runs", m.rmse_runs}});
  }
  j["methods"] = methods;
  j["export_instance"] = report.export_instance;
  j["extra"] = report.extra;
  j["artifacts"] = report.artifacts;
  return j.dump(2) + "\n";
}

std::string timing_json(const RunReport& report) {
  nlohmann::json j;
  j["schema"] = "timing/1";
  j["command"] = report.command;
  nlohmann::json methods = nlohmann::json::array();
  for (const MethodMetrics& m : report.methods) {
    methods.push_back({{"name", m.name},
                       {"train_seconds", m.train_seconds},
                       {"infer_seconds_per_sample", m.infer_seconds_per_sample}});
  }
  j["methods"] = methods;
  return j.dump(2) + "\n";
}

void emit_report(const RunReport& report, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + out_dir + ": " + ec.message());
  const std::filesystem::path dir(out_dir);
  write_text_file((dir / "report.json").string(), report_json(report));
  write_text_file((dir / "timing.json").string(), timing_json(report));

  Eigen::Index rows = 0;
  for (const MethodMetrics& m : report.methods) rows = std::max(rows, m.instance_rmse.size());
  std::string csv = "instance";
  for (const MethodMetrics& m : report.methods) csv += "," + m.name;
  csv += "\n";
  for (Eigen::Index i = 0; i < rows; ++i) {
    csv += std::to_string(i);
    for (const MethodMetrics& m : report.methods) {
      csv += ",";
      if (i < m.instance_rmse.size()) csv += format_double(m.instance_rmse[i]);
    }
    csv += "\n";
  }
  write_text_file((dir / "instances.csv").string(), csv);

  if (!report.export_truth) return;
  const Eigen::VectorXd& truth = *report.export_truth;
  const Eigen::Index buses = truth.size() / 2;
  std::string bus_csv = "bus,vm_true,va_true_deg";
  for (const MethodMetrics& m : report.methods) {
    if (m.export_estimate.size() == truth.size()) {
      bus_csv += "," + m.name + "_vm," + m.name + "_va_deg," + m.name + "_vm_err," + m.name + "_va_err_deg";
    }
  }
  bus_csv += "\n";
  for (Eigen::Index b = 0; b < buses; ++b) {
    const double vm = magnitude(truth, b);
    const double va = angle_deg(truth, b);
    bus_csv += std::to_string(b + 1) + "," + format_double(vm) + "," + format_double(va);
    for (const MethodMetrics& m : report.methods) {
      if (m.export_estimate.size() != truth.size()) continue;
      const double em = magnitude(m.export_estimate, b);
      const double ea = angle_deg(m.export_estimate, b);
      bus_csv += "," + format_double(em) + "," + format_double(ea) + "," + format_double(em - vm) + "," +
                 format_double(ea - va);
    }
    bus_csv += "\n";
  }
  write_text_file((dir / "buses.csv").string(), bus_csv);
}

}  // namespace psse
