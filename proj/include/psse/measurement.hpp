#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "psse/grid.hpp"

namespace psse {

enum class MeasurementKind { Vmag2, Pinj, Qinj, PflowF, QflowF, PflowT, QflowT };

std::string_view kind_name(MeasurementKind kind) noexcept;
MeasurementKind kind_from_name(std::string_view name);
bool is_bus_kind(MeasurementKind kind) noexcept;

struct MeasurementEntry {
  MeasurementKind kind = MeasurementKind::Vmag2;
  std::size_t location = 0;  ///< bus index or branch index, 0-based

  bool operator==(const MeasurementEntry&) const = default;
};

struct MeasurementPlan {
  std::vector<MeasurementEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool operator==(const MeasurementPlan&) const = default;
};

struct PlanOptions {
  bool voltage_magnitudes = true;
  bool forward_flows = true;
  bool terminal_flows = false;
  bool injections = false;
};

/// All |V|^2 plus forwarding-end P/Q flows on in-service branches by default.
MeasurementPlan default_plan(const GridModel& grid, const PlanOptions& opts = {});

/// Throws PlanLocationInvalid when an entry points outside the grid or at an
/// out-of-service branch.
void validate_plan(const GridModel& grid, const MeasurementPlan& plan);

/// `plan/1` JSON; locations are written 1-based.
std::string plan_to_json(const MeasurementPlan& plan);
MeasurementPlan plan_from_json(std::string_view text);

/// z_m = v^T h v for a symmetric 2N x 2N matrix h.
struct QuadraticForm {
  Eigen::SparseMatrix<double> h;
  MeasurementKind kind = MeasurementKind::Vmag2;
  std::size_t location = 0;
};

using FormSet = std::vector<QuadraticForm>;

FormSet build_measurement_matrices(const AdmittanceModel& adm, const MeasurementPlan& plan);

/// Convenience: admittance + validated plan in one call.
FormSet build_measurement_matrices(const GridModel& grid, const MeasurementPlan& plan);

std::size_t state_dim(const FormSet& forms);

Eigen::VectorXd evaluate_measurements(const FormSet& forms, const Eigen::VectorXd& v);
inline Eigen::VectorXd evaluate_measurements(const FormSet& forms, const StateVector& v) {
  return evaluate_measurements(forms, v.values);
}

/// Row m is v^T H_m (half the gradient of v^T H_m v).
Eigen::MatrixXd jacobian_at(const FormSet& forms, const Eigen::VectorXd& v);
inline Eigen::MatrixXd jacobian_at(const FormSet& forms, const StateVector& v) {
  return jacobian_at(forms, v.values);
}

struct MeasurementVector {
  Eigen::VectorXd values;
  std::vector<std::uint8_t> mask;     ///< 1 = available
  Eigen::VectorXd noise_sigmas;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> imputed;  ///< 1 = value filled from a forecast

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
};

/// z + sigma_m g_m with g_m from Rng(seed); sigma_m = sigma_mag for |V|^2 and
/// sigma_flow for every other kind.
MeasurementVector add_gaussian_noise(const Eigen::VectorXd& z, const MeasurementPlan& plan,
                                     double sigma_flow, double sigma_mag, std::uint64_t seed);

}  // namespace psse
