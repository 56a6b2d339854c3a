#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace psse {

using Complex = std::complex<double>;

enum class BusType { Slack, PV, PQ };

/// One bus. Powers are per-unit on the case base, angles in radians.
struct Bus {
  std::size_t index = 0;  ///< contiguous internal index, 0-based
  int original_id = 0;    ///< id as written in the case file
  BusType type = BusType::PQ;
  double pd = 0.0;
  double qd = 0.0;
  double gs = 0.0;
  double bs = 0.0;
  double vm_init = 1.0;
  double va_init = 0.0;

  bool operator==(const Bus&) const = default;
};

struct Branch {
  std::size_t from = 0;  ///< internal bus index
  std::size_t to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap_ratio = 1.0;    ///< 1.0 when the branch is a plain line
  double phase_shift = 0.0;  ///< radians
  bool in_service = true;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  std::size_t bus = 0;
  double pg = 0.0;  ///< per-unit
  double qg = 0.0;
  double vset = 1.0;
  bool in_service = true;

  bool operator==(const Generator&) const = default;
};

struct GridModel {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> gens;

  std::size_t bus_count() const noexcept { return buses.size(); }
  std::size_t state_dim() const noexcept { return 2 * buses.size(); }
  std::size_t slack_index() const;

  bool operator==(const GridModel&) const = default;
};

/// Rectangular voltage state [v_1^r, v_1^i, ..., v_N^r, v_N^i] in per-unit.
struct StateVector {
  Eigen::VectorXd values;

  StateVector() = default;
  explicit StateVector(Eigen::VectorXd v) : values(std::move(v)) {}

  static StateVector flat(std::size_t buses);
  static StateVector from_polar(const Eigen::VectorXd& vm, const Eigen::VectorXd& va);

  std::size_t bus_count() const noexcept { return static_cast<std::size_t>(values.size()) / 2; }
  Complex at(std::size_t bus) const { return {values[2 * bus], values[2 * bus + 1]}; }
  Eigen::VectorXd magnitudes() const;
  Eigen::VectorXd angles() const;
};

/// Per-branch two-port admittances: [I_f; I_t] = [yff yft; ytf ytt] [V_f; V_t].
struct BranchAdmittance {
  std::size_t from = 0;
  std::size_t to = 0;
  bool in_service = false;
  Complex yff;
  Complex yft;
  Complex ytf;
  Complex ytt;
};

struct AdmittanceModel {
  std::size_t bus_count = 0;
  Eigen::SparseMatrix<Complex> ybus;
  std::vector<BranchAdmittance> branch;  ///< zero for out-of-service branches
  std::vector<Complex> shunt;            ///< per-bus shunt admittance
};

/// Parses the MATPOWER case subset (baseMVA, bus, branch, gen). Unsupported
/// fields are skipped and reported through `warnings` when given.
GridModel parse_matpower_case(std::string_view text, std::vector<std::string>* warnings = nullptr);
GridModel load_matpower_case(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Loads either a MATPOWER `.m` file or a `grid/1` JSON file.
GridModel load_grid(const std::string& path);

std::string write_matpower_case(const GridModel& grid, std::string_view name = "mpc");

/// Normalized `grid/1` JSON.
std::string grid_to_json(const GridModel& grid);
GridModel grid_from_json(std::string_view text);
/// SHA-256 of the normalized grid JSON, lowercase hex.
std::string grid_fingerprint(const GridModel& grid);

void validate_grid(const GridModel& grid);

AdmittanceModel build_admittance(const GridModel& grid);

/// Net complex power injected at every bus for the given state.
Eigen::VectorXcd bus_injections(const AdmittanceModel& adm, const StateVector& v);

enum class PowerFlowInit { CaseFile, Flat, Given };

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 20;
  PowerFlowInit init = PowerFlowInit::CaseFile;
  std::optional<StateVector> start;  ///< used with PowerFlowInit::Given
};

struct PowerFlowSolution {
  StateVector state;
  int iterations = 0;
  double mismatch = 0.0;  ///< infinity norm over the solved equations
};

/// Newton-Raphson in polar coordinates. Throws Diverged / SingularJacobian.
PowerFlowSolution solve_power_flow(const GridModel& grid, const PowerFlowOptions& opts = {});
PowerFlowSolution solve_power_flow(const GridModel& grid, const AdmittanceModel& adm,
                                   const PowerFlowOptions& opts);

/// Specified net injection (generation minus demand) per bus.
Eigen::VectorXcd scheduled_injections(const GridModel& grid);

/// Reference bus plus its known angle; pins the global phase of a state.
struct AngleReference {
  std::size_t bus = 0;
  double angle = 0.0;
};

AngleReference slack_reference(const GridModel& grid);

}  // namespace psse
