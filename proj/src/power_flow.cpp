#include <cmath>

#include <Eigen/LU>

#include "psse/error.hpp"
#include "psse/grid.hpp"

namespace psse {

namespace {

// Voltage magnitude the bus is held at when it is voltage-controlled.
double setpoint_magnitude(const Bus& bus) { return bus.vm_init; }

}  // namespace

PowerFlowSolution solve_power_flow(const GridModel& grid, const PowerFlowOptions& opts) {
  return solve_power_flow(grid, build_admittance(grid), opts);
}

PowerFlowSolution solve_power_flow(const GridModel& grid, const AdmittanceModel& adm,
                                   const PowerFlowOptions& opts) {
  if (!(opts.tol > 0.0)) throw Error(Errc::InvalidArgument, "power-flow tol must be positive");
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  const std::size_t slack = grid.slack_index();

  Eigen::VectorXd vm(n);
  Eigen::VectorXd va(n);
  switch (opts.init) {
    case PowerFlowInit::CaseFile:
      for (const auto& b : grid.buses) {
        vm[b.index] = b.vm_init;
        va[b.index] = b.va_init;
      }
      break;
    case PowerFlowInit::Flat:
      for (const auto& b : grid.buses) {
        vm[b.index] = b.type == BusType::PQ ? 1.0 : setpoint_magnitude(b);
        va[b.index] = 0.0;
      }
      va[slack] = grid.buses[slack].va_init;
      break;
    case PowerFlowInit::Given: {
      if (!opts.start) throw Error(Errc::InvalidArgument, "PowerFlowInit::Given without a start state");
      require_dims(opts.start->bus_count() == grid.bus_count(), "start state dimension");
      vm = opts.start->magnitudes();
      va = opts.start->angles();
      for (const auto& b : grid.buses) {
        if (b.type != BusType::PQ) vm[b.index] = setpoint_magnitude(b);
      }
      va[slack] = grid.buses[slack].va_init;
      break;
    }
  }

  std::vector<Eigen::Index> pvpq;
  std::vector<Eigen::Index> pq;
  for (const auto& b : grid.buses) {
    if (b.type != BusType::Slack) pvpq.push_back(static_cast<Eigen::Index>(b.index));
    if (b.type == BusType::PQ) pq.push_back(static_cast<Eigen::Index>(b.index));
  }
  const auto npvpq = static_cast<Eigen::Index>(pvpq.size());
  const auto npq = static_cast<Eigen::Index>(pq.size());

  const Eigen::VectorXcd s_spec = scheduled_injections(grid);
  const Eigen::MatrixXcd ybus = Eigen::MatrixXcd(adm.ybus);

  Eigen::VectorXcd volt(n);
  auto refresh_voltage = [&] {
    for (Eigen::Index i = 0; i < n; ++i) volt[i] = std::polar(vm[i], va[i]);
  };
  refresh_voltage();

  Eigen::VectorXd mismatch(npvpq + npq);
  auto evaluate_mismatch = [&]() -> double {
    const Eigen::VectorXcd current = ybus * volt;
    const Eigen::VectorXcd s = volt.cwiseProduct(current.conjugate()) - s_spec;
    for (Eigen::Index k = 0; k < npvpq; ++k) mismatch[k] = s[pvpq[k]].real();
    for (Eigen::Index k = 0; k < npq; ++k) mismatch[npvpq + k] = s[pq[k]].imag();
    return mismatch.size() ? mismatch.cwiseAbs().maxCoeff() : 0.0;
  };

  PowerFlowSolution sol;
  double norm = evaluate_mismatch();
  int iter = 0;
  while (norm > opts.tol) {
    if (!std::isfinite(norm)) throw Error(Errc::Diverged, "power-flow mismatch became non-finite");
    if (iter >= opts.max_iter) {
      throw Error(Errc::Diverged, "power flow did not reach tol " + std::to_string(opts.tol) +
                                      " after " + std::to_string(iter) +
                                      " iterations (mismatch " + std::to_string(norm) + ")");
    }
    const Eigen::VectorXcd current = ybus * volt;
    Eigen::VectorXcd vnorm(n);
    for (Eigen::Index i = 0; i < n; ++i) vnorm[i] = volt[i] / std::abs(volt[i]);
    // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    Eigen::MatrixXcd ds_dvm = volt.asDiagonal() * (ybus * vnorm.asDiagonal()).conjugate();
    ds_dvm.diagonal() += current.conjugate().cwiseProduct(vnorm);
    Eigen::MatrixXcd ds_dva = -(volt.asDiagonal() * (ybus * volt.asDiagonal()).conjugate());
    ds_dva.diagonal() += volt.cwiseProduct(current.conjugate());
    ds_dva *= Complex(0.0, 1.0);

    Eigen::MatrixXd jac(npvpq + npq, npvpq + npq);
    for (Eigen::Index r = 0; r < npvpq; ++r) {
      for (Eigen::Index c = 0; c < npvpq; ++c) jac(r, c) = ds_dva(pvpq[r], pvpq[c]).real();
      for (Eigen::Index c = 0; c < npq; ++c) jac(r, npvpq + c) = ds_dvm(pvpq[r], pq[c]).real();
    }
    for (Eigen::Index r = 0; r < npq; ++r) {
      for (Eigen::Index c = 0; c < npvpq; ++c) jac(npvpq + r, c) = ds_dva(pq[r], pvpq[c]).imag();
      for (Eigen::Index c = 0; c < npq; ++c) jac(npvpq + r, npvpq + c) = ds_dvm(pq[r], pq[c]).imag();
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (!(lu.rcond() > 1e-14)) throw Error(Errc::SingularJacobian, "power-flow Jacobian is singular");
    const Eigen::VectorXd dx = lu.solve(-mismatch);
    for (Eigen::Index k = 0; k < npvpq; ++k) va[pvpq[k]] += dx[k];
    for (Eigen::Index k = 0; k < npq; ++k) vm[pq[k]] += dx[npvpq + k];
    refresh_voltage();
    ++iter;
    norm = evaluate_mismatch();
  }

  sol.state = StateVector::from_polar(vm, va);
  sol.iterations = iter;
  sol.mismatch = norm;
  return sol;
}

}  // namespace psse
