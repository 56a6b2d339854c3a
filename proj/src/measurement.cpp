#include "psse/measurement.hpp"

#include "json.hpp"
#include "psse/error.hpp"
#include "psse/rng.hpp"

namespace psse {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

enum class Part { Active, Reactive };

// Adds the coefficients of Re/Im{V_n conj(a V_k)} to the (non-symmetric)
// coefficient list, with e = real and f = imaginary coordinates.
void add_power_term(Triplets& t, std::size_t n, std::size_t k, Complex a, Part part) {
  const auto en = static_cast<int>(2 * n);
  const auto fn = en + 1;
  const auto ek = static_cast<int>(2 * k);
  const auto fk = ek + 1;
  const double g = a.real();
  const double b = a.imag();
  if (part == Part::Active) {
    t.emplace_back(en, ek, g);
    t.emplace_back(en, fk, -b);
    t.emplace_back(fn, ek, b);
    t.emplace_back(fn, fk, g);
  } else {
    t.emplace_back(fn, ek, g);
    t.emplace_back(fn, fk, -b);
    t.emplace_back(en, ek, -b);
    t.emplace_back(en, fk, -g);
  }
}

Eigen::SparseMatrix<double> symmetrized(const Triplets& t, Eigen::Index dim) {
  Eigen::SparseMatrix<double> a(dim, dim);
  a.setFromTriplets(t.begin(), t.end());
  Eigen::SparseMatrix<double> at = a.transpose();
  Eigen::SparseMatrix<double> h = 0.5 * (a + at);
  h.prune(0.0);
  h.makeCompressed();
  return h;
}

void check_entry(const AdmittanceModel& adm, const MeasurementEntry& e, std::size_t m) {
  if (is_bus_kind(e.kind)) {
    if (e.location >= adm.bus_count) {
      throw Error(Errc::PlanLocationInvalid,
                  "entry " + std::to_string(m + 1) + " references bus " + std::to_string(e.location + 1));
    }
  } else if (e.location >= adm.branch.size() || !adm.branch[e.location].in_service) {
    throw Error(Errc::PlanLocationInvalid, "entry " + std::to_string(m + 1) +
                                               " references missing or out-of-service branch " +
                                               std::to_string(e.location + 1));
  }
}

}  // namespace

std::string_view kind_name(MeasurementKind kind) noexcept {
  switch (kind) {
    case MeasurementKind::Vmag2: return "Vmag2";
    case MeasurementKind::Pinj: return "Pinj";
    case MeasurementKind::Qinj: return "Qinj";
    case MeasurementKind::PflowF: return "Pflow_f";
    case MeasurementKind::QflowF: return "Qflow_f";
    case MeasurementKind::PflowT: return "Pflow_t";
    case MeasurementKind::QflowT: return "Qflow_t";
  }
  return "Vmag2";
}

MeasurementKind kind_from_name(std::string_view name) {
  for (auto k : {MeasurementKind::Vmag2, MeasurementKind::Pinj, MeasurementKind::Qinj,
                 MeasurementKind::PflowF, MeasurementKind::QflowF, MeasurementKind::PflowT,
                 MeasurementKind::QflowT}) {
    if (kind_name(k) == name) return k;
  }
  throw Error(Errc::ParseError, "unknown measurement kind '" + std::string(name) + "'");
}

bool is_bus_kind(MeasurementKind kind) noexcept {
  return kind == MeasurementKind::Vmag2 || kind == MeasurementKind::Pinj ||
         kind == MeasurementKind::Qinj;
}

MeasurementPlan default_plan(const GridModel& grid, const PlanOptions& opts) {
  MeasurementPlan plan;
  const std::size_t n = grid.bus_count();
  if (opts.voltage_magnitudes) {
    for (std::size_t i = 0; i < n; ++i) plan.entries.push_back({MeasurementKind::Vmag2, i});
  }
  if (opts.injections) {
    for (std::size_t i = 0; i < n; ++i) plan.entries.push_back({MeasurementKind::Pinj, i});
    for (std::size_t i = 0; i < n; ++i) plan.entries.push_back({MeasurementKind::Qinj, i});
  }
  auto add_flows = [&](MeasurementKind kind) {
    for (std::size_t k = 0; k < grid.branches.size(); ++k) {
      if (grid.branches[k].in_service) plan.entries.push_back({kind, k});
    }
  };
  if (opts.forward_flows) {
    add_flows(MeasurementKind::PflowF);
    add_flows(MeasurementKind::QflowF);
  }
  if (opts.terminal_flows) {
    add_flows(MeasurementKind::PflowT);
    add_flows(MeasurementKind::QflowT);
  }
  return plan;
}

void validate_plan(const GridModel& grid, const MeasurementPlan& plan) {
  for (std::size_t m = 0; m < plan.size(); ++m) {
    const auto& e = plan.entries[m];
    const bool ok = is_bus_kind(e.kind)
                        ? e.location < grid.bus_count()
                        : e.location < grid.branches.size() && grid.branches[e.location].in_service;
    if (!ok) {
      throw Error(Errc::PlanLocationInvalid, "plan entry " + std::to_string(m + 1) + " (" +
                                                 std::string(kind_name(e.kind)) + " at " +
                                                 std::to_string(e.location + 1) + ") is invalid");
    }
  }
}

std::string plan_to_json(const MeasurementPlan& plan) {
  nlohmann::json j;
  j["schema"] = "plan/1";
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : plan.entries) {
    entries.push_back({{"kind", kind_name(e.kind)}, {"location", e.location + 1}});
  }
  j["entries"] = std::move(entries);
  return j.dump(1);
}

MeasurementPlan plan_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("plan JSON: ") + e.what());
  }
  if (j.value("schema", "") != "plan/1") {
    throw Error(Errc::SchemaMismatch, "expected schema plan/1");
  }
  MeasurementPlan plan;
  try {
    for (const auto& e : j.at("entries")) {
      const auto loc = e.at("location").get<std::size_t>();
      if (loc == 0) throw Error(Errc::PlanLocationInvalid, "plan locations are 1-based");
      plan.entries.push_back({kind_from_name(e.at("kind").get<std::string>()), loc - 1});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("plan JSON: ") + e.what());
  }
  return plan;
}

FormSet build_measurement_matrices(const AdmittanceModel& adm, const MeasurementPlan& plan) {
  const auto dim = static_cast<Eigen::Index>(2 * adm.bus_count);
  FormSet forms;
  forms.reserve(plan.size());
  const Eigen::SparseMatrix<Complex, Eigen::RowMajor> ybus_rows = adm.ybus;

  for (std::size_t m = 0; m < plan.size(); ++m) {
    const MeasurementEntry& e = plan.entries[m];
    check_entry(adm, e, m);
    Triplets t;
    switch (e.kind) {
      case MeasurementKind::Vmag2: {
        const auto n = static_cast<int>(2 * e.location);
        t.emplace_back(n, n, 1.0);
        t.emplace_back(n + 1, n + 1, 1.0);
        break;
      }
      case MeasurementKind::Pinj:
      case MeasurementKind::Qinj: {
        const Part part = e.kind == MeasurementKind::Pinj ? Part::Active : Part::Reactive;
        const auto row = static_cast<Eigen::Index>(e.location);
        for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(ybus_rows, row); it; ++it) {
          add_power_term(t, e.location, static_cast<std::size_t>(it.col()), it.value(), part);
        }
        break;
      }
      case MeasurementKind::PflowF:
      case MeasurementKind::QflowF: {
        const BranchAdmittance& y = adm.branch[e.location];
        const Part part = e.kind == MeasurementKind::PflowF ? Part::Active : Part::Reactive;
        add_power_term(t, y.from, y.from, y.yff, part);
        add_power_term(t, y.from, y.to, y.yft, part);
        break;
      }
      case MeasurementKind::PflowT:
      case MeasurementKind::QflowT: {
        const BranchAdmittance& y = adm.branch[e.location];
        const Part part = e.kind == MeasurementKind::PflowT ? Part::Active : Part::Reactive;
        add_power_term(t, y.to, y.from, y.ytf, part);
        add_power_term(t, y.to, y.to, y.ytt, part);
        break;
      }
    }
    forms.push_back({symmetrized(t, dim), e.kind, e.location});
  }
  return forms;
}

FormSet build_measurement_matrices(const GridModel& grid, const MeasurementPlan& plan) {
  validate_plan(grid, plan);
  return build_measurement_matrices(build_admittance(grid), plan);
}

std::size_t state_dim(const FormSet& forms) {
  return forms.empty() ? 0 : static_cast<std::size_t>(forms.front().h.rows());
}

Eigen::VectorXd evaluate_measurements(const FormSet& forms, const Eigen::VectorXd& v) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(forms.size()));
  for (std::size_t m = 0; m < forms.size(); ++m) {
    require_dims(forms[m].h.rows() == v.size(), "state dimension does not match measurement matrices");
    z[static_cast<Eigen::Index>(m)] = v.dot(forms[m].h * v);
  }
  return z;
}

Eigen::MatrixXd jacobian_at(const FormSet& forms, const Eigen::VectorXd& v) {
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(forms.size()), v.size());
  for (std::size_t m = 0; m < forms.size(); ++m) {
    require_dims(forms[m].h.rows() == v.size(), "state dimension does not match measurement matrices");
    // h is symmetric, so v^T h = (h v)^T
    jac.row(static_cast<Eigen::Index>(m)) = (forms[m].h * v).transpose();
  }
  return jac;
}

MeasurementVector add_gaussian_noise(const Eigen::VectorXd& z, const MeasurementPlan& plan,
                                     double sigma_flow, double sigma_mag, std::uint64_t seed) {
  require_dims(static_cast<std::size_t>(z.size()) == plan.size(), "measurement vector vs plan size");
  if (sigma_flow < 0.0 || sigma_mag < 0.0) {
    throw Error(Errc::InvalidArgument, "noise standard deviations must be non-negative");
  }
  MeasurementVector out;
  out.values = z;
  out.mask.assign(plan.size(), 1);
  out.imputed.assign(plan.size(), 0);
  out.noise_sigmas.resize(z.size());
  out.seed = seed;
  Rng rng(seed);
  for (std::size_t m = 0; m < plan.size(); ++m) {
    const auto i = static_cast<Eigen::Index>(m);
    const double sigma = plan.entries[m].kind == MeasurementKind::Vmag2 ? sigma_mag : sigma_flow;
    out.noise_sigmas[i] = sigma;
    const double g = rng.normal();
    if (sigma != 0.0) out.values[i] += sigma * g;
  }
  return out;
}

}  // namespace psse
