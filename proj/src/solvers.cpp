#include "psse/solvers.hpp"

#include <chrono>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "json.hpp"
#include "psse/error.hpp"

namespace psse {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool accept_objective(double next, double current) {
  return next <= current * (1.0 + 1e-10) + 1e-14;
}

}  // namespace

ReferenceFrame::ReferenceFrame(std::size_t state_dim, std::optional<AngleReference> ref)
    : full_(static_cast<Eigen::Index>(state_dim)), ref_(ref) {
  if (ref_) {
    if (2 * ref_->bus + 1 >= state_dim) {
      throw Error(Errc::InvalidArgument, "reference bus outside the state vector");
    }
    c_ = std::cos(ref_->angle);
    s_ = std::sin(ref_->angle);
  }
}

Eigen::MatrixXd ReferenceFrame::reduce_columns(const Eigen::MatrixXd& jac) const {
  require_dims(jac.cols() == full_, "Jacobian column count vs state dimension");
  if (!ref_) return jac;
  const auto k = static_cast<Eigen::Index>(2 * ref_->bus);
  Eigen::MatrixXd out(jac.rows(), full_ - 1);
  out.leftCols(k) = jac.leftCols(k);
  out.col(k) = c_ * jac.col(k) + s_ * jac.col(k + 1);
  out.rightCols(full_ - k - 2) = jac.rightCols(full_ - k - 2);
  return out;
}

Eigen::MatrixXd ReferenceFrame::expand_rows(const Eigen::MatrixXd& reduced) const {
  if (!ref_) return reduced;
  require_dims(reduced.rows() == full_ - 1, "reduced matrix row count");
  const auto k = static_cast<Eigen::Index>(2 * ref_->bus);
  Eigen::MatrixXd out(full_, reduced.cols());
  out.topRows(k) = reduced.topRows(k);
  out.row(k) = c_ * reduced.row(k);
  out.row(k + 1) = s_ * reduced.row(k);
  out.bottomRows(full_ - k - 2) = reduced.bottomRows(full_ - k - 2);
  return out;
}

Eigen::VectorXd ReferenceFrame::expand(const Eigen::VectorXd& x) const {
  return expand_rows(x);
}

Eigen::VectorXd ReferenceFrame::project(const Eigen::VectorXd& v) const {
  require_dims(v.size() == full_, "state dimension vs reference frame");
  if (!ref_) return v;
  const auto k = static_cast<Eigen::Index>(2 * ref_->bus);
  Eigen::VectorXd out = v;
  const double along = c_ * v[k] + s_ * v[k + 1];
  out[k] = c_ * along;
  out[k + 1] = s_ * along;
  return out;
}

double lav_objective(const FormSet& forms, const Eigen::VectorXd& z, const Eigen::VectorXd& v) {
  require_dims(static_cast<std::size_t>(z.size()) == forms.size(), "z length vs measurement count");
  if (forms.empty()) return 0.0;
  return (z - evaluate_measurements(forms, v)).cwiseAbs().sum() / static_cast<double>(forms.size());
}

double soft_threshold(double x, double eta) {
  if (x > eta) return x - eta;
  if (x < -eta) return x + eta;
  return 0.0;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double eta) {
  return x.unaryExpr([eta](double e) { return soft_threshold(e, eta); });
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& jac, double rank_tol) {
  const Eigen::Index m = jac.rows();
  const Eigen::Index n = jac.cols();
  if (m < n || n == 0) {
    throw Error(Errc::RankDeficient, "matrix with " + std::to_string(m) + " rows cannot have rank " +
                                         std::to_string(n));
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
  const Eigen::VectorXd diag = qr.matrixQR().diagonal().head(n).cwiseAbs();
  const double largest = diag.maxCoeff();
  const double smallest = diag.minCoeff();
  if (!(largest > 0.0) || smallest < rank_tol * largest) {
    throw Error(Errc::RankDeficient, "smallest R diagonal " + std::to_string(smallest) +
                                         " below " + std::to_string(rank_tol) + " x " +
                                         std::to_string(largest));
  }
  const Eigen::MatrixXd q_thin = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
  const Eigen::MatrixXd r_inv_qt =
      qr.matrixQR().topLeftCorner(n, n).triangularView<Eigen::Upper>().solve(q_thin.transpose());
  return qr.colsPermutation() * r_inv_qt;
}

Eigen::MatrixXd referenced_pseudo_inverse(const Eigen::MatrixXd& jac, const ReferenceFrame& frame,
                                          double rank_tol) {
  return frame.expand_rows(pseudo_inverse(frame.reduce_columns(jac), rank_tol));
}

double max_eigenvalue_btb(const Eigen::MatrixXd& pinv, int iterations) {
  // B^T B and B B^T share their nonzero spectrum; the latter is smaller.
  const Eigen::MatrixXd gram = pinv * pinv.transpose();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(gram.rows()).normalized();
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd y = gram * x;
    const double norm = y.norm();
    if (norm == 0.0) break;
    x = y / norm;
  }
  return x.dot(gram * x);
}

IstaCoefficients ista_coefficients(const Eigen::MatrixXd& pinv, const Eigen::VectorXd& v_lin,
                                   double mu, double eta) {
  require_dims(pinv.rows() == v_lin.size(), "B rows vs linearization state");
  if (!(mu > 0.0) || !(eta > 0.0)) throw Error(Errc::InvalidArgument, "mu and eta must be positive");
  const auto m = static_cast<double>(pinv.cols());
  const double c = eta * m / (2.0 * mu);
  IstaCoefficients out;
  out.a = -c * (pinv.transpose() * pinv);
  out.w = out.a;
  out.w.diagonal().array() += 1.0;
  out.b = c * (pinv.transpose() * v_lin);
  out.eta = eta;
  return out;
}

IstaResult ista_solve(const IstaCoefficients& coeffs, const Eigen::VectorXd& z, int iterations,
                      const Eigen::VectorXd& u0) {
  require_dims(z.size() == coeffs.w.rows() && u0.size() == z.size(), "ISTA dimensions");
  IstaResult out;
  out.u = u0;
  const Eigen::VectorXd drive = coeffs.a * z + coeffs.b;
  Eigen::VectorXd prev;
  for (int k = 0; k < iterations; ++k) {
    prev = out.u;
    out.u = soft_threshold(coeffs.w * prev + drive, coeffs.eta);
  }
  out.residual = iterations > 0 ? (out.u - prev).cwiseAbs().maxCoeff() : 0.0;
  return out;
}

IstaResult ista_solve(const Eigen::MatrixXd& pinv, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& v_lin, double mu, double eta, int iterations,
                      const Eigen::VectorXd& u0) {
  return ista_solve(ista_coefficients(pinv, v_lin, mu, eta), z, iterations, u0);
}

double lasso_objective(const Eigen::MatrixXd& pinv, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& v_lin, double mu, const Eigen::VectorXd& u) {
  const auto m = static_cast<double>(pinv.cols());
  return u.cwiseAbs().sum() + m / (4.0 * mu) * (pinv * (u + z) - v_lin).squaredNorm();
}

void ProxLinearConfig::validate() const {
  if (outer_iters < 0) throw Error(Errc::InvalidArgument, "outer_iters must be >= 0");
  if (inner_iters < 1) throw Error(Errc::InvalidArgument, "inner_iters must be >= 1");
  for (double m : mu) {
    if (!(m > 0.0)) throw Error(Errc::InvalidArgument, "step sizes mu must be positive");
  }
  if (eta && !(*eta > 0.0)) throw Error(Errc::InvalidArgument, "eta must be positive");
  if (max_backtracks < 0) throw Error(Errc::InvalidArgument, "max_backtracks must be >= 0");
}

double ProxLinearConfig::mu_at(int outer, std::size_t measurements) const {
  if (mu.empty()) return static_cast<double>(measurements) / 2.0;
  const auto i = std::min(static_cast<std::size_t>(outer), mu.size() - 1);
  return mu[i];
}

SolveResult prox_linear_lav(const FormSet& forms, const Eigen::VectorXd& z,
                            const ProxLinearConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  const std::size_t m = forms.size();
  const std::size_t n = state_dim(forms);
  require_dims(static_cast<std::size_t>(z.size()) == m, "z length vs measurement count");
  const ReferenceFrame frame(n, cfg.reference);
  if (m < static_cast<std::size_t>(frame.reduced_dim())) {
    throw Error(Errc::RankDeficient, "fewer measurements than unknowns");
  }

  StateVector init = cfg.init_state.value_or(StateVector::flat(n / 2));
  require_dims(static_cast<std::size_t>(init.values.size()) == n, "init state dimension");

  SolveResult result;
  result.trace.method = "prox-linear";
  Eigen::VectorXd v = frame.project(init.values);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  double objective = lav_objective(forms, z, v);
  result.trace.initial_objective = objective;

  for (int i = 0; i <= cfg.outer_iters; ++i) {
    const auto step_start = Clock::now();
    const Eigen::MatrixXd jac = jacobian_at(forms, v);
    const Eigen::MatrixXd pinv = referenced_pseudo_inverse(jac, frame, cfg.rank_tol);
    const double mu0 = cfg.mu_at(i, m);
    const double eta0 = cfg.eta ? *cfg.eta
                                : 2.0 * mu0 /
                                      (static_cast<double>(m) * max_eigenvalue_btb(pinv, cfg.power_iterations));

    OuterStep step;
    IstaResult inner;
    Eigen::VectorXd v_next;
    double next_objective = 0.0;
    int bt = 0;
    bool held = false;
    for (;; ++bt) {
      const double scale = std::ldexp(1.0, -bt);
      step.mu = mu0 * scale;
      step.eta = eta0 * scale;
      inner = ista_solve(ista_coefficients(pinv, v, step.mu, step.eta), z, cfg.inner_iters, u);
      v_next = 0.5 * (pinv * (inner.u + z) + v);
      next_objective = lav_objective(forms, z, v_next);
      if (!std::isfinite(next_objective)) {
        throw Error(Errc::Diverged, "LAV objective became non-finite at outer iteration " +
                                        std::to_string(i));
      }
      if (cfg.max_backtracks == 0 || accept_objective(next_objective, objective)) break;
      if (bt == cfg.max_backtracks) {
        held = true;
        break;
      }
    }
    step.backtracks = bt;
    step.held = held;
    step.inner_residual = inner.residual;
    if (held) {
      // mu -> 0 limit of the proximal step: keep v_i and stop.
      if (cfg.keep_linearizations) result.trace.linearizations.push_back({v, pinv, 0.0, 0.0, true});
      step.state = v;
      step.objective = objective;
      step.seconds = seconds_since(step_start);
      result.trace.steps.push_back(std::move(step));
      break;
    }
    if (cfg.keep_linearizations) {
      result.trace.linearizations.push_back({v, pinv, step.mu, step.eta, false});
    }
    step.state = v_next;
    step.objective = next_objective;
    step.seconds = seconds_since(step_start);
    result.trace.steps.push_back(std::move(step));
    u = std::move(inner.u);
    v = std::move(v_next);
    objective = next_objective;
  }
  result.trace.converged = true;
  result.trace.seconds = seconds_since(start);
  result.state = StateVector(std::move(v));
  return result;
}

SolveResult prox_linear_lav_exact(const FormSet& forms, const Eigen::VectorXd& z,
                                  const ExactProxConfig& cfg) {
  if (cfg.outer_iters < 0 || cfg.inner_iters < 1 || cfg.max_backtracks < 0) {
    throw Error(Errc::InvalidArgument, "exact prox-linear iteration counts out of range");
  }
  if (cfg.mu && !(*cfg.mu > 0.0)) throw Error(Errc::InvalidArgument, "mu must be positive");
  const auto start = Clock::now();
  const std::size_t m = forms.size();
  const std::size_t n = state_dim(forms);
  require_dims(static_cast<std::size_t>(z.size()) == m, "z length vs measurement count");
  const ReferenceFrame frame(n, cfg.reference);
  const StateVector init = cfg.init_state.value_or(StateVector::flat(n / 2));
  require_dims(static_cast<std::size_t>(init.values.size()) == n, "init state dimension");
  const auto md = static_cast<double>(m);
  const double mu0 = cfg.mu.value_or(md / 2.0);

  SolveResult result;
  result.trace.method = "prox-linear-exact";
  Eigen::VectorXd v = frame.project(init.values);
  double objective = lav_objective(forms, z, v);
  result.trace.initial_objective = objective;
  const auto mi = static_cast<Eigen::Index>(m);
  Eigen::VectorXd y_warm = Eigen::VectorXd::Zero(mi);

  for (int i = 0; i < cfg.outer_iters; ++i) {
    const auto step_start = Clock::now();
    const Eigen::MatrixXd a = 2.0 * frame.reduce_columns(jacobian_at(forms, v));
    const Eigen::VectorXd r = z - evaluate_measurements(forms, v);
    const Eigen::MatrixXd gram = a * a.transpose();
    const Eigen::MatrixXd small = a.transpose() * a;
    const double lipschitz =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(small, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    if (!(lipschitz > 0.0)) throw Error(Errc::RankDeficient, "zero Jacobian at outer iteration " + std::to_string(i));

    OuterStep step;
    bool accepted = false;
    Eigen::VectorXd v_next;
    double next_objective = objective;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
      step.mu = mu0 * std::ldexp(1.0, -bt);
      const double rho = md / step.mu;
      const double s = rho / lipschitz;
      Eigen::VectorXd y = y_warm;
      Eigen::VectorXd w = y;
      double t = 1.0;
      for (int k = 0; k < cfg.inner_iters; ++k) {
        const Eigen::VectorXd grad = r - gram * w / rho;
        const Eigen::VectorXd y_next = (w + s * grad).cwiseMax(-1.0).cwiseMin(1.0);
        // Momentum restart once the step stops agreeing with the gradient.
        if (grad.dot(y_next - y) < 0.0) {
          t = 1.0;
          w = y;
          continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        w = y_next + ((t - 1.0) / t_next) * (y_next - y);
        y = y_next;
        t = t_next;
      }
      v_next = v + frame.expand(a.transpose() * y / rho);
      next_objective = lav_objective(forms, z, v_next);
      if (!std::isfinite(next_objective)) {
        throw Error(Errc::Diverged, "LAV objective became non-finite at outer iteration " + std::to_string(i));
      }
      step.backtracks = bt;
      if (accept_objective(next_objective, objective)) {
        accepted = true;
        y_warm = y;
        break;
      }
    }
    const double moved = accepted ? (v_next - v).cwiseAbs().maxCoeff() : 0.0;
    step.held = !accepted;
    step.inner_residual = moved;
    if (accepted) {
      v = std::move(v_next);
      objective = next_objective;
    }
    step.state = v;
    step.objective = objective;
    step.seconds = seconds_since(step_start);
    result.trace.steps.push_back(std::move(step));
    if (!accepted || moved <= cfg.tol) {
      result.trace.converged = true;
      break;
    }
  }
  result.trace.seconds = seconds_since(start);
  result.state = StateVector(std::move(v));
  return result;
}

double wls_objective(const FormSet& forms, const Eigen::VectorXd& z, const Eigen::VectorXd& weights,
                     const Eigen::VectorXd& v) {
  const Eigen::VectorXd r = z - evaluate_measurements(forms, v);
  return (weights.array() * r.array().square()).sum();
}

SolveResult gauss_newton_wls(const FormSet& forms, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& weights, const StateVector& init,
                             const GaussNewtonConfig& cfg) {
  const auto start = Clock::now();
  const std::size_t m = forms.size();
  const std::size_t n = state_dim(forms);
  require_dims(static_cast<std::size_t>(z.size()) == m && weights.size() == z.size(),
               "z / weights length vs measurement count");
  require_dims(static_cast<std::size_t>(init.values.size()) == n, "init state dimension");
  if ((weights.array() <= 0.0).any()) throw Error(Errc::InvalidArgument, "weights must be positive");
  const ReferenceFrame frame(n, cfg.reference);
  if (m < static_cast<std::size_t>(frame.reduced_dim())) {
    throw Error(Errc::SingularGain, "fewer measurements than unknowns");
  }

  SolveResult result;
  result.trace.method = "gauss-newton";
  Eigen::VectorXd v = frame.project(init.values);
  result.trace.initial_objective = wls_objective(forms, z, weights, v);

  for (int it = 0; it < cfg.max_iter; ++it) {
    const auto step_start = Clock::now();
    const Eigen::VectorXd residual = z - evaluate_measurements(forms, v);
    const Eigen::MatrixXd grad = 2.0 * frame.reduce_columns(jacobian_at(forms, v));
    const Eigen::MatrixXd weighted = weights.asDiagonal() * grad;
    const Eigen::MatrixXd gain = grad.transpose() * weighted;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gain);
    const Eigen::VectorXd pivots = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(pivots.minCoeff() > 1e-14 * pivots.cwiseAbs().maxCoeff())) {
      throw Error(Errc::SingularGain, "gain matrix is singular at iteration " + std::to_string(it));
    }
    const Eigen::VectorXd dv = frame.expand(ldlt.solve(weighted.transpose() * residual));
    if (!dv.allFinite()) throw Error(Errc::Diverged, "Gauss-Newton step became non-finite");
    v += dv;
    OuterStep step;
    step.state = v;
    step.objective = wls_objective(forms, z, weights, v);
    step.inner_residual = dv.cwiseAbs().maxCoeff();
    step.seconds = seconds_since(step_start);
    result.trace.steps.push_back(step);
    if (!std::isfinite(step.objective)) throw Error(Errc::Diverged, "WLS objective became non-finite");
    if (step.inner_residual <= cfg.tol) {
      result.trace.converged = true;
      break;
    }
  }
  result.trace.seconds = seconds_since(start);
  result.state = StateVector(std::move(v));
  return result;
}

std::string trace_to_json(const SolveTrace& trace) {
  nlohmann::json j;
  j["method"] = trace.method;
  j["initial_objective"] = trace.initial_objective;
  j["converged"] = trace.converged;
  j["seconds"] = trace.seconds;
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"objective", s.objective},
                     {"inner_residual", s.inner_residual},
                     {"mu", s.mu},
                     {"eta", s.eta},
                     {"backtracks", s.backtracks},
                     {"held", s.held},
                     {"seconds", s.seconds},
                     {"state", std::vector<double>(s.state.data(), s.state.data() + s.state.size())}});
  }
  j["steps"] = std::move(steps);
  return j.dump(1);
}

}  // namespace psse
