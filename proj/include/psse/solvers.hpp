#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psse/grid.hpp"
#include "psse/measurement.hpp"

namespace psse {

/// Phase-invariant measurements (|V|^2, P, Q) leave the global angle free, so
/// J = [v^T H_m] is never of full column rank 2N. A ReferenceFrame pins the
/// angle of one bus: states live in v = T x where T (2N x (2N-1)) replaces the
/// reference bus coordinate pair by the unit direction (cos a, sin a).
/// Without a reference, T is the identity.
class ReferenceFrame {
 public:
  ReferenceFrame(std::size_t state_dim, std::optional<AngleReference> ref);

  Eigen::Index full_dim() const noexcept { return full_; }
  Eigen::Index reduced_dim() const noexcept { return ref_ ? full_ - 1 : full_; }
  bool active() const noexcept { return ref_.has_value(); }

  /// J T
  Eigen::MatrixXd reduce_columns(const Eigen::MatrixXd& jac) const;
  /// T R
  Eigen::MatrixXd expand_rows(const Eigen::MatrixXd& reduced) const;
  Eigen::VectorXd expand(const Eigen::VectorXd& x) const;
  /// T T^T v, the closest state with the reference angle.
  Eigen::VectorXd project(const Eigen::VectorXd& v) const;

 private:
  Eigen::Index full_;
  std::optional<AngleReference> ref_;
  double c_ = 1.0;
  double s_ = 0.0;
};

/// (1/M) sum_m |z_m - v^T H_m v|
double lav_objective(const FormSet& forms, const Eigen::VectorXd& z, const Eigen::VectorXd& v);

double soft_threshold(double x, double eta);
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double eta);

/// Left inverse B = (J^T J)^{-1} J^T through a column-pivoted Householder QR.
/// Throws RankDeficient when the smallest |R_kk| < rank_tol * max |R_kk|.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& jac, double rank_tol = 1e-10);

/// T (J T)^+ : left inverse restricted to states carrying the reference angle.
Eigen::MatrixXd referenced_pseudo_inverse(const Eigen::MatrixXd& jac, const ReferenceFrame& frame,
                                          double rank_tol = 1e-10);

/// Largest eigenvalue of B^T B by power iteration on B B^T.
double max_eigenvalue_btb(const Eigen::MatrixXd& pinv, int iterations = 20);

/// ISTA recursion coefficients: u <- S_eta(W u + A z + b) with
/// W = I - c B^T B, A = -c B^T B, b = c B^T v_i and c = eta M / (2 mu).
struct IstaCoefficients {
  Eigen::MatrixXd w;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  double eta = 0.0;
};

IstaCoefficients ista_coefficients(const Eigen::MatrixXd& pinv, const Eigen::VectorXd& v_lin,
                                   double mu, double eta);

struct IstaResult {
  Eigen::VectorXd u;
  double residual = 0.0;  ///< ||u^K - u^{K-1}||_inf
};

IstaResult ista_solve(const Eigen::MatrixXd& pinv, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& v_lin, double mu, double eta, int iterations,
                      const Eigen::VectorXd& u0);
IstaResult ista_solve(const IstaCoefficients& coeffs, const Eigen::VectorXd& z, int iterations,
                      const Eigen::VectorXd& u0);

/// ||u||_1 + (M / (4 mu)) ||B (u + z) - v_i||^2, the inner Lasso objective.
double lasso_objective(const Eigen::MatrixXd& pinv, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& v_lin, double mu, const Eigen::VectorXd& u);

struct ProxLinearConfig {
  int outer_iters = 1;               ///< I; outer iterations i = 0..I
  int inner_iters = 3;               ///< K
  std::vector<double> mu;            ///< empty: M/2; shorter than I+1: last value repeats
  std::optional<double> eta;         ///< unset: 2 mu_i / (M lambda_max(B_i^T B_i))
  std::optional<StateVector> init_state;  ///< unset: flat 1 + j0
  std::optional<AngleReference> reference;
  int max_backtracks = 20;
  int power_iterations = 20;
  double rank_tol = 1e-10;
  bool keep_linearizations = false;

  void validate() const;
  double mu_at(int outer, std::size_t measurements) const;
};

/// Everything needed to rebuild one outer iteration of the solver as network
/// weights.
struct Linearization {
  Eigen::VectorXd state;  ///< v_i
  Eigen::MatrixXd pinv;   ///< B_i (2N x M)
  double mu = 0.0;
  double eta = 0.0;
  bool held = false;  ///< every safeguard reduction failed; the state was kept
};

struct OuterStep {
  Eigen::VectorXd state;  ///< iterate after the step
  double objective = 0.0;
  double inner_residual = 0.0;
  double mu = 0.0;
  double eta = 0.0;
  int backtracks = 0;
  bool held = false;
  double seconds = 0.0;
};

struct SolveTrace {
  std::string method;
  double initial_objective = 0.0;
  std::vector<OuterStep> steps;
  std::vector<Linearization> linearizations;
  bool converged = false;
  double seconds = 0.0;
};

std::string trace_to_json(const SolveTrace& trace);

struct SolveResult {
  StateVector state;
  SolveTrace trace;
};

/// Reduced-complexity prox-linear LAV solver with an ISTA inner loop and a
/// halving safeguard on mu. When max_backtracks halvings all raise the LAV
/// objective the iterate is held and the remaining outer iterations are
/// skipped, so `steps` can be shorter than I + 1.
SolveResult prox_linear_lav(const FormSet& forms, const Eigen::VectorXd& z,
                            const ProxLinearConfig& cfg);

struct ExactProxConfig {
  int outer_iters = 30;
  int inner_iters = 500;  ///< accelerated projected-gradient steps on the dual
  std::optional<double> mu;  ///< unset: M/2
  std::optional<StateVector> init_state;
  std::optional<AngleReference> reference;
  int max_backtracks = 30;
  double tol = 1e-12;  ///< stop once the state step falls below this (inf-norm)
};

/// Prox-linear LAV iteration with the linearized subproblem
///   min_v ||z - J_i (2v - v_i)||_1 + (M / (2 mu)) ||v - v_i||^2
/// solved in v-space through its box-constrained dual, max_{|y| <= 1}
/// y^T r_i - ||A^T y||^2 / (2 rho) with A = 2 J_i, rho = M / mu. Unlike the
/// reduced Lasso form, the fixed points here are LAV stationary points.
SolveResult prox_linear_lav_exact(const FormSet& forms, const Eigen::VectorXd& z,
                                  const ExactProxConfig& cfg);

struct GaussNewtonConfig {
  int max_iter = 20;
  double tol = 1e-10;
  std::optional<AngleReference> reference;
};

/// Gauss-Newton on sum_m w_m (z_m - v^T H_m v)^2 with gradient rows 2 v^T H_m.
SolveResult gauss_newton_wls(const FormSet& forms, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& weights, const StateVector& init,
                             const GaussNewtonConfig& cfg);

double wls_objective(const FormSet& forms, const Eigen::VectorXd& z, const Eigen::VectorXd& weights,
                     const Eigen::VectorXd& v);

}  // namespace psse
