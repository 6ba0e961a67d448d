#pragma once

#include <functional>
#include <string_view>

#include <Eigen/Core>

namespace loadshed {

/// Smooth nonlinear program
///
///   min f(x)  s.t.  g(x) = 0,  h(x) <= 0
///
/// described by dense callbacks. Jacobians are row-per-constraint.
struct NlpFunctions {
  int num_vars = 0;
  std::function<void(const Eigen::VectorXd& x, double& f, Eigen::VectorXd& df)> objective;
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& dg)> equalities;
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& h, Eigen::MatrixXd& dh)> inequalities;
  /// Hessian of f(x) + lam' g(x) + mu' h(x).
  std::function<Eigen::MatrixXd(const Eigen::VectorXd& x, const Eigen::VectorXd& lam,
                                const Eigen::VectorXd& mu)>
      hessian;
};

struct IpmOptions {
  double feas_tol = 1e-8;
  double grad_tol = 1e-8;
  double comp_tol = 1e-8;
  double cost_tol = 1e-8;
  int max_iter = 150;
  /// Fraction-to-boundary factor.
  double step_fraction = 0.9995;
  /// Barrier reduction factor.
  double sigma = 0.1;
  /// Diagonal shift tried when the KKT matrix is singular, grown geometrically.
  double reg_initial = 1e-10;
  double reg_growth = 100.0;
  int reg_attempts = 6;
};

enum class IpmStatus { converged, max_iter, numerical_failure };

std::string_view to_string(IpmStatus s);

struct IpmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lam;  // equality multipliers
  Eigen::VectorXd mu;   // inequality multipliers, >= 0
  Eigen::VectorXd z;    // inequality slacks, > 0
  double f = 0.0;
  IpmStatus status = IpmStatus::numerical_failure;
  int iterations = 0;
  // Scaled optimality measures at the returned iterate.
  double feascond = 0.0;
  double gradcond = 0.0;
  double compcond = 0.0;
  double costcond = 0.0;
};

/// Primal-dual interior-point method with a logarithmic barrier on slacks
/// of the inequalities. Each iteration solves the reduced Newton system
///
///   [ M   dg' ] [dx ]   [ -N ]      M = Hl + dh' diag(mu/z) dh
///   [ dg  0   ] [dlam] = [ -g ]      N = Lx + dh' diag(1/z) (mu.*h + gamma)
///
/// takes separate primal and dual steps limited by the fraction-to-boundary
/// rule, and sets the barrier to gamma = sigma * z'mu / niq.
/// x0 need not be interior: slacks start at max(-h, 1).
IpmResult solve_ipm(const NlpFunctions& nlp, Eigen::VectorXd x0, const IpmOptions& opts = {});

}  // namespace loadshed
