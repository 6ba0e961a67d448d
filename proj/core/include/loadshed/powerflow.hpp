#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "loadshed/netcase.hpp"

namespace loadshed {

/// Solves A x = rhs; returns nullopt when A is numerically singular.
/// Replaceable so that a sparse factorization can be plugged in.
using LinearSolve =
    std::function<std::optional<Eigen::VectorXd>(const Eigen::MatrixXd&, const Eigen::VectorXd&)>;

/// Dense LU with partial pivoting and a reciprocal-condition singularity test.
std::optional<Eigen::VectorXd> dense_lu_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs);

/// Bus-indexed steady state. Generation is per bus (sum over the bus's
/// in-service generators), all quantities per-unit on the case base.
struct PowerFlowSolution {
  std::vector<double> v;
  std::vector<double> theta;
  std::vector<double> p_g;
  std::vector<double> q_g;
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;
  /// Bus indices whose realized reactive output lies outside generator limits.
  std::vector<std::size_t> q_limit_violations;

  double total_p_g() const;
};

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 20;
  /// Newton step scale in (0, 1].
  double damping = 1.0;
  LinearSolve linear_solve = dense_lu_solve;
};

struct LineFlow {
  std::size_t branch = 0;
  std::complex<double> s_from;
  std::complex<double> s_to;

  double p_from() const { return s_from.real(); }
  double q_from() const { return s_from.imag(); }
  double p_to() const { return s_to.real(); }
  double q_to() const { return s_to.imag(); }
};

/// Flows for in-service branches only, in branch order.
struct LineFlowSet {
  std::vector<LineFlow> flows;

  /// Flow record for a branch, or nullptr when the branch is out of service.
  const LineFlow* find(std::size_t branch) const;
};

struct FrequencyProxy {
  double f = 60.0;
  double delta_p = 0.0;
  double beta = 10.0;
};

struct ConnectivityReport {
  bool connected = true;
  /// Bus-id sets of components without the slack, ordered by smallest id.
  std::vector<std::vector<int>> islands;
};

ConnectivityReport check_connectivity(const NetworkCase& c);

/// Polar Newton-Raphson. `warm` seeds voltages; otherwise a flat start is
/// used (1.0 pu at PQ buses, generator setpoints elsewhere, zero angles).
/// Generator reactive limits are reported, not enforced.
PowerFlowSolution solve_power_flow(const NetworkCase& c,
                                   const std::optional<PowerFlowSolution>& warm = std::nullopt,
                                   const PowerFlowOptions& opts = {});

/// Complex power entering each branch at both ends.
LineFlowSet line_flows(const NetworkCase& c, const PowerFlowSolution& sol);

/// f = f0 - (post - pre) / beta. Throws ConfigError when beta <= 0.
FrequencyProxy frequency_proxy(double pre_gen_total, double post_gen_total, double beta = 10.0,
                               double f0 = 60.0);

/// Bus complex injections S_i = V_i conj(sum_j Y_ij V_j), per-unit.
std::vector<std::complex<double>> bus_injections(const NetworkCase& c, const AdmittanceMatrix& y,
                                                 const std::vector<double>& v,
                                                 const std::vector<double>& theta);

}  // namespace loadshed
