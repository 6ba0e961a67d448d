#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loadshed/ipm.hpp"
#include "loadshed/netcase.hpp"
#include "loadshed/powerflow.hpp"

namespace loadshed {

/// Load-shedding costs, indexed by bus position.
///
/// Shedding p (MW) at bus i costs shed_linear[i] * p + shed_quadratic[i] * p^2;
/// reactive shedding q (MVAr) costs reactive_quadratic * q^2. The marginal
/// shedding cost at every feasible point is at least shed_linear[i], so the
/// ordering condition (shedding never cheaper than generating) holds when
/// every shed_linear[i] is at least the largest generator marginal cost.
struct CostConfig {
  std::vector<double> shed_linear;     // $/MWh
  std::vector<double> shed_quadratic;  // $/MW^2h
  double reactive_quadratic = 0.0;     // $/MVAr^2h
  /// $/MVArh on |q_s|; zero leaves reactive shedding priced by the quadratic term only.
  std::vector<double> reactive_linear;
  /// Fraction of each bus's demand that may be shed (critical-load carve-out).
  std::vector<double> shed_cap;

  /// shed_linear = dominance * mc_max,
  /// shed_quadratic = dominance * mc_max / min positive p_d,
  /// reactive_quadratic = 1e-3 * min shed_quadratic, shed_cap = 1.
  static CostConfig defaults(const NetworkCase& c, double dominance = 100.0);
};

/// Largest generator marginal cost at p_max over in-service units, $/MWh.
double max_generator_marginal_cost(const NetworkCase& c);

/// In-service generators of one bus merged into a single equivalent unit.
struct GenBus {
  std::size_t bus = 0;
  double p_min = 0.0, p_max = 0.0, q_min = 0.0, q_max = 0.0;  // MW / MVAr
  double cost_a = 0.0, cost_b = 0.0, cost_c = 0.0;
};

struct OlsOptions {
  double angle_min = -0.6;  // rad
  double angle_max = 0.6;
  /// Tie q_s to p_s at each bus's demand power factor (q_s = p_s q_d / p_d),
  /// the usual dispatchable-load model. When off, q_s moves freely in its box.
  bool fixed_power_factor = true;
};

/// The assembled nonlinear program. Variables, all per-unit:
///   [ V (N) | theta (N) | p_g (gen buses) | q_g | p_s (load buses) | q_s ]
struct OlsProblem {
  NetworkCase network;
  CostConfig costs;
  OlsOptions options;
  AdmittanceMatrix admittance;
  std::vector<GenBus> gen_buses;
  std::vector<std::size_t> load_buses;  // buses with p_d > 0
  /// Multiplies $/h to obtain the internal objective.
  double objective_scale = 1.0;

  int n_bus() const { return static_cast<int>(network.bus_count()); }
  int n_gen() const { return static_cast<int>(gen_buses.size()); }
  int n_load() const { return static_cast<int>(load_buses.size()); }
  int num_vars() const { return 2 * n_bus() + 2 * n_gen() + 2 * n_load(); }
  int off_v() const { return 0; }
  int off_theta() const { return n_bus(); }
  int off_pg() const { return 2 * n_bus(); }
  int off_qg() const { return 2 * n_bus() + n_gen(); }
  int off_ps() const { return 2 * n_bus() + 2 * n_gen(); }
  int off_qs() const { return 2 * n_bus() + 2 * n_gen() + n_load(); }

  /// Variable bounds (per-unit); infinite where unbounded.
  std::vector<double> lower_bounds() const;
  std::vector<double> upper_bounds() const;

  /// Objective in $/h for a variable vector.
  double objective_dollars(const Eigen::VectorXd& x) const;
};

/// Builds the problem. Throws ConfigError when the cost ordering is violated
/// or a cost is nonpositive, CaseError when the case is disconnected or a bus
/// carries generators with differing costs.
OlsProblem assemble_ols(const NetworkCase& c, const CostConfig& costs, const OlsOptions& opts = {});

enum class OlsStatus { optimal, max_iter, numerical_failure };

std::string_view to_string(OlsStatus s);

struct KktResiduals {
  double feasibility = 0.0;
  double gradient = 0.0;
  double complementarity = 0.0;
};

/// Bus-indexed optimum. Shedding and dispatch in MW / MVAr, v in pu, theta in rad.
struct OlsSolution {
  std::vector<double> p_s, q_s;
  std::vector<double> p_g, q_g;
  std::vector<double> v, theta;
  double objective = 0.0;  // $/h
  OlsStatus status = OlsStatus::numerical_failure;
  KktResiduals kkt;
  int iterations = 0;

  double total_p_shed() const;
  double total_q_shed() const;
};

/// Primal-dual interior-point solve. The start uses (V, theta) from `warm`
/// when it converged (flat otherwise), p_s at 1% of demand, and dispatch at
/// the midpoint of its bounds.
OlsSolution solve_ols(const OlsProblem& problem, const IpmOptions& opts = {},
                      const std::optional<PowerFlowSolution>& warm = std::nullopt);

/// Pack/unpack between the bus-indexed solution and the variable vector.
Eigen::VectorXd to_variables(const OlsProblem& problem, const OlsSolution& sol);
OlsSolution from_variables(const OlsProblem& problem, const Eigen::VectorXd& x);

struct Violation {
  std::string constraint;  // e.g. "v_max", "p_balance", "line_from"
  int element = 0;         // bus id, or branch position for line limits
  double magnitude = 0.0;  // per-unit (radians for angles)
};

struct ViolationReport {
  std::vector<Violation> violations;
  bool empty() const { return violations.empty(); }
};

/// Re-evaluates every constraint from the solution fields with complex
/// arithmetic and lists those violated by more than tol.
ViolationReport verify_feasibility(const OlsSolution& sol, const OlsProblem& problem,
                                   double tol = 1e-5);

struct BruteForceOptions {
  double step = 0.01;  // pu
  /// After the full grid, re-grid a +-2 cell box around the incumbent with
  /// halved spacing until the spacing drops below refine_tol (0 disables).
  double refine_tol = 1e-11;
  /// Refuse grids with more points than this.
  std::size_t max_points = 20'000'000;
};

/// Exhaustive search oracle for cases with <= 3 buses and <= 2 generator
/// buses, the reference bus hosting a generator. Grid coordinates are p_g at
/// non-reference generator buses, V at generator buses, and (p_s, q_s) at
/// load buses (p_s alone under a fixed power factor); the remaining state
/// comes from a power flow at each point.
/// Throws ConfigError on unmet preconditions and SolverError when no grid
/// point is feasible.
OlsSolution brute_force_ols(const OlsProblem& problem, const BruteForceOptions& opts = {});

}  // namespace loadshed
