#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/LU>

#include "loadshed/error.hpp"
#include "loadshed/ols.hpp"
#include "polar_terms.hpp"

namespace loadshed {

namespace {

constexpr double kFeasTol = 1e-12;

struct Axis {
  int var = 0;  // index into the variable vector
  double lo = 0.0, hi = 0.0;
};

std::vector<double> axis_points(double lo, double hi, double step) {
  std::vector<double> pts;
  if (hi - lo <= 0.0) return {lo};
  const auto m = static_cast<long>(std::ceil((hi - lo) / step - 1e-9));
  pts.reserve(static_cast<std::size_t>(m + 1));
  for (long k = 0; k <= m; ++k) pts.push_back(std::min(lo + static_cast<double>(k) * step, hi));
  return pts;
}

// Completes a grid point with a small Newton power flow and checks every
// constraint the grid does not enforce by construction.
class PointEvaluator {
 public:
  explicit PointEvaluator(const OlsProblem& p)
      : p_(p), n_(p.n_bus()), rows_(detail::admittance_rows(p.admittance)) {
    gen_at_.assign(static_cast<std::size_t>(n_), -1);
    load_at_.assign(static_cast<std::size_t>(n_), -1);
    for (int k = 0; k < p.n_gen(); ++k) gen_at_[p.gen_buses[static_cast<std::size_t>(k)].bus] = k;
    for (int k = 0; k < p.n_load(); ++k) load_at_[p.load_buses[static_cast<std::size_t>(k)]] = k;
    ref_ = static_cast<int>(p.network.slack_index());
    for (int i = 0; i < n_; ++i) {
      if (i != ref_) th_idx_.push_back(i);
      if (gen_at_[static_cast<std::size_t>(i)] < 0) v_idx_.push_back(i);
    }
    lb_ = p.lower_bounds();
    ub_ = p.upper_bounds();
    warm_ = Eigen::VectorXd::Zero(p.num_vars());
    for (int i = 0; i < n_; ++i) warm_[i] = 1.0;
  }

  /// x holds the grid coordinates (and fixed values); fills the rest.
  std::optional<double> evaluate(Eigen::VectorXd& x) {
    if (p_.options.fixed_power_factor) {
      for (int k = 0; k < p_.n_load(); ++k) {
        const auto& b = p_.network.buses()[p_.load_buses[static_cast<std::size_t>(k)]];
        x[p_.off_qs() + k] = x[p_.off_ps() + k] * b.q_d / b.p_d;
      }
    }
    for (int i : v_idx_) x[i] = warm_[i];
    for (int i = 0; i < n_; ++i) x[n_ + i] = warm_[n_ + i];
    if (!newton(x)) {
      for (int i : v_idx_) x[i] = 1.0;
      for (int i = 0; i < n_; ++i) x[n_ + i] = 0.0;
      if (!newton(x)) return std::nullopt;
    }
    warm_ = x;

    const double* v = x.data();
    const double* th = x.data() + n_;
    const double base = p_.network.base_mva();
    for (int i = 0; i < n_; ++i) {
      const int g = gen_at_[static_cast<std::size_t>(i)];
      if (g < 0) continue;
      double pi = 0.0, qi = 0.0;
      injection(i, v, th, pi, qi);
      const auto& bus = p_.network.buses()[static_cast<std::size_t>(i)];
      const int l = load_at_[static_cast<std::size_t>(i)];
      const double ps = l >= 0 ? x[p_.off_ps() + l] : 0.0;
      const double qs = l >= 0 ? x[p_.off_qs() + l] : 0.0;
      if (i == ref_) x[p_.off_pg() + g] = pi + bus.p_d / base - ps;
      x[p_.off_qg() + g] = qi + bus.q_d / base - qs;
    }
    for (int k = 0; k < p_.num_vars(); ++k) {
      const auto kk = static_cast<std::size_t>(k);
      if (x[k] > ub_[kk] + kFeasTol || x[k] < lb_[kk] - kFeasTol) return std::nullopt;
    }
    for (const auto& br : p_.network.branches()) {
      if (!br.in_service || br.s_rating <= 0.0) continue;
      const auto f = p_.network.bus_index(br.from), t = p_.network.bus_index(br.to);
      const auto vf = std::polar(v[f], th[f]);
      const auto vt = std::polar(v[t], th[t]);
      const auto y = branch_admittance(br);
      const double lim = br.s_rating / base;
      if (std::abs(vf * std::conj(y.ff * vf + y.ft * vt)) > lim + kFeasTol) return std::nullopt;
      if (std::abs(vt * std::conj(y.tf * vf + y.tt * vt)) > lim + kFeasTol) return std::nullopt;
    }
    return p_.objective_dollars(x);
  }

 private:
  void injection(int i, const double* v, const double* th, double& pi, double& qi) const {
    pi = qi = 0.0;
    for (const auto& t : rows_[static_cast<std::size_t>(i)]) {
      const auto r = detail::eval_pair(t, v, th);
      pi += r.p;
      qi += r.q;
    }
  }

  bool newton(Eigen::VectorXd& x) const {
    const int nth = static_cast<int>(th_idx_.size());
    const int dim = nth + static_cast<int>(v_idx_.size());
    std::vector<int> col(2 * static_cast<std::size_t>(n_), -1);
    for (int k = 0; k < nth; ++k) col[static_cast<std::size_t>(n_ + th_idx_[k])] = k;
    for (std::size_t k = 0; k < v_idx_.size(); ++k) col[static_cast<std::size_t>(v_idx_[k])] = nth + static_cast<int>(k);

    const double base = p_.network.base_mva();
    Eigen::VectorXd mis(dim);
    Eigen::MatrixXd jac(dim, dim);
    for (int it = 0; it < 30; ++it) {
      jac.setZero();
      mis.setZero();
      for (int i = 0; i < n_; ++i) {
        const int prow = col[static_cast<std::size_t>(n_ + i)];
        const int qrow = col[static_cast<std::size_t>(i)];
        if (prow < 0 && qrow < 0) continue;
        for (const auto& t : rows_[static_cast<std::size_t>(i)]) {
          const auto r = detail::eval_pair(t, x.data(), x.data() + n_);
          if (prow >= 0) mis[prow] += r.p;
          if (qrow >= 0) mis[qrow] += r.q;
          const auto slots = detail::pair_slots(t, n_);
          for (std::size_t a = 0; a < 4; ++a) {
            const int cc = col[static_cast<std::size_t>(slots[a])];
            if (cc < 0) continue;
            if (prow >= 0) jac(prow, cc) += r.dp[a];
            if (qrow >= 0) jac(qrow, cc) += r.dq[a];
          }
        }
        const auto& bus = p_.network.buses()[static_cast<std::size_t>(i)];
        const int g = gen_at_[static_cast<std::size_t>(i)];
        const int l = load_at_[static_cast<std::size_t>(i)];
        if (prow >= 0) {
          mis[prow] += bus.p_d / base - (g >= 0 ? x[p_.off_pg() + g] : 0.0) - (l >= 0 ? x[p_.off_ps() + l] : 0.0);
        }
        if (qrow >= 0) mis[qrow] += bus.q_d / base - (l >= 0 ? x[p_.off_qs() + l] : 0.0);
      }
      if (!mis.allFinite()) return false;
      if (dim == 0 || mis.lpNorm<Eigen::Infinity>() < 1e-12) return true;
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
      if (!(lu.rcond() > 1e-14)) return false;
      const Eigen::VectorXd dx = lu.solve(-mis);
      for (int k = 0; k < nth; ++k) x[n_ + th_idx_[k]] += dx[k];
      for (std::size_t k = 0; k < v_idx_.size(); ++k) x[v_idx_[k]] += dx[nth + static_cast<int>(k)];
    }
    return false;
  }

  const OlsProblem& p_;
  int n_;
  std::vector<std::vector<detail::PairTerm>> rows_;
  std::vector<int> gen_at_, load_at_;
  std::vector<int> th_idx_, v_idx_;
  int ref_ = 0;
  std::vector<double> lb_, ub_;
  Eigen::VectorXd warm_;
};

struct Best {
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;
};

void scan(const std::vector<Axis>& axes, const std::vector<std::vector<double>>& pts, Eigen::VectorXd x,
          PointEvaluator& eval, Best& best) {
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    for (std::size_t a = 0; a < axes.size(); ++a) x[axes[a].var] = pts[a][idx[a]];
    if (auto f = eval.evaluate(x); f && *f < best.objective) {
      best.objective = *f;
      best.x = x;
    }
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < pts[a].size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
}

}  // namespace

OlsSolution brute_force_ols(const OlsProblem& problem, const BruteForceOptions& opts) {
  if (problem.n_bus() > 3) throw ConfigError("brute-force oracle supports at most 3 buses");
  if (problem.n_gen() > 2) throw ConfigError("brute-force oracle supports at most 2 generator buses");
  if (!(opts.step > 0.0)) throw ConfigError("grid step must be positive");
  const auto ref = problem.network.slack_index();
  const auto ref_gen = std::find_if(problem.gen_buses.begin(), problem.gen_buses.end(),
                                    [&](const GenBus& g) { return g.bus == ref; });
  if (ref_gen == problem.gen_buses.end()) {
    throw ConfigError("brute-force oracle needs a generator at the reference bus");
  }

  const auto lb = problem.lower_bounds();
  const auto ub = problem.upper_bounds();
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(problem.num_vars());
  std::vector<Axis> axes;
  auto add_axis = [&](int var) {
    const auto k = static_cast<std::size_t>(var);
    if (!std::isfinite(lb[k]) || !std::isfinite(ub[k])) {
      throw ConfigError("brute-force oracle needs finite bounds on every grid coordinate");
    }
    x0[var] = lb[k];
    if (ub[k] > lb[k]) axes.push_back({var, lb[k], ub[k]});
  };
  for (int k = 0; k < problem.n_gen(); ++k) {
    const auto& g = problem.gen_buses[static_cast<std::size_t>(k)];
    add_axis(problem.off_v() + static_cast<int>(g.bus));
    if (g.bus != ref) add_axis(problem.off_pg() + k);
  }
  for (int k = 0; k < problem.n_load(); ++k) {
    add_axis(problem.off_ps() + k);
    if (!problem.options.fixed_power_factor) add_axis(problem.off_qs() + k);
  }

  std::vector<std::vector<double>> pts;
  double total = 1.0;
  for (const auto& a : axes) {
    pts.push_back(axis_points(a.lo, a.hi, opts.step));
    total *= static_cast<double>(pts.back().size());
  }
  if (total > static_cast<double>(opts.max_points)) {
    throw ConfigError("grid too large for the brute-force oracle");
  }

  PointEvaluator eval(problem);
  Best best;
  scan(axes, pts, x0, eval, best);
  if (!std::isfinite(best.objective)) throw SolverError("no feasible grid point");

  for (double h = opts.step / 2.0; opts.refine_tol > 0.0 && h >= opts.refine_tol; h /= 2.0) {
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const double c = best.x[axes[a].var];
      pts[a] = axis_points(std::max(axes[a].lo, c - 4.0 * h), std::min(axes[a].hi, c + 4.0 * h), h);
    }
    scan(axes, pts, best.x, eval, best);
  }

  OlsSolution sol = from_variables(problem, best.x);
  sol.status = OlsStatus::optimal;
  return sol;
}

}  // namespace loadshed
