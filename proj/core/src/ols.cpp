#include "loadshed/ols.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "loadshed/error.hpp"
#include "loadshed/format.hpp"
#include "polar_terms.hpp"

namespace loadshed {

namespace {

using detail::PairTerm;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFixedTol = 1e-12;

// One end of a rated branch; local buses 0 = from, 1 = to.
struct BranchEnd {
  std::array<std::size_t, 2> bus{};
  std::array<PairTerm, 2> terms{};
  double limit_sq = 0.0;
  std::size_t branch = 0;
  bool from_side = true;
};

std::vector<BranchEnd> rated_branch_ends(const NetworkCase& c) {
  std::vector<BranchEnd> ends;
  const double base = c.base_mva();
  for (std::size_t k = 0; k < c.branch_count(); ++k) {
    const auto& br = c.branches()[k];
    if (!br.in_service || br.s_rating <= 0.0) continue;
    const auto y = branch_admittance(br);
    const std::array<std::size_t, 2> bus{c.bus_index(br.from), c.bus_index(br.to)};
    const double lim = br.s_rating / base;
    ends.push_back({bus,
                    {PairTerm{0, 0, y.ff.real(), y.ff.imag()}, PairTerm{0, 1, y.ft.real(), y.ft.imag()}},
                    lim * lim, k, true});
    ends.push_back({bus,
                    {PairTerm{1, 1, y.tt.real(), y.tt.imag()}, PairTerm{1, 0, y.tf.real(), y.tf.imag()}},
                    lim * lim, k, false});
  }
  return ends;
}

struct EndFlow {
  double p = 0.0, q = 0.0;
  Eigen::Vector4d dp = Eigen::Vector4d::Zero();
  Eigen::Vector4d dq = Eigen::Vector4d::Zero();
  std::array<detail::PairValue, 2> values{};
};

EndFlow eval_end(const BranchEnd& e, const Eigen::VectorXd& x, int n) {
  const double v[2] = {x[static_cast<Eigen::Index>(e.bus[0])], x[static_cast<Eigen::Index>(e.bus[1])]};
  const double th[2] = {x[n + static_cast<Eigen::Index>(e.bus[0])],
                        x[n + static_cast<Eigen::Index>(e.bus[1])]};
  EndFlow out;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto r = detail::eval_pair(e.terms[k], v, th);
    out.values[k] = r;
    out.p += r.p;
    out.q += r.q;
    const auto slots = detail::pair_slots(e.terms[k], 2);
    for (std::size_t a = 0; a < 4; ++a) {
      out.dp[slots[a]] += r.dp[a];
      out.dq[slots[a]] += r.dq[a];
    }
  }
  return out;
}

std::array<int, 4> end_globals(const BranchEnd& e, int n) {
  return {static_cast<int>(e.bus[0]), static_cast<int>(e.bus[1]), n + static_cast<int>(e.bus[0]),
          n + static_cast<int>(e.bus[1])};
}

// Callbacks over an assembled problem.
class OlsNlp {
 public:
  explicit OlsNlp(const OlsProblem& p)
      : p_(p),
        n_(p.n_bus()),
        nv_(p.num_vars()),
        rows_(detail::admittance_rows(p.admittance)),
        ends_(rated_branch_ends(p.network)),
        lb_(p.lower_bounds()),
        ub_(p.upper_bounds()) {
    gen_at_.assign(static_cast<std::size_t>(n_), -1);
    load_at_.assign(static_cast<std::size_t>(n_), -1);
    for (int k = 0; k < p.n_gen(); ++k) gen_at_[p.gen_buses[static_cast<std::size_t>(k)].bus] = k;
    for (int k = 0; k < p.n_load(); ++k) load_at_[p.load_buses[static_cast<std::size_t>(k)]] = k;
    for (int k = 0; k < nv_; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      if (ub_[kk] - lb_[kk] <= kFixedTol) {
        fixed_.push_back(k);
        continue;
      }
      if (std::isfinite(ub_[kk])) upper_.push_back(k);
      if (std::isfinite(lb_[kk])) lower_.push_back(k);
    }
    if (p.options.fixed_power_factor) {
      for (int k = 0; k < p.n_load(); ++k) {
        const auto& b = p.network.buses()[p.load_buses[static_cast<std::size_t>(k)]];
        if (b.q_d != 0.0) pf_rows_.push_back({k, b.q_d / b.p_d});
      }
    }
    const double base = p.network.base_mva();
    const double s = p.objective_scale;
    obj_hess_ = Eigen::VectorXd::Zero(nv_);
    for (int k = 0; k < p.n_gen(); ++k) {
      obj_hess_[p.off_pg() + k] = 2.0 * p.gen_buses[static_cast<std::size_t>(k)].cost_a * base * base * s;
    }
    for (int k = 0; k < p.n_load(); ++k) {
      const auto bus = p.load_buses[static_cast<std::size_t>(k)];
      obj_hess_[p.off_ps() + k] = 2.0 * p.costs.shed_quadratic[bus] * base * base * s;
      obj_hess_[p.off_qs() + k] = 2.0 * p.costs.reactive_quadratic * base * base * s;
    }
  }

  NlpFunctions functions() const {
    NlpFunctions f;
    f.num_vars = nv_;
    f.objective = [this](const Eigen::VectorXd& x, double& val, Eigen::VectorXd& df) { objective(x, val, df); };
    f.equalities = [this](const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& dg) {
      equalities(x, g, dg);
    };
    f.inequalities = [this](const Eigen::VectorXd& x, Eigen::VectorXd& h, Eigen::MatrixXd& dh) {
      inequalities(x, h, dh);
    };
    f.hessian = [this](const Eigen::VectorXd& x, const Eigen::VectorXd& lam, const Eigen::VectorXd& mu) {
      return hessian(x, lam, mu);
    };
    return f;
  }

  void objective(const Eigen::VectorXd& x, double& val, Eigen::VectorXd& df) const {
    const double base = p_.network.base_mva();
    const double s = p_.objective_scale;
    val = p_.objective_dollars(x) * s;
    df = Eigen::VectorXd::Zero(nv_);
    for (int k = 0; k < p_.n_gen(); ++k) {
      const auto& g = p_.gen_buses[static_cast<std::size_t>(k)];
      const double pmw = base * x[p_.off_pg() + k];
      df[p_.off_pg() + k] = base * (2.0 * g.cost_a * pmw + g.cost_b) * s;
    }
    for (int k = 0; k < p_.n_load(); ++k) {
      const auto bus = p_.load_buses[static_cast<std::size_t>(k)];
      const double ps = base * x[p_.off_ps() + k];
      const double qs = base * x[p_.off_qs() + k];
      df[p_.off_ps() + k] =
          base * (p_.costs.shed_linear[bus] + 2.0 * p_.costs.shed_quadratic[bus] * ps) * s;
      df[p_.off_qs() + k] = base * (p_.costs.reactive_linear[bus] * reactive_sign(bus) +
                                    2.0 * p_.costs.reactive_quadratic * qs) * s;
    }
  }

  void equalities(const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& dg) const {
    const int nrows = 2 * n_ + static_cast<int>(fixed_.size() + pf_rows_.size());
    g = Eigen::VectorXd::Zero(nrows);
    dg = Eigen::MatrixXd::Zero(nrows, nv_);
    const double* v = x.data();
    const double* th = x.data() + n_;
    const double base = p_.network.base_mva();
    for (int i = 0; i < n_; ++i) {
      for (const auto& t : rows_[static_cast<std::size_t>(i)]) {
        const auto r = detail::eval_pair(t, v, th);
        g[i] += r.p;
        g[n_ + i] += r.q;
        const auto slots = detail::pair_slots(t, n_);
        for (std::size_t a = 0; a < 4; ++a) {
          dg(i, slots[a]) += r.dp[a];
          dg(n_ + i, slots[a]) += r.dq[a];
        }
      }
      const auto& bus = p_.network.buses()[static_cast<std::size_t>(i)];
      g[i] += bus.p_d / base;
      g[n_ + i] += bus.q_d / base;
      if (const int k = gen_at_[static_cast<std::size_t>(i)]; k >= 0) {
        g[i] -= x[p_.off_pg() + k];
        g[n_ + i] -= x[p_.off_qg() + k];
        dg(i, p_.off_pg() + k) = -1.0;
        dg(n_ + i, p_.off_qg() + k) = -1.0;
      }
      if (const int k = load_at_[static_cast<std::size_t>(i)]; k >= 0) {
        g[i] -= x[p_.off_ps() + k];
        g[n_ + i] -= x[p_.off_qs() + k];
        dg(i, p_.off_ps() + k) = -1.0;
        dg(n_ + i, p_.off_qs() + k) = -1.0;
      }
    }
    for (std::size_t r = 0; r < fixed_.size(); ++r) {
      const int k = fixed_[r];
      const auto row = 2 * n_ + static_cast<int>(r);
      g[row] = x[k] - lb_[static_cast<std::size_t>(k)];
      dg(row, k) = 1.0;
    }
    for (std::size_t r = 0; r < pf_rows_.size(); ++r) {
      const auto [k, ratio] = pf_rows_[r];
      const auto row = 2 * n_ + static_cast<int>(fixed_.size() + r);
      g[row] = x[p_.off_qs() + k] - ratio * x[p_.off_ps() + k];
      dg(row, p_.off_qs() + k) = 1.0;
      dg(row, p_.off_ps() + k) = -ratio;
    }
  }

  void inequalities(const Eigen::VectorXd& x, Eigen::VectorXd& h, Eigen::MatrixXd& dh) const {
    const int nrows = static_cast<int>(upper_.size() + lower_.size() + ends_.size());
    h.resize(nrows);
    dh = Eigen::MatrixXd::Zero(nrows, nv_);
    int row = 0;
    for (int k : upper_) {
      h[row] = x[k] - ub_[static_cast<std::size_t>(k)];
      dh(row++, k) = 1.0;
    }
    for (int k : lower_) {
      h[row] = lb_[static_cast<std::size_t>(k)] - x[k];
      dh(row++, k) = -1.0;
    }
    for (const auto& e : ends_) {
      const auto fl = eval_end(e, x, n_);
      h[row] = fl.p * fl.p + fl.q * fl.q - e.limit_sq;
      const auto gl = end_globals(e, n_);
      for (std::size_t a = 0; a < 4; ++a) dh(row, gl[a]) += 2.0 * (fl.p * fl.dp[a] + fl.q * fl.dq[a]);
      ++row;
    }
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& lam,
                          const Eigen::VectorXd& mu) const {
    Eigen::MatrixXd hess = obj_hess_.asDiagonal();
    const double* v = x.data();
    const double* th = x.data() + n_;
    for (int i = 0; i < n_; ++i) {
      const double wp = lam[i], wq = lam[n_ + i];
      if (wp == 0.0 && wq == 0.0) continue;
      for (const auto& t : rows_[static_cast<std::size_t>(i)]) {
        const auto r = detail::eval_pair(t, v, th);
        const auto hl = detail::pair_hessian(r, wp, wq);
        const auto slots = detail::pair_slots(t, n_);
        for (std::size_t a = 0; a < 4; ++a)
          for (std::size_t b = 0; b < 4; ++b) hess(slots[a], slots[b]) += hl(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
    }
    const auto first_line_row = static_cast<Eigen::Index>(upper_.size() + lower_.size());
    for (std::size_t e = 0; e < ends_.size(); ++e) {
      const double m = mu[first_line_row + static_cast<Eigen::Index>(e)];
      if (m == 0.0) continue;
      const auto& end = ends_[e];
      const auto fl = eval_end(end, x, n_);
      Eigen::Matrix4d local = 2.0 * m * (fl.dp * fl.dp.transpose() + fl.dq * fl.dq.transpose());
      for (std::size_t k = 0; k < 2; ++k) {
        const auto hl = detail::pair_hessian(fl.values[k], 2.0 * m * fl.p, 2.0 * m * fl.q);
        const auto slots = detail::pair_slots(end.terms[k], 2);
        for (std::size_t a = 0; a < 4; ++a)
          for (std::size_t b = 0; b < 4; ++b)
            local(slots[a], slots[b]) += hl(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
      const auto gl = end_globals(end, n_);
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) hess(gl[a], gl[b]) += local(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
    return hess;
  }

 private:
  const OlsProblem& p_;
  int n_;
  int nv_;
  std::vector<std::vector<PairTerm>> rows_;
  std::vector<BranchEnd> ends_;
  std::vector<double> lb_, ub_;
  std::vector<int> gen_at_, load_at_;
  std::vector<int> fixed_, upper_, lower_;
  std::vector<std::pair<int, double>> pf_rows_;  // (load slot, q_d / p_d)
  Eigen::VectorXd obj_hess_;

  double reactive_sign(std::size_t bus) const {
    const double q = p_.network.buses()[bus].q_d;
    return q > 0.0 ? 1.0 : (q < 0.0 ? -1.0 : 0.0);
  }
};

}  // namespace

double max_generator_marginal_cost(const NetworkCase& c) {
  double mc = 0.0;
  bool any = false;
  for (const auto& g : c.gens()) {
    if (!g.in_service) continue;
    mc = any ? std::max(mc, g.marginal_cost(g.p_max)) : g.marginal_cost(g.p_max);
    any = true;
  }
  return mc;
}

CostConfig CostConfig::defaults(const NetworkCase& c, double dominance) {
  const double mc = std::max(max_generator_marginal_cost(c), 1.0);
  double min_pd = kInf;
  for (const auto& b : c.buses()) {
    if (b.p_d > 0.0) min_pd = std::min(min_pd, b.p_d);
  }
  if (!std::isfinite(min_pd)) min_pd = 1.0;
  const std::size_t n = c.bus_count();
  CostConfig cc;
  cc.shed_linear.assign(n, dominance * mc);
  cc.shed_quadratic.assign(n, dominance * mc / min_pd);
  cc.reactive_quadratic = 1e-3 * dominance * mc / min_pd;
  cc.reactive_linear.assign(n, 0.0);
  cc.shed_cap.assign(n, 1.0);
  return cc;
}

std::vector<double> OlsProblem::lower_bounds() const {
  std::vector<double> lb(static_cast<std::size_t>(num_vars()));
  const double base = network.base_mva();
  for (int i = 0; i < n_bus(); ++i) {
    const auto& b = network.buses()[static_cast<std::size_t>(i)];
    lb[static_cast<std::size_t>(off_v() + i)] = b.v_min;
    lb[static_cast<std::size_t>(off_theta() + i)] =
        static_cast<std::size_t>(i) == network.slack_index() ? 0.0 : options.angle_min;
  }
  for (int k = 0; k < n_gen(); ++k) {
    const auto& g = gen_buses[static_cast<std::size_t>(k)];
    lb[static_cast<std::size_t>(off_pg() + k)] = g.p_min / base;
    lb[static_cast<std::size_t>(off_qg() + k)] = g.q_min / base;
  }
  for (int k = 0; k < n_load(); ++k) {
    const auto bus = load_buses[static_cast<std::size_t>(k)];
    const auto& b = network.buses()[bus];
    lb[static_cast<std::size_t>(off_ps() + k)] = 0.0;
    lb[static_cast<std::size_t>(off_qs() + k)] = std::min(0.0, costs.shed_cap[bus] * b.q_d) / base;
  }
  return lb;
}

std::vector<double> OlsProblem::upper_bounds() const {
  std::vector<double> ub(static_cast<std::size_t>(num_vars()));
  const double base = network.base_mva();
  for (int i = 0; i < n_bus(); ++i) {
    const auto& b = network.buses()[static_cast<std::size_t>(i)];
    ub[static_cast<std::size_t>(off_v() + i)] = b.v_max;
    ub[static_cast<std::size_t>(off_theta() + i)] =
        static_cast<std::size_t>(i) == network.slack_index() ? 0.0 : options.angle_max;
  }
  for (int k = 0; k < n_gen(); ++k) {
    const auto& g = gen_buses[static_cast<std::size_t>(k)];
    ub[static_cast<std::size_t>(off_pg() + k)] = g.p_max / base;
    ub[static_cast<std::size_t>(off_qg() + k)] = g.q_max / base;
  }
  for (int k = 0; k < n_load(); ++k) {
    const auto bus = load_buses[static_cast<std::size_t>(k)];
    const auto& b = network.buses()[bus];
    ub[static_cast<std::size_t>(off_ps() + k)] = costs.shed_cap[bus] * b.p_d / base;
    ub[static_cast<std::size_t>(off_qs() + k)] = std::max(0.0, costs.shed_cap[bus] * b.q_d) / base;
  }
  return ub;
}

double OlsProblem::objective_dollars(const Eigen::VectorXd& x) const {
  const double base = network.base_mva();
  double total = 0.0;
  for (int k = 0; k < n_gen(); ++k) {
    const auto& g = gen_buses[static_cast<std::size_t>(k)];
    const double p = base * x[off_pg() + k];
    total += (g.cost_a * p + g.cost_b) * p + g.cost_c;
  }
  for (int k = 0; k < n_load(); ++k) {
    const auto bus = load_buses[static_cast<std::size_t>(k)];
    const double ps = base * x[off_ps() + k];
    const double qs = base * x[off_qs() + k];
    total += (costs.shed_linear[bus] + costs.shed_quadratic[bus] * ps) * ps +
             costs.reactive_linear[bus] * std::abs(qs) + costs.reactive_quadratic * qs * qs;
  }
  return total;
}

OlsProblem assemble_ols(const NetworkCase& c, const CostConfig& costs, const OlsOptions& opts) {
  const std::size_t n = c.bus_count();
  if (costs.shed_linear.size() != n || costs.shed_quadratic.size() != n || costs.shed_cap.size() != n ||
      costs.reactive_linear.size() != n) {
    throw ConfigError("cost configuration must have one entry per bus");
  }
  if (!(costs.reactive_quadratic > 0.0)) throw ConfigError("reactive shedding cost must be positive");
  for (double r : costs.reactive_linear) {
    if (!(r >= 0.0)) throw ConfigError("reactive shedding cost must be nonnegative");
  }
  if (!(opts.angle_min < opts.angle_max)) throw ConfigError("empty angle bounds");
  if (!check_connectivity(c).connected) throw CaseError("disconnected case");

  OlsProblem p;
  p.network = c;
  p.costs = costs;
  p.options = opts;
  p.admittance = build_admittance(c);

  std::vector<int> slot(n, -1);
  std::vector<int> units(n, 0);
  for (const auto& g : c.gens()) {
    if (!g.in_service) continue;
    const auto i = c.bus_index(g.bus);
    if (slot[i] < 0) {
      slot[i] = static_cast<int>(p.gen_buses.size());
      p.gen_buses.push_back({i, g.p_min, g.p_max, g.q_min, g.q_max, g.cost_a, g.cost_b, g.cost_c});
    } else {
      auto& eq = p.gen_buses[static_cast<std::size_t>(slot[i])];
      if (eq.cost_a != g.cost_a || eq.cost_b != g.cost_b || eq.cost_c != g.cost_c) {
        throw CaseError("generators at bus " + std::to_string(g.bus) + " have different costs");
      }
      eq.p_min += g.p_min;
      eq.p_max += g.p_max;
      eq.q_min += g.q_min;
      eq.q_max += g.q_max;
    }
    ++units[i];
  }
  // k identical units sharing output equally: k * cost(P / k).
  for (auto& eq : p.gen_buses) {
    const double k = units[eq.bus];
    eq.cost_a /= k;
    eq.cost_c *= k;
  }
  std::sort(p.gen_buses.begin(), p.gen_buses.end(),
            [](const GenBus& a, const GenBus& b) { return a.bus < b.bus; });

  const double mc = max_generator_marginal_cost(c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = c.buses()[i];
    if (!(b.p_d > 0.0)) continue;
    p.load_buses.push_back(i);
    if (costs.shed_linear[i] < mc) {
      throw ConfigError("cost ordering violated at bus " + std::to_string(b.id) + ": marginal shedding cost " +
                        format_double(costs.shed_linear[i]) + " < generator marginal cost " +
                        format_double(mc));
    }
    if (!(costs.shed_quadratic[i] > 0.0)) {
      throw ConfigError("shedding cost at bus " + std::to_string(b.id) + " must be positive");
    }
    if (!(costs.shed_cap[i] >= 0.0 && costs.shed_cap[i] <= 1.0)) {
      throw ConfigError("shed cap at bus " + std::to_string(b.id) + " must lie in [0, 1]");
    }
  }
  p.objective_scale = 1.0 / (c.base_mva() * std::max(mc, 1.0));
  return p;
}

std::string_view to_string(OlsStatus s) {
  switch (s) {
    case OlsStatus::optimal: return "optimal";
    case OlsStatus::max_iter: return "max_iter";
    case OlsStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

double OlsSolution::total_p_shed() const { return std::accumulate(p_s.begin(), p_s.end(), 0.0); }
double OlsSolution::total_q_shed() const { return std::accumulate(q_s.begin(), q_s.end(), 0.0); }

Eigen::VectorXd to_variables(const OlsProblem& problem, const OlsSolution& sol) {
  const double base = problem.network.base_mva();
  Eigen::VectorXd x(problem.num_vars());
  for (int i = 0; i < problem.n_bus(); ++i) {
    x[problem.off_v() + i] = sol.v[static_cast<std::size_t>(i)];
    x[problem.off_theta() + i] = sol.theta[static_cast<std::size_t>(i)];
  }
  for (int k = 0; k < problem.n_gen(); ++k) {
    const auto bus = problem.gen_buses[static_cast<std::size_t>(k)].bus;
    x[problem.off_pg() + k] = sol.p_g[bus] / base;
    x[problem.off_qg() + k] = sol.q_g[bus] / base;
  }
  for (int k = 0; k < problem.n_load(); ++k) {
    const auto bus = problem.load_buses[static_cast<std::size_t>(k)];
    x[problem.off_ps() + k] = sol.p_s[bus] / base;
    x[problem.off_qs() + k] = sol.q_s[bus] / base;
  }
  return x;
}

OlsSolution from_variables(const OlsProblem& problem, const Eigen::VectorXd& x) {
  const double base = problem.network.base_mva();
  const auto n = static_cast<std::size_t>(problem.n_bus());
  OlsSolution sol;
  sol.v.resize(n);
  sol.theta.resize(n);
  sol.p_g.assign(n, 0.0);
  sol.q_g.assign(n, 0.0);
  sol.p_s.assign(n, 0.0);
  sol.q_s.assign(n, 0.0);
  for (int i = 0; i < problem.n_bus(); ++i) {
    sol.v[static_cast<std::size_t>(i)] = x[problem.off_v() + i];
    sol.theta[static_cast<std::size_t>(i)] = x[problem.off_theta() + i];
  }
  for (int k = 0; k < problem.n_gen(); ++k) {
    const auto bus = problem.gen_buses[static_cast<std::size_t>(k)].bus;
    sol.p_g[bus] = base * x[problem.off_pg() + k];
    sol.q_g[bus] = base * x[problem.off_qg() + k];
  }
  for (int k = 0; k < problem.n_load(); ++k) {
    const auto bus = problem.load_buses[static_cast<std::size_t>(k)];
    sol.p_s[bus] = base * x[problem.off_ps() + k];
    sol.q_s[bus] = base * x[problem.off_qs() + k];
  }
  sol.objective = problem.objective_dollars(x);
  return sol;
}

OlsSolution solve_ols(const OlsProblem& problem, const IpmOptions& opts,
                      const std::optional<PowerFlowSolution>& warm) {
  const auto lb = problem.lower_bounds();
  const auto ub = problem.upper_bounds();
  const double base = problem.network.base_mva();
  Eigen::VectorXd x0(problem.num_vars());
  const bool use_warm = warm && warm->converged && warm->v.size() == static_cast<std::size_t>(problem.n_bus());
  for (int i = 0; i < problem.n_bus(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    x0[problem.off_v() + i] = use_warm ? warm->v[k] : 1.0;
    x0[problem.off_theta() + i] = use_warm ? warm->theta[k] : 0.0;
  }
  auto midpoint = [](double lo, double hi) {
    if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
    if (std::isfinite(lo)) return lo;
    if (std::isfinite(hi)) return hi;
    return 0.0;
  };
  for (int k = problem.off_pg(); k < problem.off_ps(); ++k) {
    x0[k] = midpoint(lb[static_cast<std::size_t>(k)], ub[static_cast<std::size_t>(k)]);
  }
  for (int k = 0; k < problem.n_load(); ++k) {
    const auto bus = problem.load_buses[static_cast<std::size_t>(k)];
    const auto& b = problem.network.buses()[bus];
    x0[problem.off_ps() + k] = 0.01 * problem.costs.shed_cap[bus] * b.p_d / base;
    x0[problem.off_qs() + k] = 0.01 * problem.costs.shed_cap[bus] * b.q_d / base;
  }

  const OlsNlp nlp(problem);
  const auto res = solve_ipm(nlp.functions(), x0, opts);

  OlsSolution sol = from_variables(problem, res.x);
  sol.iterations = res.iterations;
  sol.kkt = {res.feascond, res.gradcond, res.compcond};
  switch (res.status) {
    case IpmStatus::converged: sol.status = OlsStatus::optimal; break;
    case IpmStatus::max_iter: sol.status = OlsStatus::max_iter; break;
    case IpmStatus::numerical_failure: sol.status = OlsStatus::numerical_failure; break;
  }
  if (sol.status == OlsStatus::optimal) {
    // Interior iterates can sit a hair outside the shedding box; snap to it.
    for (int k = 0; k < problem.n_load(); ++k) {
      const auto bus = problem.load_buses[static_cast<std::size_t>(k)];
      const auto kp = static_cast<std::size_t>(problem.off_ps() + k);
      const auto kq = static_cast<std::size_t>(problem.off_qs() + k);
      sol.p_s[bus] = std::clamp(sol.p_s[bus], base * lb[kp], base * ub[kp]);
      sol.q_s[bus] = std::clamp(sol.q_s[bus], base * lb[kq], base * ub[kq]);
    }
  }
  return sol;
}

ViolationReport verify_feasibility(const OlsSolution& sol, const OlsProblem& problem, double tol) {
  const auto& c = problem.network;
  const double base = c.base_mva();
  const std::size_t n = c.bus_count();
  ViolationReport report;
  auto check = [&](const char* name, int element, double excess) {
    if (!(excess <= tol)) report.violations.push_back({name, element, excess});
  };

  std::vector<bool> is_gen(n, false), is_load(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = c.buses()[i];
    check("v_max", b.id, sol.v[i] - b.v_max);
    check("v_min", b.id, b.v_min - sol.v[i]);
    if (i == c.slack_index()) {
      check("reference_angle", b.id, std::abs(sol.theta[i]));
    } else {
      check("theta_max", b.id, sol.theta[i] - problem.options.angle_max);
      check("theta_min", b.id, problem.options.angle_min - sol.theta[i]);
    }
  }
  for (const auto& g : problem.gen_buses) {
    const int id = c.buses()[g.bus].id;
    is_gen[g.bus] = true;
    check("p_g_max", id, (sol.p_g[g.bus] - g.p_max) / base);
    check("p_g_min", id, (g.p_min - sol.p_g[g.bus]) / base);
    check("q_g_max", id, (sol.q_g[g.bus] - g.q_max) / base);
    check("q_g_min", id, (g.q_min - sol.q_g[g.bus]) / base);
  }
  for (auto bus : problem.load_buses) {
    const auto& b = c.buses()[bus];
    is_load[bus] = true;
    const double cap = problem.costs.shed_cap[bus];
    check("p_s_min", b.id, -sol.p_s[bus] / base);
    check("p_s_max", b.id, (sol.p_s[bus] - cap * b.p_d) / base);
    check("q_s_min", b.id, (std::min(0.0, cap * b.q_d) - sol.q_s[bus]) / base);
    check("q_s_max", b.id, (sol.q_s[bus] - std::max(0.0, cap * b.q_d)) / base);
    if (problem.options.fixed_power_factor) {
      check("power_factor", b.id, std::abs(sol.q_s[bus] - sol.p_s[bus] * b.q_d / b.p_d) / base);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int id = c.buses()[i].id;
    if (!is_gen[i]) {
      check("p_g_max", id, std::abs(sol.p_g[i]) / base);
      check("q_g_max", id, std::abs(sol.q_g[i]) / base);
    }
    if (!is_load[i]) {
      check("p_s_max", id, std::abs(sol.p_s[i]) / base);
      check("q_s_max", id, std::abs(sol.q_s[i]) / base);
    }
  }

  const auto s = bus_injections(c, problem.admittance, sol.v, sol.theta);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = c.buses()[i];
    const double p_net = (sol.p_g[i] - b.p_d + sol.p_s[i]) / base;
    const double q_net = (sol.q_g[i] - b.q_d + sol.q_s[i]) / base;
    check("p_balance", b.id, std::abs(p_net - s[i].real()));
    check("q_balance", b.id, std::abs(q_net - s[i].imag()));
  }

  for (std::size_t k = 0; k < c.branch_count(); ++k) {
    const auto& br = c.branches()[k];
    if (!br.in_service || br.s_rating <= 0.0) continue;
    const auto f = c.bus_index(br.from), t = c.bus_index(br.to);
    const auto vf = std::polar(sol.v[f], sol.theta[f]);
    const auto vt = std::polar(sol.v[t], sol.theta[t]);
    const auto y = branch_admittance(br);
    const double lim = br.s_rating / base;
    check("line_from", static_cast<int>(k), std::abs(vf * std::conj(y.ff * vf + y.ft * vt)) - lim);
    check("line_to", static_cast<int>(k), std::abs(vt * std::conj(y.tf * vf + y.tt * vt)) - lim);
  }
  return report;
}

}  // namespace loadshed
