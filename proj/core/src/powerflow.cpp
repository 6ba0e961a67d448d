#include "loadshed/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <Eigen/LU>

#include "loadshed/error.hpp"
#include "polar_terms.hpp"

namespace loadshed {

namespace {

using detail::PairTerm;

struct BusSetup {
  std::vector<int> kind;  // 0 = pq, 1 = pv, 2 = slack (effective)
  std::vector<double> p_spec, q_spec;
  std::vector<double> v_set;
};

BusSetup classify(const NetworkCase& c) {
  const std::size_t n = c.bus_count();
  const double base = c.base_mva();
  BusSetup s;
  s.kind.assign(n, 0);
  s.p_spec.assign(n, 0.0);
  s.q_spec.assign(n, 0.0);
  s.v_set.assign(n, 1.0);
  std::vector<bool> has_gen(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = c.buses()[i];
    s.p_spec[i] = -b.p_d / base;
    s.q_spec[i] = -b.q_d / base;
    s.v_set[i] = b.v_m;
  }
  for (const auto& g : c.gens()) {
    if (!g.in_service) continue;
    const auto i = c.bus_index(g.bus);
    if (!has_gen[i]) s.v_set[i] = g.v_set;
    has_gen[i] = true;
    s.p_spec[i] += g.p_g / base;
    s.q_spec[i] += g.q_g / base;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = c.buses()[i].kind;
    if (i == c.slack_index()) {
      s.kind[i] = 2;
    } else if (kind == BusKind::pv && has_gen[i]) {
      s.kind[i] = 1;
    } else {
      s.kind[i] = 0;
      s.v_set[i] = 1.0;
    }
  }
  return s;
}

}  // namespace

std::optional<Eigen::VectorXd> dense_lu_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (!(lu.rcond() > 1e-14)) return std::nullopt;
  Eigen::VectorXd x = lu.solve(rhs);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

double PowerFlowSolution::total_p_g() const {
  return std::accumulate(p_g.begin(), p_g.end(), 0.0);
}

const LineFlow* LineFlowSet::find(std::size_t branch) const {
  for (const auto& f : flows) {
    if (f.branch == branch) return &f;
  }
  return nullptr;
}

ConnectivityReport check_connectivity(const NetworkCase& c) {
  const std::size_t n = c.bus_count();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& br : c.branches()) {
    if (!br.in_service) continue;
    const auto f = c.bus_index(br.from), t = c.bus_index(br.to);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  std::vector<int> comp(n, -1);
  int ncomp = 0;
  auto bfs = [&](std::size_t start) {
    std::deque<std::size_t> queue{start};
    comp[start] = ncomp;
    while (!queue.empty()) {
      auto u = queue.front();
      queue.pop_front();
      for (auto w : adj[u]) {
        if (comp[w] < 0) {
          comp[w] = ncomp;
          queue.push_back(w);
        }
      }
    }
    ++ncomp;
  };
  bfs(c.slack_index());
  for (std::size_t i = 0; i < n; ++i) {
    if (comp[i] < 0) bfs(i);
  }
  ConnectivityReport report;
  report.islands.resize(static_cast<std::size_t>(ncomp - 1));
  for (std::size_t i = 0; i < n; ++i) {
    if (comp[i] > 0) report.islands[static_cast<std::size_t>(comp[i] - 1)].push_back(c.buses()[i].id);
  }
  for (auto& isl : report.islands) std::sort(isl.begin(), isl.end());
  std::sort(report.islands.begin(), report.islands.end());
  report.connected = report.islands.empty();
  return report;
}

std::vector<std::complex<double>> bus_injections(const NetworkCase& c, const AdmittanceMatrix& y,
                                                 const std::vector<double>& v,
                                                 const std::vector<double>& theta) {
  const std::size_t n = c.bus_count();
  std::vector<std::complex<double>> vc(n);
  for (std::size_t i = 0; i < n; ++i) vc[i] = std::polar(v[i], theta[i]);
  std::vector<std::complex<double>> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::complex<double> current = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto yij = y(i, j);
      if (yij != 0.0) current += yij * vc[j];
    }
    s[i] = vc[i] * std::conj(current);
  }
  return s;
}

PowerFlowSolution solve_power_flow(const NetworkCase& c,
                                   const std::optional<PowerFlowSolution>& warm,
                                   const PowerFlowOptions& opts) {
  const int n = static_cast<int>(c.bus_count());
  const auto setup = classify(c);
  const auto y = build_admittance(c);
  const auto rows = detail::admittance_rows(y);

  PowerFlowSolution sol;
  sol.v = setup.v_set;
  sol.theta.assign(static_cast<std::size_t>(n), 0.0);
  if (warm) {
    if (warm->v.size() != sol.v.size() || warm->theta.size() != sol.theta.size()) {
      throw ConfigError("warm start does not match the case dimension");
    }
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (setup.kind[k] == 0) sol.v[k] = warm->v[k];
      if (setup.kind[k] != 2) sol.theta[k] = warm->theta[k];
    }
  }

  // Unknown ordering: theta at non-slack buses, then V at PQ buses.
  std::vector<int> th_idx, v_idx;
  for (int i = 0; i < n; ++i) {
    if (setup.kind[static_cast<std::size_t>(i)] != 2) th_idx.push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    if (setup.kind[static_cast<std::size_t>(i)] == 0) v_idx.push_back(i);
  }
  const int npv_pq = static_cast<int>(th_idx.size());
  const int npq = static_cast<int>(v_idx.size());
  const int dim = npv_pq + npq;
  // Column of each global variable in the reduced system; -1 when fixed.
  std::vector<int> col(2 * static_cast<std::size_t>(n), -1);
  for (int k = 0; k < npv_pq; ++k) col[static_cast<std::size_t>(n + th_idx[k])] = k;
  for (int k = 0; k < npq; ++k) col[static_cast<std::size_t>(v_idx[k])] = npv_pq + k;

  Eigen::VectorXd p(n), q(n);
  Eigen::MatrixXd jac(dim, dim);

  auto evaluate = [&](bool with_jacobian) {
    p.setZero();
    q.setZero();
    if (with_jacobian) jac.setZero();
    for (int i = 0; i < n; ++i) {
      for (const auto& t : rows[static_cast<std::size_t>(i)]) {
        const auto r = detail::eval_pair(t, sol.v.data(), sol.theta.data());
        p[i] += r.p;
        q[i] += r.q;
        if (!with_jacobian) continue;
        const auto slots = detail::pair_slots(t, n);
        const int prow = col[static_cast<std::size_t>(n + i)];  // P row follows theta_i
        const int qrow = col[static_cast<std::size_t>(i)];      // Q row follows V_i
        for (int a = 0; a < 4; ++a) {
          const int cc = col[static_cast<std::size_t>(slots[static_cast<std::size_t>(a)])];
          if (cc < 0) continue;
          if (prow >= 0) jac(prow, cc) += r.dp[static_cast<std::size_t>(a)];
          if (qrow >= 0) jac(qrow, cc) += r.dq[static_cast<std::size_t>(a)];
        }
      }
    }
  };

  Eigen::VectorXd mis(dim);
  auto mismatch = [&]() {
    for (int k = 0; k < npv_pq; ++k) {
      const int i = th_idx[k];
      mis[k] = p[i] - setup.p_spec[static_cast<std::size_t>(i)];
    }
    for (int k = 0; k < npq; ++k) {
      const int i = v_idx[k];
      mis[npv_pq + k] = q[i] - setup.q_spec[static_cast<std::size_t>(i)];
    }
    return dim == 0 ? 0.0 : mis.lpNorm<Eigen::Infinity>();
  };

  evaluate(true);
  double norm = mismatch();
  bool failed = false;
  while (norm > opts.tol && sol.iterations < opts.max_iter) {
    if (!std::isfinite(norm)) {
      failed = true;
      break;
    }
    auto dx = opts.linear_solve(jac, -mis);
    if (!dx) {
      failed = true;
      break;
    }
    for (int k = 0; k < npv_pq; ++k) sol.theta[static_cast<std::size_t>(th_idx[k])] += opts.damping * (*dx)[k];
    for (int k = 0; k < npq; ++k) sol.v[static_cast<std::size_t>(v_idx[k])] += opts.damping * (*dx)[npv_pq + k];
    ++sol.iterations;
    evaluate(true);
    norm = mismatch();
  }
  sol.max_mismatch = norm;
  sol.converged = !failed && std::isfinite(norm) && norm <= opts.tol;

  // Back-compute realized generation.
  const double base = c.base_mva();
  sol.p_g.assign(static_cast<std::size_t>(n), 0.0);
  sol.q_g.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> qmax(static_cast<std::size_t>(n), 0.0), qmin(static_cast<std::size_t>(n), 0.0);
  std::vector<bool> has_gen(static_cast<std::size_t>(n), false);
  for (const auto& g : c.gens()) {
    if (!g.in_service) continue;
    const auto i = c.bus_index(g.bus);
    has_gen[i] = true;
    sol.p_g[i] += g.p_g / base;
    sol.q_g[i] += g.q_g / base;
    qmax[i] += g.q_max / base;
    qmin[i] += g.q_min / base;
  }
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& b = c.buses()[k];
    if (setup.kind[k] == 2) sol.p_g[k] = p[i] + b.p_d / base;
    if (setup.kind[k] != 0) {
      sol.q_g[k] = q[i] + b.q_d / base;
      if (has_gen[k] && (sol.q_g[k] > qmax[k] + 1e-9 || sol.q_g[k] < qmin[k] - 1e-9)) {
        sol.q_limit_violations.push_back(k);
      }
    }
  }
  return sol;
}

LineFlowSet line_flows(const NetworkCase& c, const PowerFlowSolution& sol) {
  LineFlowSet set;
  for (std::size_t k = 0; k < c.branch_count(); ++k) {
    const auto& br = c.branches()[k];
    if (!br.in_service) continue;
    const auto f = c.bus_index(br.from), t = c.bus_index(br.to);
    const auto vf = std::polar(sol.v[f], sol.theta[f]);
    const auto vt = std::polar(sol.v[t], sol.theta[t]);
    const auto y = branch_admittance(br);
    set.flows.push_back({k, vf * std::conj(y.ff * vf + y.ft * vt), vt * std::conj(y.tf * vf + y.tt * vt)});
  }
  return set;
}

FrequencyProxy frequency_proxy(double pre_gen_total, double post_gen_total, double beta, double f0) {
  if (!(beta > 0.0)) throw ConfigError("frequency response constant must be positive");
  const double delta = post_gen_total - pre_gen_total;
  return {f0 - delta / beta, delta, beta};
}

}  // namespace loadshed
