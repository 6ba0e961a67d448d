#include "loadshed/ipm.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/LU>

namespace loadshed {

std::string_view to_string(IpmStatus s) {
  switch (s) {
    case IpmStatus::converged: return "converged";
    case IpmStatus::max_iter: return "max_iter";
    case IpmStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

std::optional<Eigen::VectorXd> solve_kkt(const Eigen::MatrixXd& m, const Eigen::MatrixXd& dg,
                                         const Eigen::VectorXd& rhs, const IpmOptions& opts) {
  const auto n = m.rows();
  const auto neq = dg.rows();
  Eigen::MatrixXd kkt(n + neq, n + neq);
  double shift = 0.0;
  for (int attempt = 0; attempt <= opts.reg_attempts; ++attempt) {
    kkt.topLeftCorner(n, n) = m;
    kkt.topRightCorner(n, neq) = dg.transpose();
    kkt.bottomLeftCorner(neq, n) = dg;
    kkt.bottomRightCorner(neq, neq).setZero();
    if (shift > 0.0) {
      kkt.topLeftCorner(n, n).diagonal().array() += shift;
      kkt.bottomRightCorner(neq, neq).diagonal().array() -= shift;
    }
    // Barrier terms make the matrix badly scaled near convergence, so accept
    // any solve with a small backward residual instead of testing rcond.
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
    Eigen::VectorXd sol = lu.solve(rhs);
    if (sol.allFinite()) {
      const double scale = kkt.lpNorm<Eigen::Infinity>() * sol.lpNorm<Eigen::Infinity>() + rhs.lpNorm<Eigen::Infinity>();
      if ((kkt * sol - rhs).lpNorm<Eigen::Infinity>() <= 1e-9 * scale) return sol;
    }
    shift = shift == 0.0 ? opts.reg_initial : shift * opts.reg_growth;
  }
  return std::nullopt;
}

}  // namespace

IpmResult solve_ipm(const NlpFunctions& nlp, Eigen::VectorXd x, const IpmOptions& opts) {
  const int n = nlp.num_vars;
  double f = 0.0;
  Eigen::VectorXd df(n), g, h;
  Eigen::MatrixXd dg, dh;
  auto evaluate = [&]() {
    nlp.objective(x, f, df);
    nlp.equalities(x, g, dg);
    nlp.inequalities(x, h, dh);
  };
  evaluate();
  const auto neq = g.size();
  const auto niq = h.size();

  constexpr double z0 = 1.0;
  double gamma = 1.0;
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(neq);
  Eigen::VectorXd z = Eigen::VectorXd::Constant(niq, z0);
  Eigen::VectorXd mu(niq);
  for (Eigen::Index k = 0; k < niq; ++k) {
    if (h[k] < -z0) z[k] = -h[k];
    mu[k] = gamma / z[k] > z0 ? gamma / z[k] : z0;
  }

  IpmResult res;
  const double f0 = f;
  double f_prev = f;
  auto conditions = [&]() {
    const Eigen::VectorXd lx = df + dg.transpose() * lam + dh.transpose() * mu;
    const double maxh = niq > 0 ? h.maxCoeff() : 0.0;
    res.feascond = std::max(inf_norm(g), maxh) / (1.0 + std::max(inf_norm(x), inf_norm(z)));
    res.gradcond = inf_norm(lx) / (1.0 + std::max(inf_norm(lam), inf_norm(mu)));
    res.compcond = niq > 0 ? z.dot(mu) / (1.0 + inf_norm(x)) : 0.0;
    res.costcond = std::abs(f - f_prev) / (1.0 + std::abs(f_prev));
    return lx;
  };
  auto converged = [&]() {
    return res.feascond < opts.feas_tol && res.gradcond < opts.grad_tol &&
           res.compcond < opts.comp_tol && res.costcond < opts.cost_tol;
  };
  auto finish = [&](IpmStatus status) {
    res.x = x;
    res.lam = lam;
    res.mu = mu;
    res.z = z;
    res.f = f;
    res.status = status;
    return res;
  };

  Eigen::VectorXd lx = conditions();
  res.costcond = std::abs(f - f0) / (1.0 + std::abs(f0));
  if (converged()) return finish(IpmStatus::converged);

  while (res.iterations < opts.max_iter) {
    ++res.iterations;
    const Eigen::MatrixXd hl = nlp.hessian(x, lam, mu);
    const Eigen::VectorXd zinv = z.cwiseInverse();
    const Eigen::MatrixXd dh_scaled = zinv.cwiseProduct(mu).asDiagonal() * dh;  // diag(mu/z) dh
    const Eigen::MatrixXd m = hl + dh.transpose() * dh_scaled;
    const Eigen::VectorXd nvec =
        lx + dh.transpose() *
                 (zinv.cwiseProduct(mu.cwiseProduct(h) + Eigen::VectorXd::Constant(niq, gamma)));

    Eigen::VectorXd rhs(n + neq);
    rhs.head(n) = -nvec;
    rhs.tail(neq) = -g;
    auto step = solve_kkt(m, dg, rhs, opts);
    if (!step) return finish(IpmStatus::numerical_failure);
    const Eigen::VectorXd dx = step->head(n);
    const Eigen::VectorXd dlam = step->tail(neq);
    const Eigen::VectorXd dz = -h - z - dh * dx;
    const Eigen::VectorXd dmu =
        -mu + zinv.cwiseProduct(Eigen::VectorXd::Constant(niq, gamma) - mu.cwiseProduct(dz));

    double alpha_p = 1.0, alpha_d = 1.0;
    for (Eigen::Index k = 0; k < niq; ++k) {
      if (dz[k] < 0.0) alpha_p = std::min(alpha_p, opts.step_fraction * z[k] / -dz[k]);
      if (dmu[k] < 0.0) alpha_d = std::min(alpha_d, opts.step_fraction * mu[k] / -dmu[k]);
    }
    x += alpha_p * dx;
    z += alpha_p * dz;
    lam += alpha_d * dlam;
    mu += alpha_d * dmu;
    if (niq > 0) gamma = opts.sigma * z.dot(mu) / static_cast<double>(niq);

    f_prev = f;
    evaluate();
    if (!x.allFinite() || !std::isfinite(f) || !g.allFinite() || !h.allFinite() ||
        inf_norm(x) > 1e10 || inf_norm(lam) > 1e20 || inf_norm(mu) > 1e20) {
      return finish(IpmStatus::numerical_failure);
    }
    lx = conditions();
    if (converged()) return finish(IpmStatus::converged);
  }
  return finish(IpmStatus::max_iter);
}

}  // namespace loadshed
