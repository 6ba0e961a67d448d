#pragma once

// Derivatives of the polar power expressions shared by the power flow, the
// OLS constraints, and the line-limit constraints.
//
// Every bus injection and every branch end flow is a sum of pair terms
//
//   P-form:  Vi Vj (G cos(ti - tj) + B sin(ti - tj))
//   Q-form:  Vi Vj (G sin(ti - tj) - B cos(ti - tj))
//
// A diagonal term (i == j) reduces to Vi^2 G and -Vi^2 B. Accumulating the
// generic first and second derivatives with `+=` on aliased indices gives the
// correct diagonal derivatives, so no special case is needed.

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "loadshed/netcase.hpp"

namespace loadshed::detail {

struct PairTerm {
  int i = 0;
  int j = 0;
  double g = 0.0;
  double b = 0.0;
};

/// Local variable order (Vi, Vj, ti, tj).
struct PairValue {
  double p = 0.0;
  double q = 0.0;
  std::array<double, 4> dp{};
  std::array<double, 4> dq{};
  // phi and its derivatives, kept for the Hessian
  double vv = 0.0;
  double phi_p = 0.0, dphi_p = 0.0;
  double phi_q = 0.0, dphi_q = 0.0;
  double vi = 0.0, vj = 0.0;
};

inline PairValue eval_pair(const PairTerm& t, const double* v, const double* th) {
  PairValue r;
  r.vi = v[t.i];
  r.vj = v[t.j];
  const double d = th[t.i] - th[t.j];
  const double c = std::cos(d), s = std::sin(d);
  r.phi_p = t.g * c + t.b * s;
  r.dphi_p = -t.g * s + t.b * c;
  r.phi_q = t.g * s - t.b * c;
  r.dphi_q = t.g * c + t.b * s;
  r.vv = r.vi * r.vj;
  r.p = r.vv * r.phi_p;
  r.q = r.vv * r.phi_q;
  r.dp = {r.vj * r.phi_p, r.vi * r.phi_p, r.vv * r.dphi_p, -r.vv * r.dphi_p};
  r.dq = {r.vj * r.phi_q, r.vi * r.phi_q, r.vv * r.dphi_q, -r.vv * r.dphi_q};
  return r;
}

/// Local 4x4 Hessian of wp * P-form + wq * Q-form (phi'' = -phi for both).
inline Eigen::Matrix4d pair_hessian(const PairValue& r, double wp, double wq) {
  const double phi = wp * r.phi_p + wq * r.phi_q;
  const double dphi = wp * r.dphi_p + wq * r.dphi_q;
  const double d2phi = -phi;
  Eigen::Matrix4d h;
  h << 0.0, phi, r.vj * dphi, -r.vj * dphi,
       phi, 0.0, r.vi * dphi, -r.vi * dphi,
       r.vj * dphi, r.vi * dphi, r.vv * d2phi, -r.vv * d2phi,
       -r.vj * dphi, -r.vi * dphi, -r.vv * d2phi, r.vv * d2phi;
  return h;
}

/// Global positions of (Vi, Vj, ti, tj) in a [V(0..n), theta(n..2n)] layout.
inline std::array<int, 4> pair_slots(const PairTerm& t, int n) {
  return {t.i, t.j, n + t.i, n + t.j};
}

/// Pair terms of each row of Y, in column order.
inline std::vector<std::vector<PairTerm>> admittance_rows(const AdmittanceMatrix& y) {
  std::vector<std::vector<PairTerm>> rows(static_cast<std::size_t>(y.g.rows()));
  for (Eigen::Index i = 0; i < y.g.outerSize(); ++i) {
    for (decltype(y.g)::InnerIterator it(y.g, i); it; ++it) {
      rows[static_cast<std::size_t>(i)].push_back(
          {static_cast<int>(i), static_cast<int>(it.col()), it.value(), y.b.coeff(i, it.col())});
    }
  }
  return rows;
}

}  // namespace loadshed::detail
