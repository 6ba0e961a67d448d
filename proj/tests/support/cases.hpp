#pragma once

// Small hand-built networks shared by the unit tests, the acceptance suite,
// and the benchmarks.

#include <cstdint>
#include <vector>

#include "loadshed/netcase.hpp"
#include "loadshed/rng.hpp"

namespace loadshed::testing {

inline BusRecord bus(int id, BusKind kind, double p_d = 0.0, double q_d = 0.0, double v_min = 0.9,
                     double v_max = 1.1) {
  BusRecord b;
  b.id = id;
  b.kind = kind;
  b.p_d = p_d;
  b.q_d = q_d;
  b.v_min = v_min;
  b.v_max = v_max;
  b.base_kv = 100.0;
  return b;
}

inline GenRecord gen(int bus_id, double p_min, double p_max, double q_min, double q_max, double a = 0.0,
                     double b = 0.0, double c = 0.0, double v_set = 1.0) {
  GenRecord g;
  g.bus = bus_id;
  g.p_min = p_min;
  g.p_max = p_max;
  g.q_min = q_min;
  g.q_max = q_max;
  g.cost_a = a;
  g.cost_b = b;
  g.cost_c = c;
  g.v_set = v_set;
  return g;
}

inline BranchRecord line(int from, int to, double r, double x, double b_ch = 0.0, double rating = 0.0) {
  BranchRecord br;
  br.from = from;
  br.to = to;
  br.r = r;
  br.x = x;
  br.b_ch = b_ch;
  br.s_rating = rating;
  return br;
}

/// Slack bus 1 at 1.0 pu feeding a PQ load at bus 2 over one branch.
inline NetworkCase two_bus(double p_d_mw, double q_d_mvar, double r, double x, double rating = 0.0,
                           double p_max = 1000.0) {
  std::vector<BusRecord> buses{bus(1, BusKind::slack, 0.0, 0.0, 1.0, 1.0),
                               bus(2, BusKind::pq, p_d_mw, q_d_mvar, 0.5, 1.5)};
  std::vector<GenRecord> gens{gen(1, 0.0, p_max, -1000.0, 1000.0, 0.01, 20.0, 5.0)};
  return NetworkCase(100.0, buses, gens, {line(1, 2, r, x, 0.0, rating)});
}

/// Triangle with generators at buses 1 (reference) and 2 and a load at bus 3.
/// Generator voltages are pinned so the oracle grid stays two-dimensional;
/// the 1-3 line carries a rating that binds for most seeds.
inline NetworkCase random_three_bus(std::uint64_t seed) {
  // One draw per statement: argument evaluation order is unspecified.
  Rng rng(seed);
  const double v2 = rng.uniform(0.99, 1.01);
  const double p_d = rng.uniform(80.0, 160.0);
  const double q_d = rng.uniform(10.0, 40.0);
  const double q1_max = rng.uniform(20.0, 60.0);
  const double a1 = rng.uniform(0.01, 0.04);
  const double b1 = rng.uniform(10.0, 25.0);
  const double p2_max = rng.uniform(20.0, 60.0);
  const double a2 = rng.uniform(0.03, 0.08);
  const double b2 = rng.uniform(25.0, 40.0);
  double r[3], x[3];
  for (int k = 0; k < 3; ++k) {
    r[k] = rng.uniform(0.01, 0.03);
    x[k] = rng.uniform(0.05, 0.15);
  }
  const double rating = rng.uniform(40.0, 90.0);

  std::vector<BusRecord> buses{bus(1, BusKind::slack, 0.0, 0.0, 1.0, 1.0), bus(2, BusKind::pv, 0.0, 0.0, v2, v2),
                               bus(3, BusKind::pq, p_d, q_d, 0.94, 1.06)};
  std::vector<GenRecord> gens{gen(1, 0.0, 300.0, -40.0, q1_max, a1, b1, 0.0, 1.0),
                              gen(2, 0.0, p2_max, -50.0, 50.0, a2, b2, 0.0, v2)};
  std::vector<BranchRecord> branches{line(1, 2, r[0], x[0], 0.02), line(1, 3, r[1], x[1], 0.02, rating),
                                     line(2, 3, r[2], x[2], 0.02)};
  return NetworkCase(100.0, buses, gens, branches);
}

}  // namespace loadshed::testing
