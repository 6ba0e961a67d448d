#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SparseCore>

namespace loadshed {

enum class BusKind { pq = 1, pv = 2, slack = 3 };

/// One row of the bus table. Demands are in MW/MVAr, shunts in MW/MVAr
/// consumed at 1.0 pu voltage (the file convention), voltages in pu.
struct BusRecord {
  int id = 0;
  BusKind kind = BusKind::pq;
  double p_d = 0.0;
  double q_d = 0.0;
  double shunt_g = 0.0;
  double shunt_b = 0.0;
  int area = 1;
  double v_m = 1.0;    // initial voltage magnitude, pu
  double v_a = 0.0;    // initial voltage angle, degrees
  double base_kv = 0.0;
  int zone = 1;
  double v_max = 1.1;
  double v_min = 0.9;

  bool operator==(const BusRecord&) const = default;
};

/// One generator with its polynomial cost a*P^2 + b*P + c (P in MW, $/h).
struct GenRecord {
  int bus = 0;
  double p_g = 0.0;  // dispatch setpoint, MW
  double q_g = 0.0;  // MVAr
  double q_max = 0.0;
  double q_min = 0.0;
  double v_set = 1.0;  // voltage setpoint, pu
  double m_base = 100.0;
  bool in_service = true;
  double p_max = 0.0;
  double p_min = 0.0;
  double cost_a = 0.0;
  double cost_b = 0.0;
  double cost_c = 0.0;

  /// Marginal cost at output p_mw, $/MWh.
  double marginal_cost(double p_mw) const { return 2.0 * cost_a * p_mw + cost_b; }
  double cost(double p_mw) const { return (cost_a * p_mw + cost_b) * p_mw + cost_c; }

  bool operator==(const GenRecord&) const = default;
};

/// Pi-model branch. `tap` is the off-nominal ratio (1.0 when absent) and
/// `shift_deg` the phase shift in degrees; s_rating = 0 means unlimited.
struct BranchRecord {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_ch = 0.0;
  double s_rating = 0.0;  // MVA
  double rate_b = 0.0;
  double rate_c = 0.0;
  double tap = 1.0;
  double shift_deg = 0.0;
  bool in_service = true;
  double ang_min = -360.0;
  double ang_max = 360.0;

  double shift_rad() const;
  std::string label() const;

  bool operator==(const BranchRecord&) const = default;
};

/// Validated grid model. Immutable by convention: the transforming operations
/// return modified copies.
class NetworkCase {
 public:
  NetworkCase() = default;
  /// Validates all invariants; throws CaseError on violation.
  NetworkCase(double base_mva, std::vector<BusRecord> buses,
              std::vector<GenRecord> gens, std::vector<BranchRecord> branches);

  double base_mva() const { return base_mva_; }
  const std::vector<BusRecord>& buses() const { return buses_; }
  const std::vector<GenRecord>& gens() const { return gens_; }
  const std::vector<BranchRecord>& branches() const { return branches_; }

  std::size_t bus_count() const { return buses_.size(); }
  std::size_t branch_count() const { return branches_.size(); }
  std::size_t in_service_branch_count() const;

  /// Position of bus `id` in buses(); throws CaseError for unknown ids.
  std::size_t bus_index(int id) const;
  std::size_t slack_index() const { return slack_; }

  /// Index of the first branch joining buses a and b (either orientation).
  std::size_t branch_index(int a, int b) const;

  /// Total real / reactive demand in MW / MVAr.
  double total_p_demand() const;
  double total_q_demand() const;

  /// Branches in service incident to bus index `bus`, ascending.
  std::vector<std::size_t> incident_branches(std::size_t bus,
                                             bool in_service_only) const;

  bool operator==(const NetworkCase&) const = default;

 private:
  void validate();

  double base_mva_ = 100.0;
  std::vector<BusRecord> buses_;
  std::vector<GenRecord> gens_;
  std::vector<BranchRecord> branches_;
  std::map<int, std::size_t> index_;
  std::size_t slack_ = 0;
};

/// Y = G + jB on the system base. Only in-service branches contribute.
struct AdmittanceMatrix {
  Eigen::SparseMatrix<double, Eigen::RowMajor> g;
  Eigen::SparseMatrix<double, Eigen::RowMajor> b;

  std::complex<double> operator()(std::size_t i, std::size_t j) const {
    return {g.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
            b.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))};
  }
};

/// Two-port admittances of a pi-model branch (from-side tap convention).
struct BranchAdmittance {
  std::complex<double> ff, ft, tf, tt;
};

BranchAdmittance branch_admittance(const BranchRecord& br);

/// Parses the matrix-table text format (baseMVA, bus, gen, branch, gencost).
NetworkCase parse_case(std::string_view text);
NetworkCase load_case(const std::string& path);

/// Canonical text form; parse_case(serialize_case(c)) == c.
std::string serialize_case(const NetworkCase& c);

AdmittanceMatrix build_admittance(const NetworkCase& c);

/// Copy with the listed branches (0-based positions) taken out of service.
NetworkCase apply_outage(const NetworkCase& c, std::span<const std::size_t> lines);

/// Copy with bus demands multiplied per bus index; power factor preserved.
NetworkCase scale_loads(const NetworkCase& c, std::span<const double> factor_per_bus);
NetworkCase scale_loads(const NetworkCase& c, const std::map<int, double>& factor_per_bus_id);

/// Copy with every demand scaled by one factor so that total real demand
/// equals target_mw.
NetworkCase scale_to_total(const NetworkCase& c, double target_mw);

/// The bundled IEEE 14-bus case text.
std::string_view ieee14_case_text();
NetworkCase ieee14();

}  // namespace loadshed
