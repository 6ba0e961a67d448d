#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "loadshed/netcase.hpp"
#include "loadshed/ols.hpp"
#include "loadshed/powerflow.hpp"
#include "loadshed/scenarios.hpp"

namespace loadshed {

/// Inputs for one load center after a contingency. Demands, voltage and flows
/// are per-unit; frequency in Hz. Flows are measured at the load-center end of
/// each branch listed in the case as incident to the bus (ascending branch
/// position), positive when leaving the bus, zero when the branch is out.
struct FeatureVector {
  double p_d = 0.0, q_d = 0.0;
  double v_post = 0.0;
  std::vector<double> p_flows, q_flows;
  double freq = 0.0;

  /// [p_d, q_d, v_post, p_flows..., q_flows..., freq]
  std::vector<double> values() const;
};

struct TargetVector {
  double p_s = 0.0;  // MW
  double q_s = 0.0;  // MVAr
};

/// Branch positions incident to the bus, in service or not, ascending.
/// Throws ConfigError when the bus carries no real demand.
std::vector<std::size_t> feature_branches(const NetworkCase& c, int bus_id);

/// `post_case` is the sampled network with the outage applied.
FeatureVector extract_features(const NetworkCase& post_case, int bus_id, const PowerFlowSolution& pf_post,
                               const FrequencyProxy& freq);
TargetVector extract_target(const NetworkCase& c, int bus_id, const OlsSolution& sol);

struct DatasetRow {
  std::string scenario;
  SampleStatus status = SampleStatus::ok;
  std::vector<double> features;  // NaN when the power flow failed
  double ps_mw = 0.0, qs_mvar = 0.0;  // NaN unless status is ok
};

/// Training table for one load center.
struct Dataset {
  int bus = 0;
  std::vector<std::string> branch_labels;  // "from-to" of each incident branch
  std::vector<DatasetRow> rows;

  std::size_t width() const { return 4 + 2 * branch_labels.size(); }
  std::vector<std::string> feature_names() const;

  Dataset ok_rows() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
  /// One row per dataset row.
  Eigen::MatrixXd feature_matrix() const;
  /// Columns (ps_mw, qs_mvar).
  Eigen::MatrixXd target_matrix() const;
};

/// Rows in record order, one per sample.
Dataset build_dataset(const NetworkCase& base, int bus_id, const std::vector<Scenario>& scenarios,
                      const std::vector<SampleRecord>& records);

/// CSV with header
///   bus,scenario,status,p_d,q_d,v_post,p_flow_<f-t>...,q_flow_<f-t>...,freq,ps_mw,qs_mvar
/// and doubles printed in shortest round-trip form.
void write_dataset(const Dataset& d, std::ostream& out);
void save_dataset(const Dataset& d, const std::string& path);
/// Throws SchemaError on header or row mismatches.
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::string& path);

/// Per-column z-score parameters. std is the population standard deviation,
/// floored at 1e-9.
struct NormalizationStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t size() const { return mean.size(); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const;

  std::string to_json() const;
  static NormalizationStats from_json(std::string_view text);

  bool operator==(const NormalizationStats&) const = default;
};

constexpr double kStdFloor = 1e-9;

NormalizationStats fit_normalization(const Eigen::MatrixXd& x, std::vector<std::string> names = {});

/// Z-scores the features of every row. Statistics are fitted on the ok rows
/// unless `given` is supplied.
std::pair<Dataset, NormalizationStats> normalize(const Dataset& d, const NormalizationStats* given = nullptr);

}  // namespace loadshed
