#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "loadshed/features.hpp"
#include "loadshed/mlp.hpp"

namespace loadshed {

/// Root-mean-square difference. Throws ConfigError on empty or mismatched input.
double rmse(const std::vector<double>& predicted, const std::vector<double>& actual);

/// Percentage of values above eps (MW). Throws ConfigError on empty input.
double occurrence_rate(const std::vector<double>& p_s, double eps = 1e-3);
/// Occurrence over the ok rows of a dataset, in percent.
double occurrence_rate(const Dataset& d, double eps = 1e-3);

/// Spearman rank correlation with average ranks for ties; NaN when either
/// side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Prediction errors (MW / MVAr) on all rows and on the rows whose true p_s
/// exceeds eps.
struct SubsetMetrics {
  std::size_t samples = 0;
  std::size_t shedding = 0;
  double rmse_p_all = 0.0, rmse_q_all = 0.0;
  double rmse_p_shed = 0.0, rmse_q_shed = 0.0;  // NaN when nothing sheds
};

/// Only ok rows are scored.
SubsetMetrics evaluate(const MlpModel& model, const Dataset& d, double eps = 1e-3);

/// (train, test) partition of the ok rows, reproducible from the seed.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double test_fraction, std::uint64_t seed);

struct LoadCenterFit {
  MlpModel model;
  TrainReport training;
  Dataset train, test;  // raw ok rows
  SubsetMetrics train_metrics, test_metrics;
  double occurrence = 0.0;  // percent
};

/// Splits the ok rows with split_dataset(d, cfg.test_fraction, seed), fits
/// input and target normalization on the training part, trains, and scores
/// both parts.
LoadCenterFit fit_load_center(const Dataset& d, const TrainConfig& cfg, std::uint64_t seed,
                              const std::string& outage_class, double base_mva = 100.0);

struct EvalEntry {
  int bus = 0;
  std::string outage_class;
  double occurrence = 0.0;  // percent, over train and test rows
  SubsetMetrics train, test;
  int epochs = 0;
  std::string stop_reason;
};

struct EvalReport {
  std::vector<EvalEntry> entries;

  std::string text() const;
  std::string to_json() const;
};

EvalEntry make_entry(const LoadCenterFit& fit);
/// Scores a trained model on given train and test rows.
EvalEntry evaluate(const MlpModel& model, const Dataset& train, const Dataset& test, double eps = 1e-3);

/// CSV of v_post,sum_incident_p_flow,ps_mw over the ok rows.
void export_scatter(const Dataset& d, std::ostream& out);
void export_scatter(const Dataset& d, const std::string& path);

}  // namespace loadshed
