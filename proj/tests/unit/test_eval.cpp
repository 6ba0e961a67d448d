#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "loadshed/error.hpp"
#include "loadshed/eval.hpp"
#include "loadshed/features.hpp"
#include "loadshed/mlp.hpp"
#include "loadshed/rng.hpp"

namespace loadshed {
namespace {

// Bus-14 shaped rows whose targets are exactly 50 * p_d and 50 * q_d.
Dataset proportional(std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d{14, {"9-14", "13-14"}, {}};
  for (std::size_t r = 0; r < rows; ++r) {
    DatasetRow row;
    row.scenario = "2-3";
    row.status = r % 25 == 24 ? SampleStatus::ols_failed : SampleStatus::ok;
    const double p_d = rng.uniform(0.1, 0.2), q_d = rng.uniform(0.02, 0.06);
    row.features = {p_d, q_d, rng.uniform(0.9, 1.0), rng.uniform(-0.1, 0.0), rng.uniform(-0.1, 0.0),
                    rng.uniform(-0.05, 0.0), rng.uniform(-0.05, 0.0), rng.uniform(59.95, 60.05)};
    row.ps_mw = row.status == SampleStatus::ok ? (r % 4 ? 50.0 * p_d : 0.0) : std::nan("");
    row.qs_mvar = row.status == SampleStatus::ok ? (r % 4 ? 50.0 * q_d : 0.0) : std::nan("");
    d.rows.push_back(row);
  }
  return d;
}

MlpModel zero_model() {
  auto m = init_mlp({8, 2}, 1);
  m.layers[0].w.setZero();
  return m;
}

TEST(Rmse, Basics) {
  EXPECT_EQ(rmse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), 0.0);
  EXPECT_NEAR(rmse({3.0, 4.0}, {0.0, 0.0}), std::sqrt(12.5), 1e-15);
  EXPECT_NEAR(rmse({1.0}, {-1.5}), 2.5, 1e-15);
  EXPECT_THROW(rmse({}, {}), ConfigError);
  EXPECT_THROW(rmse({1.0}, {1.0, 2.0}), ConfigError);
}

TEST(Rmse, SymmetricAndPermutationInvariant) {
  Rng rng(3);
  std::vector<double> a(30), b(30);
  for (std::size_t k = 0; k < 30; ++k) {
    a[k] = rng.uniform(-5, 5);
    b[k] = rng.uniform(-5, 5);
  }
  EXPECT_EQ(rmse(a, b), rmse(b, a));
  std::vector<std::size_t> order(30);
  for (std::size_t k = 0; k < 30; ++k) order[k] = (k * 7) % 30;
  std::vector<double> pa, pb;
  for (auto k : order) {
    pa.push_back(a[k]);
    pb.push_back(b[k]);
  }
  EXPECT_NEAR(rmse(pa, pb), rmse(a, b), 1e-14);
}

TEST(Occurrence, Basics) {
  EXPECT_EQ(occurrence_rate(std::vector<double>(10, 0.0)), 0.0);
  EXPECT_EQ(occurrence_rate(std::vector<double>(10, 2.0)), 100.0);
  EXPECT_EQ(occurrence_rate({0.0, 5e-4, 2e-3, 1.0}), 50.0);
  EXPECT_THROW(occurrence_rate(std::vector<double>{}), ConfigError);

  const auto d = proportional(100, 1);
  std::vector<double> ok;
  for (const auto& r : d.rows)
    if (r.status == SampleStatus::ok) ok.push_back(r.ps_mw);
  EXPECT_EQ(occurrence_rate(d), occurrence_rate(ok));
  EXPECT_EQ(occurrence_rate(d), 100.0 * 72.0 / 96.0);
}

TEST(Occurrence, MonotoneInThreshold) {
  Rng rng(5);
  std::vector<double> p(200);
  for (auto& v : p) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 2.0);
  double last = 100.0;
  for (double eps : {0.0, 1e-6, 1e-3, 0.01, 0.1, 0.5, 1.0, 1.9, 2.5}) {
    const double rate = occurrence_rate(p, eps);
    EXPECT_LE(rate, last);
    last = rate;
  }
  EXPECT_EQ(last, 0.0);
}

TEST(Spearman, Values) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 45}), 1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-15);
  // Average ranks a = {1, 2.5, 2.5, 4}, b = {1, 3, 2, 4}: 4.5 / sqrt(4.5 * 5).
  EXPECT_NEAR(spearman({1, 2, 2, 3}, {1, 3, 2, 4}), 4.5 / std::sqrt(22.5), 1e-14);
  EXPECT_TRUE(std::isnan(spearman({1, 1, 1}, {1, 2, 3})));
  EXPECT_NEAR(spearman({0.1, 5.0, 2.0}, {1.0, 1e6, 3.0}), 1.0, 1e-15);
}

TEST(Evaluate, PerfectPredictor) {
  auto d = proportional(80, 2).ok_rows();
  for (auto& r : d.rows) {
    r.ps_mw = 50.0 * r.features[0];
    r.qs_mvar = 50.0 * r.features[1];
  }
  auto m = zero_model();
  m.layers[0].w(0, 0) = 50.0;
  m.layers[0].w(1, 1) = 50.0;
  const auto s = evaluate(m, d);
  EXPECT_EQ(s.rmse_p_all, 0.0);
  EXPECT_EQ(s.rmse_q_all, 0.0);
  EXPECT_EQ(s.rmse_p_shed, 0.0);
  EXPECT_EQ(s.samples, d.rows.size());
}

TEST(Evaluate, ZeroPredictorGivesTargetRms) {
  const auto d = proportional(100, 3);
  const auto s = evaluate(zero_model(), d);
  std::vector<double> p, shed;
  for (const auto& r : d.rows) {
    if (r.status != SampleStatus::ok) continue;
    p.push_back(r.ps_mw);
    if (r.ps_mw > 1e-3) shed.push_back(r.ps_mw);
  }
  EXPECT_EQ(s.samples, p.size());
  EXPECT_EQ(s.shedding, shed.size());
  EXPECT_NEAR(s.rmse_p_all, rmse(std::vector<double>(p.size(), 0.0), p), 1e-14);
  EXPECT_NEAR(s.rmse_p_shed, rmse(std::vector<double>(shed.size(), 0.0), shed), 1e-14);

  auto none = d;
  for (auto& r : none.rows) r.ps_mw = 0.0;
  EXPECT_TRUE(std::isnan(evaluate(zero_model(), none).rmse_p_shed));
}

TEST(Evaluate, SplitAndFit) {
  const auto d = proportional(250, 4);
  const auto [train, test] = split_dataset(d, 0.2, 7);
  EXPECT_EQ(train.rows.size() + test.rows.size(), 240u);
  EXPECT_EQ(test.rows.size(), 48u);
  const auto [train2, test2] = split_dataset(d, 0.2, 7);
  EXPECT_EQ(train2.rows.size(), train.rows.size());
  for (std::size_t k = 0; k < test.rows.size(); ++k) EXPECT_EQ(test.rows[k].features, test2.rows[k].features);

  TrainConfig cfg;
  cfg.hidden = {6};
  cfg.max_epochs = 60;
  const auto fit = fit_load_center(d, cfg, 11, "single");
  EXPECT_EQ(fit.train.rows.size(), 192u);
  EXPECT_EQ(fit.test.rows.size(), 48u);
  EXPECT_EQ(fit.model.bus, 14);
  EXPECT_EQ(fit.model.outage_class, "single");
  EXPECT_EQ(fit.model.sizes, (std::vector<int>{8, 6, 2}));
  EXPECT_EQ(fit.model.input_stats.names, d.feature_names());
  EXPECT_EQ(fit.occurrence, occurrence_rate(d));
  const auto direct = evaluate(fit.model, fit.test);
  EXPECT_EQ(fit.test_metrics.rmse_p_all, direct.rmse_p_all);

  const auto entry = evaluate(fit.model, fit.train, fit.test);
  EXPECT_EQ(entry.test.rmse_p_all, direct.rmse_p_all);
  EXPECT_EQ(entry.train.rmse_p_all, fit.train_metrics.rmse_p_all);

  const auto again = fit_load_center(d, cfg, 11, "single");
  EXPECT_EQ(again.model, fit.model);
}

TEST(Report, TextAndJson) {
  EvalReport report;
  EvalEntry e;
  e.bus = 14;
  e.outage_class = "single";
  e.occurrence = 98.7;
  e.train.samples = 800;
  e.test.samples = 200;
  e.train.rmse_p_all = 0.25;
  e.test.rmse_p_shed = std::nan("");
  report.entries.push_back(e);
  const auto text = report.text();
  for (const char* col : {"bus", "occur", "train_p", "test_p"}) EXPECT_NE(text.find(col), std::string::npos) << col;
  EXPECT_NE(text.find("98.700"), std::string::npos);
  const auto json = report.to_json();
  EXPECT_NE(json.find("\"entries\""), std::string::npos);
  EXPECT_NE(json.find("\"occurrence\""), std::string::npos);
  EXPECT_NE(json.find("\"bus\": 14"), std::string::npos);
}

TEST(Scatter, Columns) {
  const auto d = proportional(100, 6);
  std::stringstream ss;
  export_scatter(d, ss);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "v_post,sum_incident_p_flow,ps_mw");
  const auto ok = d.ok_rows();
  std::size_t n = 0;
  while (std::getline(ss, line)) {
    const auto& row = ok.rows.at(n++);
    std::stringstream fields(line);
    std::string v, sum, ps;
    std::getline(fields, v, ',');
    std::getline(fields, sum, ',');
    std::getline(fields, ps, ',');
    EXPECT_EQ(std::stod(v), row.features[2]);
    EXPECT_NEAR(std::stod(sum), row.features[3] + row.features[4], 1e-15);
    EXPECT_EQ(std::stod(ps), row.ps_mw);
  }
  EXPECT_EQ(n, ok.rows.size());
}

}  // namespace
}  // namespace loadshed
