#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "loadshed/error.hpp"
#include "loadshed/features.hpp"
#include "loadshed/mlp.hpp"
#include "loadshed/rng.hpp"

namespace loadshed {
namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
  return m;
}

// Largest relative error between backprop and central differences.
double gradient_error(const std::vector<int>& sizes, int batch, std::uint64_t seed, bool weighted) {
  Rng rng(seed);
  auto model = init_mlp(sizes, seed);
  for (auto& l : model.layers) l.b = random_matrix(l.b.size(), 1, rng).col(0) * 0.5;
  const auto x = random_matrix(batch, sizes.front(), rng);
  const auto y = random_matrix(batch, sizes.back(), rng);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(batch);
  if (weighted)
    for (int s = 0; s < batch; ++s) w(s) = rng.uniform(0.5, 3.0);
  const Eigen::VectorXd* wp = weighted ? &w : nullptr;
  const double lambda = 1e-3;
  const auto g = mlp_gradients(model, x, y, lambda, wp);

  const double h = 1e-6;
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = mlp_loss(model, x, y, lambda, wp);
    param = keep - h;
    const double down = mlp_loss(model, x, y, lambda, wp);
    param = keep;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j) probe(layer.w(i, j), g.w[l](i, j));
      probe(layer.b(i), g.b[l](i));
    }
  }
  return worst;
}

TEST(Mlp, InitShapes) {
  const auto m = init_mlp({8, 15, 12, 2}, 1);
  ASSERT_EQ(m.layers.size(), 3u);
  EXPECT_EQ(m.layers[0].w.rows(), 15);
  EXPECT_EQ(m.layers[0].w.cols(), 8);
  EXPECT_EQ(m.layers[1].w.rows(), 12);
  EXPECT_EQ(m.layers[1].w.cols(), 15);
  EXPECT_EQ(m.layers[2].w.rows(), 2);
  EXPECT_EQ(m.layers[2].w.cols(), 12);
  EXPECT_EQ(m.parameter_count(), std::size_t(15 * 8 + 15 + 12 * 15 + 12 + 2 * 12 + 2));
  for (const auto& l : m.layers) {
    const double bound = std::sqrt(6.0 / double(l.w.rows() + l.w.cols()));
    EXPECT_LE(l.w.cwiseAbs().maxCoeff(), bound);
    EXPECT_EQ(l.b.cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(init_mlp({8, 15, 12, 2}, 1), m);
  EXPECT_NE(init_mlp({8, 15, 12, 2}, 2), m);
  EXPECT_THROW(init_mlp({8, 0, 2}, 1), ConfigError);
  EXPECT_THROW(init_mlp({8}, 1), ConfigError);
}

TEST(Mlp, ZeroParametersGiveZeroOutput) {
  auto m = init_mlp({3, 4, 2}, 1);
  for (auto& l : m.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  Rng rng(1);
  EXPECT_EQ(m.forward(random_matrix(5, 3, rng)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, HandComputedForward) {
  auto m = init_mlp({1, 2, 1}, 1);
  m.layers[0].w << 0.7, -1.3;
  m.layers[0].b << 0.1, 0.4;
  m.layers[1].w << 2.0, 0.5;
  m.layers[1].b << -0.3;
  for (double x : {-1.5, 0.0, 0.8}) {
    const double expected = 2.0 * std::tanh(0.7 * x + 0.1) + 0.5 * std::tanh(-1.3 * x + 0.4) - 0.3;
    Eigen::VectorXd in(1);
    in << x;
    EXPECT_NEAR(m.forward(in)(0), expected, 1e-15);
  }
}

TEST(Mlp, BatchedForwardMatchesRows) {
  const auto m = init_mlp({4, 6, 3}, 5);
  Rng rng(5);
  const auto x = random_matrix(7, 4, rng);
  const auto out = m.forward(x);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::VectorXd row = m.forward(Eigen::VectorXd(x.row(r).transpose()));
    for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(out(r, k), row(k), 1e-15);
  }
}

TEST(Mlp, ZeroResidualGradientIsWeightDecay) {
  const auto m = init_mlp({3, 5, 2}, 4);
  Rng rng(4);
  const auto x = random_matrix(6, 3, rng);
  const Eigen::MatrixXd y = m.forward(x);
  const double lambda = 0.01;
  const auto g = mlp_gradients(m, x, y, lambda);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    EXPECT_LE((g.w[l] - 2.0 * lambda * m.layers[l].w).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(g.b[l].cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Mlp, LinearNetworkClosedForm) {
  auto m = init_mlp({1, 1}, 1);
  m.layers[0].w << 0.6;
  m.layers[0].b << -0.2;
  Eigen::MatrixXd x(1, 1), y(1, 1);
  x << 1.5;
  y << 2.0;
  const double lambda = 0.05;
  const double r = 0.6 * 1.5 - 0.2 - 2.0;
  const auto g = mlp_gradients(m, x, y, lambda);
  EXPECT_NEAR(g.w[0](0, 0), 2.0 * r * 1.5 + 2.0 * lambda * 0.6, 1e-14);
  EXPECT_NEAR(g.b[0](0), 2.0 * r, 1e-14);
  EXPECT_NEAR(g.loss, r * r + lambda * 0.36, 1e-14);
  EXPECT_NEAR(mlp_loss(m, x, y, lambda), g.loss, 1e-15);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  EXPECT_LE(gradient_error({1, 1}, 4, 1, false), 1e-5);
  EXPECT_LE(gradient_error({2, 3, 1}, 5, 2, false), 1e-5);
  EXPECT_LE(gradient_error({8, 15, 12, 2}, 16, 3, false), 1e-5);
  EXPECT_LE(gradient_error({8, 15, 12, 2}, 16, 4, true), 1e-5);
}

TEST(Mlp, EmptyBatchRejected) {
  const auto m = init_mlp({2, 2}, 1);
  EXPECT_THROW(mlp_gradients(m, Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2), 0.0), ConfigError);
}

TEST(Mlp, SplitSizes) {
  const auto [train, test] = split_indices(1000, 0.2, 3);
  EXPECT_EQ(train.size(), 800u);
  EXPECT_EQ(test.size(), 200u);
  EXPECT_TRUE(std::is_sorted(train.begin(), train.end()));
  EXPECT_TRUE(std::is_sorted(test.begin(), test.end()));
  std::vector<std::size_t> all(train);
  all.insert(all.end(), test.begin(), test.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(1000);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
  EXPECT_EQ(split_indices(1000, 0.2, 3), std::make_pair(train, test));
  EXPECT_NE(split_indices(1000, 0.2, 4).second, test);
}

struct Linear {
  Eigen::MatrixXd x, y;
};

Linear linear_data(int n, std::uint64_t seed) {
  Rng rng(seed);
  Linear d{Eigen::MatrixXd(n, 1), Eigen::MatrixXd(n, 1)};
  for (int r = 0; r < n; ++r) {
    d.x(r, 0) = rng.uniform(-1.0, 1.0);
    d.y(r, 0) = 2.0 * d.x(r, 0) + 1.0;
  }
  return d;
}

TEST(Train, ZeroEpochsLeavesModel) {
  const auto d = linear_data(50, 1);
  auto m = init_mlp({1, 4, 1}, 1);
  const auto before = m;
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const auto report = train_mlp(m, d.x, d.y, cfg, 1);
  EXPECT_EQ(m, before);
  EXPECT_TRUE(report.train_loss.empty());
  EXPECT_TRUE(report.validation_loss.empty());
  EXPECT_EQ(report.epochs, 0);
}

TEST(Train, LearnsLinearFunction) {
  const auto d = linear_data(1000, 2);
  auto m = init_mlp({1, 6, 1}, 2);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.lambda = 0.0;
  cfg.max_epochs = 600;
  cfg.patience = 100;
  const auto report = train_mlp(m, d.x, d.y, cfg, 2);
  const double mse = (m.forward(d.x) - d.y).squaredNorm() / double(d.x.rows());
  EXPECT_LT(mse, 1e-4) << report.stop_reason << " after " << report.epochs;
  EXPECT_EQ(report.train_loss.size(), std::size_t(report.epochs));
  EXPECT_EQ(report.validation_loss.size(), std::size_t(report.epochs));
  EXPECT_LE(report.best_epoch, report.epochs);
}

TEST(Train, FullBatchLossNonIncreasing) {
  const auto d = linear_data(200, 3);
  auto m = init_mlp({1, 6, 1}, 3);
  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  cfg.lambda = 0.0;
  cfg.batch_size = 200;
  cfg.validation_fraction = 0.0;
  cfg.max_epochs = 300;
  const auto report = train_mlp(m, d.x, d.y, cfg, 3);
  ASSERT_EQ(report.train_loss.size(), 300u);
  for (std::size_t e = 1; e < report.train_loss.size(); ++e)
    EXPECT_LE(report.train_loss[e], report.train_loss[e - 1] * (1 + 1e-12)) << "epoch " << e;
  EXPECT_EQ(report.stop_reason, "max_epochs");
  EXPECT_TRUE(std::isnan(report.final_validation_loss));
}

TEST(Train, Deterministic) {
  const auto d = linear_data(300, 4);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  auto a = init_mlp({1, 5, 1}, 4);
  auto b = init_mlp({1, 5, 1}, 4);
  train_mlp(a, d.x, d.y, cfg, 9);
  train_mlp(b, d.x, d.y, cfg, 9);
  EXPECT_EQ(a, b);
  auto c = init_mlp({1, 5, 1}, 4);
  train_mlp(c, d.x, d.y, cfg, 10);
  EXPECT_NE(a, c);
}

MlpModel normalized_model() {
  auto m = init_mlp({4, 5, 2}, 8);
  Rng rng(8);
  m.input_stats = {{"p_d", "q_d", "v_post", "freq"}, {0.2, 0.05, 0.98, 60.0}, {0.05, 0.01, 0.02, 0.01}};
  m.output_stats = {{"ps_mw", "qs_mvar"}, {3.0, 1.0}, {2.0, 0.5}};
  m.bus = 14;
  m.outage_class = "single";
  for (auto& l : m.layers) l.b = random_matrix(l.b.size(), 1, rng).col(0);
  return m;
}

TEST(Model, JsonRoundTripIsExact) {
  const auto m = normalized_model();
  const auto back = model_from_json(model_to_json(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(model_to_json(back), model_to_json(m));

  const auto path = (std::filesystem::temp_directory_path() / "loadshed_model_test.json").string();
  save_model(m, path);
  const auto loaded = load_model(path);
  std::remove(path.c_str());
  Rng rng(12);
  const auto x = random_matrix(100, 4, rng);
  EXPECT_EQ(loaded.forward(x), m.forward(x));
}

TEST(Model, MalformedFilesRejected) {
  const auto text = model_to_json(normalized_model());
  auto wrong_shape = text;
  const auto p = wrong_shape.find("\"sizes\"");
  const auto open = wrong_shape.find('[', p);
  const auto close = wrong_shape.find(']', open);
  wrong_shape.replace(open, close - open + 1, "[4, 6, 2]");
  EXPECT_THROW(model_from_json(wrong_shape), SchemaError);

  auto wrong_format = text;
  wrong_format.replace(wrong_format.find("loadshed-mlp"), 12, "other-format");
  EXPECT_THROW(model_from_json(wrong_format), SchemaError);
  EXPECT_THROW(model_from_json("{"), SchemaError);
}

TEST(Model, PredictContract) {
  const auto m = normalized_model();
  Rng rng(21);
  for (int k = 0; k < 100; ++k) {
    const std::vector<double> f{rng.uniform(0.1, 0.3), rng.uniform(-0.05, 0.08), rng.uniform(0.9, 1.05),
                                rng.uniform(59.9, 60.1)};
    Eigen::MatrixXd row(1, 4);
    for (int j = 0; j < 4; ++j) row(0, j) = f[std::size_t(j)];
    const Eigen::MatrixXd raw = m.output_stats.invert(m.forward(m.input_stats.apply(row)));
    const auto t = predict(m, f);
    const double p_cap = f[0] * m.base_mva, q_cap = f[1] * m.base_mva;
    EXPECT_EQ(t.p_s, std::clamp(raw(0, 0), 0.0, p_cap));
    EXPECT_EQ(t.q_s, std::clamp(raw(0, 1), std::min(0.0, q_cap), std::max(0.0, q_cap)));
    const auto batch = predict(m, row);
    EXPECT_EQ(batch(0, 0), t.p_s);
    EXPECT_EQ(batch(0, 1), t.q_s);
  }
}

}  // namespace
}  // namespace loadshed
