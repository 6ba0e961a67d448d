#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "loadshed/features.hpp"

namespace loadshed {

/// Fully connected layer: out = w * in + b.
struct DenseLayer {
  Eigen::MatrixXd w;  // outputs x inputs
  Eigen::VectorXd b;

  bool operator==(const DenseLayer& o) const { return w == o.w && b == o.b; }
};

/// Feed-forward network with tanh hidden layers and a linear output layer,
/// plus the normalization that maps raw features and targets to and from the
/// network's space.
struct MlpModel {
  std::vector<int> sizes;  // input, hidden..., output
  std::vector<DenseLayer> layers;
  NormalizationStats input_stats;   // empty when the model works on raw data
  NormalizationStats output_stats;
  int bus = 0;
  std::string outage_class;
  double base_mva = 100.0;

  int inputs() const { return sizes.front(); }
  int outputs() const { return sizes.back(); }
  std::size_t parameter_count() const;

  /// Network output for one sample per row (network space, no normalization).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  bool operator==(const MlpModel&) const = default;
};

/// Glorot-uniform weights, zero biases. Throws ConfigError on fewer than two
/// sizes or a nonpositive size.
MlpModel init_mlp(std::vector<int> sizes, std::uint64_t seed);

struct MlpGradients {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  double loss = 0.0;
};

/// Loss = sum_s w_s sum_o (yhat - y)^2 / (m sum_s w_s) + lambda * sum ||W||^2,
/// with unit sample weights when `weights` is null (plain MSE).
double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda,
                const Eigen::VectorXd* weights = nullptr);
MlpGradients mlp_gradients(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           double lambda, const Eigen::VectorXd* weights = nullptr);

struct TrainConfig {
  std::vector<int> hidden{15, 12};
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double lambda = 1e-4;
  int batch_size = 32;
  int max_epochs = 2000;
  /// Share of the training rows held out for early stopping (0 disables).
  double validation_fraction = 0.15;
  int patience = 50;
  double test_fraction = 0.2;
  /// Sample weight of rows whose target sheds (p_s above shed_eps); 1 gives plain MSE.
  double shed_weight = 1.0;
  double shed_eps = 1e-3;  // MW
};

struct TrainReport {
  std::vector<double> train_loss;       // per epoch, data term only
  std::vector<double> validation_loss;  // per epoch, empty without validation
  int epochs = 0;
  int best_epoch = 0;
  double final_train_loss = 0.0;       // at the returned parameters
  double final_validation_loss = 0.0;  // NaN without validation
  std::string stop_reason;  // "early_stop", "max_epochs" or "diverged"
  double seconds = 0.0;

  std::string to_json() const;
};

/// Adam on mini-batches of already normalized data. With validation the
/// weights of the best validation epoch are restored.
TrainReport train_mlp(MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const TrainConfig& cfg,
                      std::uint64_t seed, const Eigen::VectorXd* weights = nullptr);

/// Shuffled split of n rows into (train, test) index lists, each ascending;
/// the test part has round(n * test_fraction) rows.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double test_fraction,
                                                                            std::uint64_t seed);

/// Raw features in, (p_s MW, q_s MVAr) out, with p_s clamped to [0, p_d] and
/// q_s to the interval between 0 and q_d.
TargetVector predict(const MlpModel& model, const std::vector<double>& features);
Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& features);

/// Versioned JSON. Throws SchemaError on unknown formats or inconsistent shapes.
std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(std::string_view text);
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace loadshed
