#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "loadshed/mlp.hpp"

namespace {

using namespace loadshed;

void BM_MlpGradients(benchmark::State& state) {
  const auto batch = state.range(0);
  const auto model = init_mlp({8, 15, 12, 2}, 1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(batch, 8);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(batch, 2);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_gradients(model, x, y, 1e-4));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpGradients)->Arg(32)->Arg(256)->Arg(1000);

void BM_MlpTrainEpochs(benchmark::State& state) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(800, 8);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(800, 2);
  TrainConfig cfg;
  cfg.max_epochs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto model = init_mlp({8, 15, 12, 2}, 1);
    benchmark::DoNotOptimize(train_mlp(model, x, y, cfg, 2));
  }
}
BENCHMARK(BM_MlpTrainEpochs)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace
