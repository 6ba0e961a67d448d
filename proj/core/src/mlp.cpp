#include "loadshed/mlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "loadshed/error.hpp"
#include "loadshed/rng.hpp"

namespace loadshed {

namespace {

constexpr std::string_view kFormat = "loadshed-mlp";
constexpr int kVersion = 1;

using Json = nlohmann::ordered_json;

// Activations of every layer; acts[0] is the input.
std::vector<Eigen::MatrixXd> forward_all(const MlpModel& m, const Eigen::MatrixXd& x) {
  std::vector<Eigen::MatrixXd> acts{x};
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    Eigen::MatrixXd z = acts.back() * m.layers[l].w.transpose();
    z.rowwise() += m.layers[l].b.transpose();
    if (l + 1 < m.layers.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

void check_shapes(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                  const Eigen::VectorXd* weights) {
  if (x.cols() != m.inputs()) throw ConfigError("feature width does not match the network");
  if (y.cols() != m.outputs() || y.rows() != x.rows()) throw ConfigError("target shape does not match");
  if (weights && weights->size() != x.rows()) throw ConfigError("one sample weight per row expected");
}

double weight_penalty(const MlpModel& m) {
  double s = 0.0;
  for (const auto& l : m.layers) s += l.w.squaredNorm();
  return s;
}

Json stats_json(const NormalizationStats& s) {
  Json j;
  j["names"] = s.names;
  j["mean"] = s.mean;
  j["std"] = s.std;
  return j;
}

NormalizationStats stats_from(const Json& j) { return NormalizationStats::from_json(j.dump()); }

}  // namespace

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

Eigen::MatrixXd MlpModel::forward(const Eigen::MatrixXd& x) const {
  if (x.cols() != inputs()) throw ConfigError("feature width does not match the network");
  return forward_all(*this, x).back();
}

Eigen::VectorXd MlpModel::forward(const Eigen::VectorXd& x) const {
  return forward(Eigen::MatrixXd(x.transpose())).row(0).transpose();
}

MlpModel init_mlp(std::vector<int> sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ConfigError("a network needs an input and an output size");
  for (int s : sizes) {
    if (s <= 0) throw ConfigError("layer sizes must be positive");
  }
  MlpModel m;
  m.sizes = std::move(sizes);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
    const int in = m.sizes[l], out = m.sizes[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.w(r, c) = rng.uniform(-limit, limit);
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda,
                const Eigen::VectorXd* weights) {
  check_shapes(model, x, y, weights);
  if (x.rows() == 0) return lambda * weight_penalty(model);
  const Eigen::MatrixXd err = model.forward(x) - y;
  const Eigen::VectorXd per_row = err.rowwise().squaredNorm();
  const double wsum = weights ? weights->sum() : static_cast<double>(x.rows());
  const double data = (weights ? weights->dot(per_row) : per_row.sum()) / (wsum * static_cast<double>(y.cols()));
  return data + lambda * weight_penalty(model);
}

MlpGradients mlp_gradients(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           double lambda, const Eigen::VectorXd* weights) {
  check_shapes(model, x, y, weights);
  if (x.rows() == 0) throw ConfigError("gradient of an empty batch");
  MlpGradients g;
  const auto nl = model.layers.size();
  g.w.resize(nl);
  g.b.resize(nl);
  const auto acts = forward_all(model, x);
  const Eigen::MatrixXd err = acts.back() - y;
  const double wsum = weights ? weights->sum() : static_cast<double>(x.rows());
  const double scale = x.rows() > 0 ? 1.0 / (wsum * static_cast<double>(y.cols())) : 0.0;

  Eigen::MatrixXd delta = 2.0 * scale * err;
  if (weights) delta = weights->asDiagonal() * delta;
  const Eigen::VectorXd per_row = err.rowwise().squaredNorm();
  g.loss = (weights ? weights->dot(per_row) : per_row.sum()) * scale + lambda * weight_penalty(model);

  for (std::size_t k = nl; k-- > 0;) {
    g.w[k] = delta.transpose() * acts[k] + 2.0 * lambda * model.layers[k].w;
    g.b[k] = delta.colwise().sum().transpose();
    if (k > 0) {
      delta = (delta * model.layers[k].w).cwiseProduct((1.0 - acts[k].array().square()).matrix());
    }
  }
  return g;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double test_fraction,
                                                                            std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < n; ++k) perm[k] = k;
  Rng rng(seed);
  for (std::size_t k = n; k > 1; --k) std::swap(perm[k - 1], perm[static_cast<std::size_t>(rng.index(k))]);
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

TrainReport train_mlp(MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const TrainConfig& cfg,
                      std::uint64_t seed, const Eigen::VectorXd* weights) {
  check_shapes(model, x, y, weights);
  if (!(cfg.learning_rate > 0.0) || cfg.batch_size <= 0 || cfg.max_epochs < 0 || cfg.lambda < 0.0) {
    throw ConfigError("invalid training configuration");
  }
  const auto start = std::chrono::steady_clock::now();

  auto rows_of = [](const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
    return out;
  };
  auto weights_of = [&](const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = (*weights)[static_cast<Eigen::Index>(idx[k])];
    return out;
  };

  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> fit_idx, val_idx;
  if (cfg.validation_fraction > 0.0) {
    std::tie(fit_idx, val_idx) = split_indices(n, cfg.validation_fraction, derive_seed(seed, "validation"));
  } else {
    fit_idx = split_indices(n, 0.0, 0).first;
  }
  if (fit_idx.empty()) {
    fit_idx.swap(val_idx);
    val_idx.clear();
  }
  const Eigen::MatrixXd xf = rows_of(x, fit_idx), yf = rows_of(y, fit_idx);
  const Eigen::MatrixXd xv = rows_of(x, val_idx), yv = rows_of(y, val_idx);
  Eigen::VectorXd wf, wv;
  if (weights) {
    wf = weights_of(fit_idx);
    wv = weights_of(val_idx);
  }
  const Eigen::VectorXd* wfp = weights ? &wf : nullptr;
  const Eigen::VectorXd* wvp = weights ? &wv : nullptr;

  const auto nl = model.layers.size();
  std::vector<Eigen::MatrixXd> mw(nl), vw(nl);
  std::vector<Eigen::VectorXd> mb(nl), vb(nl);
  for (std::size_t k = 0; k < nl; ++k) {
    mw[k] = vw[k] = Eigen::MatrixXd::Zero(model.layers[k].w.rows(), model.layers[k].w.cols());
    mb[k] = vb[k] = Eigen::VectorXd::Zero(model.layers[k].b.size());
  }

  TrainReport rep;
  rep.stop_reason = "max_epochs";
  Rng rng(derive_seed(seed, "batches"));
  std::vector<std::size_t> order(fit_idx.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  double best = std::numeric_limits<double>::infinity();
  auto best_layers = model.layers;
  int since_best = 0;
  long step = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[static_cast<std::size_t>(rng.index(k))]);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += bs) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b0 + bs)));
      const Eigen::MatrixXd xb = rows_of(xf, batch), yb = rows_of(yf, batch);
      Eigen::VectorXd wb;
      if (weights) {
        wb.resize(static_cast<Eigen::Index>(batch.size()));
        for (std::size_t k = 0; k < batch.size(); ++k) wb[static_cast<Eigen::Index>(k)] = wf[static_cast<Eigen::Index>(batch[k])];
      }
      const auto g = mlp_gradients(model, xb, yb, cfg.lambda, weights ? &wb : nullptr);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < nl; ++k) {
        mw[k] = cfg.beta1 * mw[k] + (1.0 - cfg.beta1) * g.w[k];
        vw[k] = cfg.beta2 * vw[k] + (1.0 - cfg.beta2) * g.w[k].cwiseAbs2();
        mb[k] = cfg.beta1 * mb[k] + (1.0 - cfg.beta1) * g.b[k];
        vb[k] = cfg.beta2 * vb[k] + (1.0 - cfg.beta2) * g.b[k].cwiseAbs2();
        model.layers[k].w.array() -=
            cfg.learning_rate * (mw[k].array() / c1) / ((vw[k].array() / c2).sqrt() + cfg.adam_eps);
        model.layers[k].b.array() -=
            cfg.learning_rate * (mb[k].array() / c1) / ((vb[k].array() / c2).sqrt() + cfg.adam_eps);
      }
    }
    rep.epochs = epoch;
    rep.train_loss.push_back(mlp_loss(model, xf, yf, 0.0, wfp));
    if (!std::isfinite(rep.train_loss.back())) {
      rep.stop_reason = "diverged";
      break;
    }
    if (val_idx.empty()) {
      rep.best_epoch = epoch;
      continue;
    }
    const double v = mlp_loss(model, xv, yv, 0.0, wvp);
    rep.validation_loss.push_back(v);
    if (v < best) {
      best = v;
      best_layers = model.layers;
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.stop_reason = "early_stop";
      break;
    }
  }
  if (!val_idx.empty() && rep.best_epoch > 0) model.layers = best_layers;
  rep.final_train_loss = rep.train_loss.empty() ? mlp_loss(model, xf, yf, 0.0, wfp) : rep.train_loss[static_cast<std::size_t>(std::max(rep.best_epoch, 1)) - 1];
  rep.final_validation_loss = rep.validation_loss.empty() ? std::numeric_limits<double>::quiet_NaN() : rep.validation_loss[static_cast<std::size_t>(std::max(rep.best_epoch, 1)) - 1];
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::string TrainReport::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  Json j;
  j["epochs"] = epochs;
  j["best_epoch"] = best_epoch;
  j["stop_reason"] = stop_reason;
  j["final_train_mse"] = num(final_train_loss);
  j["final_validation_mse"] = num(final_validation_loss);
  j["seconds"] = seconds;
  Json t = Json::array(), v = Json::array();
  for (double x : train_loss) t.push_back(num(x));
  for (double x : validation_loss) v.push_back(num(x));
  j["train_mse"] = t;
  j["validation_mse"] = v;
  return j.dump(1) + "\n";
}

Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.inputs()) throw ConfigError("feature width does not match the network");
  if (model.outputs() != 2 || model.inputs() < 2) throw ConfigError("model does not predict (p_s, q_s)");
  const Eigen::MatrixXd z = model.input_stats.size() ? model.input_stats.apply(features) : features;
  const Eigen::MatrixXd out = model.forward(z);
  Eigen::MatrixXd y = model.output_stats.size() ? model.output_stats.invert(out) : out;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double p_d = features(r, 0) * model.base_mva;
    const double q_d = features(r, 1) * model.base_mva;
    y(r, 0) = std::clamp(y(r, 0), 0.0, std::max(p_d, 0.0));
    y(r, 1) = std::clamp(y(r, 1), std::min(q_d, 0.0), std::max(q_d, 0.0));
  }
  return y;
}

TargetVector predict(const MlpModel& model, const std::vector<double>& features) {
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::RowVectorXd>(features.data(), static_cast<Eigen::Index>(features.size()));
  const auto y = predict(model, x);
  return {y(0, 0), y(0, 1)};
}

std::string model_to_json(const MlpModel& model) {
  Json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["bus"] = model.bus;
  j["outage_class"] = model.outage_class;
  j["base_mva"] = model.base_mva;
  j["activation"] = "tanh";
  j["sizes"] = model.sizes;
  j["input_stats"] = stats_json(model.input_stats);
  j["output_stats"] = stats_json(model.output_stats);
  Json layers = Json::array();
  for (const auto& l : model.layers) {
    Json w = Json::array();
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(l.w.cols()));
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) row[static_cast<std::size_t>(c)] = l.w(r, c);
      w.push_back(row);
    }
    layers.push_back({{"w", w}, {"b", std::vector<double>(l.b.data(), l.b.data() + l.b.size())}});
  }
  j["layers"] = layers;
  return j.dump(1) + "\n";
}

MlpModel model_from_json(std::string_view text) {
  try {
    const auto j = Json::parse(text);
    if (j.at("format").get<std::string>() != kFormat) throw SchemaError("not a loadshed model file");
    if (j.at("version").get<int>() != kVersion) {
      throw SchemaError("unsupported model version " + std::to_string(j.at("version").get<int>()));
    }
    if (j.at("activation").get<std::string>() != "tanh") throw SchemaError("unsupported activation");
    MlpModel m;
    m.sizes = j.at("sizes").get<std::vector<int>>();
    m.bus = j.at("bus").get<int>();
    m.outage_class = j.at("outage_class").get<std::string>();
    m.base_mva = j.at("base_mva").get<double>();
    if (m.sizes.size() < 2) throw SchemaError("model needs at least two layer sizes");
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != m.sizes.size()) throw SchemaError("layer count does not match sizes");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto w = layers[k].at("w").get<std::vector<std::vector<double>>>();
      const auto b = layers[k].at("b").get<std::vector<double>>();
      const int in = m.sizes[k], out = m.sizes[k + 1];
      if (static_cast<int>(w.size()) != out || static_cast<int>(b.size()) != out) {
        throw SchemaError("layer " + std::to_string(k) + " has the wrong output size");
      }
      DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (int r = 0; r < out; ++r) {
        const auto& row = w[static_cast<std::size_t>(r)];
        if (static_cast<int>(row.size()) != in) throw SchemaError("layer " + std::to_string(k) + " has the wrong input size");
        for (int c = 0; c < in; ++c) l.w(r, c) = row[static_cast<std::size_t>(c)];
        l.b[r] = b[static_cast<std::size_t>(r)];
      }
      m.layers.push_back(std::move(l));
    }
    m.input_stats = stats_from(j.at("input_stats"));
    m.output_stats = stats_from(j.at("output_stats"));
    if (m.input_stats.size() && static_cast<int>(m.input_stats.size()) != m.inputs()) {
      throw SchemaError("input statistics do not match the input size");
    }
    if (m.output_stats.size() && static_cast<int>(m.output_stats.size()) != m.outputs()) {
      throw SchemaError("output statistics do not match the output size");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad model file: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << model_to_json(model);
  if (!out) throw std::runtime_error("error writing " + path);
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace loadshed
