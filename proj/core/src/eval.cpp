#include "loadshed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "loadshed/error.hpp"
#include "loadshed/format.hpp"
#include "loadshed/rng.hpp"

namespace loadshed {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

nlohmann::ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

nlohmann::ordered_json metrics_json(const SubsetMetrics& m) {
  return {{"samples", m.samples},
          {"shedding", m.shedding},
          {"rmse_p_all", number(m.rmse_p_all)},
          {"rmse_q_all", number(m.rmse_q_all)},
          {"rmse_p_shed", number(m.rmse_p_shed)},
          {"rmse_q_shed", number(m.rmse_q_shed)}};
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

double rmse(const std::vector<double>& predicted, const std::vector<double>& actual) {
  if (predicted.size() != actual.size()) throw ConfigError("rmse inputs differ in length");
  if (predicted.empty()) throw ConfigError("rmse of an empty list");
  double s = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) s += (predicted[k] - actual[k]) * (predicted[k] - actual[k]);
  return std::sqrt(s / static_cast<double>(predicted.size()));
}

double occurrence_rate(const std::vector<double>& p_s, double eps) {
  if (p_s.empty()) throw ConfigError("occurrence of an empty dataset");
  const auto n = std::count_if(p_s.begin(), p_s.end(), [&](double v) { return v > eps; });
  return 100.0 * static_cast<double>(n) / static_cast<double>(p_s.size());
}

double occurrence_rate(const Dataset& d, double eps) {
  std::vector<double> p;
  for (const auto& r : d.rows) {
    if (r.status == SampleStatus::ok) p.push_back(r.ps_mw);
  }
  return occurrence_rate(p, eps);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("spearman inputs differ in length");
  if (a.size() < 2) return kNan;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return kNan;
  return sab / std::sqrt(saa * sbb);
}

SubsetMetrics evaluate(const MlpModel& model, const Dataset& d, double eps) {
  const Dataset ok = d.ok_rows();
  SubsetMetrics m;
  m.samples = ok.rows.size();
  if (ok.rows.empty()) {
    m.rmse_p_all = m.rmse_q_all = m.rmse_p_shed = m.rmse_q_shed = kNan;
    return m;
  }
  const Eigen::MatrixXd pred = predict(model, ok.feature_matrix());
  std::vector<double> pp, pa, qp, qa, spp, spa, sqp, sqa;
  for (std::size_t r = 0; r < ok.rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    const auto& row = ok.rows[r];
    pp.push_back(pred(i, 0));
    pa.push_back(row.ps_mw);
    qp.push_back(pred(i, 1));
    qa.push_back(row.qs_mvar);
    if (row.ps_mw > eps) {
      spp.push_back(pred(i, 0));
      spa.push_back(row.ps_mw);
      sqp.push_back(pred(i, 1));
      sqa.push_back(row.qs_mvar);
    }
  }
  m.shedding = spa.size();
  m.rmse_p_all = rmse(pp, pa);
  m.rmse_q_all = rmse(qp, qa);
  m.rmse_p_shed = spa.empty() ? kNan : rmse(spp, spa);
  m.rmse_q_shed = spa.empty() ? kNan : rmse(sqp, sqa);
  return m;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double test_fraction, std::uint64_t seed) {
  const Dataset ok = d.ok_rows();
  const auto [train_idx, test_idx] = split_indices(ok.rows.size(), test_fraction, derive_seed(seed, "split"));
  return {ok.subset(train_idx), ok.subset(test_idx)};
}

LoadCenterFit fit_load_center(const Dataset& d, const TrainConfig& cfg, std::uint64_t seed,
                              const std::string& outage_class, double base_mva) {
  const Dataset ok = d.ok_rows();
  if (ok.rows.size() < 2) throw ConfigError("bus " + std::to_string(d.bus) + ": too few usable samples to train");
  LoadCenterFit fit;
  std::tie(fit.train, fit.test) = split_dataset(d, cfg.test_fraction, seed);
  fit.occurrence = occurrence_rate(ok, cfg.shed_eps);

  const Eigen::MatrixXd x = fit.train.feature_matrix();
  const Eigen::MatrixXd y = fit.train.target_matrix();
  std::vector<int> sizes{static_cast<int>(d.width())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(2);
  fit.model = init_mlp(sizes, derive_seed(seed, "init"));
  fit.model.bus = d.bus;
  fit.model.outage_class = outage_class;
  fit.model.base_mva = base_mva;
  fit.model.input_stats = fit_normalization(x, d.feature_names());
  fit.model.output_stats = fit_normalization(y, {"ps_mw", "qs_mvar"});

  Eigen::VectorXd w;
  if (cfg.shed_weight != 1.0) {
    w.resize(y.rows());
    for (Eigen::Index r = 0; r < y.rows(); ++r) w[r] = y(r, 0) > cfg.shed_eps ? cfg.shed_weight : 1.0;
  }
  fit.training = train_mlp(fit.model, fit.model.input_stats.apply(x), fit.model.output_stats.apply(y), cfg,
                           derive_seed(seed, "train"), cfg.shed_weight != 1.0 ? &w : nullptr);
  fit.train_metrics = evaluate(fit.model, fit.train, cfg.shed_eps);
  fit.test_metrics = evaluate(fit.model, fit.test, cfg.shed_eps);
  return fit;
}

EvalEntry make_entry(const LoadCenterFit& fit) {
  return {fit.model.bus, fit.model.outage_class, fit.occurrence, fit.train_metrics, fit.test_metrics,
          fit.training.epochs, fit.training.stop_reason};
}

EvalEntry evaluate(const MlpModel& model, const Dataset& train, const Dataset& test, double eps) {
  if (train.width() != static_cast<std::size_t>(model.inputs()) || test.width() != train.width()) {
    throw SchemaError("dataset columns do not match the model");
  }
  EvalEntry e;
  e.bus = model.bus;
  e.outage_class = model.outage_class;
  e.train = evaluate(model, train, eps);
  e.test = evaluate(model, test, eps);
  Dataset both = train.ok_rows();
  for (const auto& r : test.ok_rows().rows) both.rows.push_back(r);
  e.occurrence = both.rows.empty() ? kNan : occurrence_rate(both, eps);
  return e;
}

std::string EvalReport::text() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-5s %-7s %7s %6s %6s %10s %10s %10s %10s\n", "bus", "class", "occur", "train",
                "test", "train_p", "test_p", "train_p_sh", "test_p_sh");
  os << line;
  for (const auto& e : entries) {
    std::snprintf(line, sizeof line, "%-5d %-7s %7s %6zu %6zu %10s %10s %10s %10s\n", e.bus, e.outage_class.c_str(),
                  fixed(e.occurrence, 3).c_str(), e.train.samples, e.test.samples, fixed(e.train.rmse_p_all, 4).c_str(),
                  fixed(e.test.rmse_p_all, 4).c_str(), fixed(e.train.rmse_p_shed, 4).c_str(),
                  fixed(e.test.rmse_p_shed, 4).c_str());
    os << line;
  }
  os << "RMSE in MW; _sh columns score only samples that shed.\n";
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    arr.push_back({{"bus", e.bus},
                   {"outage_class", e.outage_class},
                   {"occurrence", number(e.occurrence)},
                   {"train", metrics_json(e.train)},
                   {"test", metrics_json(e.test)},
                   {"epochs", e.epochs},
                   {"stop_reason", e.stop_reason}});
  }
  return nlohmann::ordered_json{{"entries", arr}}.dump(2) + "\n";
}

void export_scatter(const Dataset& d, std::ostream& out) {
  const std::size_t deg = d.branch_labels.size();
  out << "v_post,sum_incident_p_flow,ps_mw\n";
  for (const auto& r : d.rows) {
    if (r.status != SampleStatus::ok) continue;
    double flow = 0.0;
    for (std::size_t k = 0; k < deg; ++k) flow += r.features[3 + k];
    out << format_double(r.features[2]) << ',' << format_double(flow) << ',' << format_double(r.ps_mw) << '\n';
  }
}

void export_scatter(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  export_scatter(d, out);
  if (!out) throw std::runtime_error("error writing " + path);
}

}  // namespace loadshed
