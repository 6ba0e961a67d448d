// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cases.hpp"
#include "cli.hpp"
#include "config.hpp"
#include "loadshed/eval.hpp"
#include "loadshed/features.hpp"
#include "loadshed/mlp.hpp"
#include "loadshed/netcase.hpp"
#include "loadshed/ols.hpp"
#include "loadshed/powerflow.hpp"
#include "loadshed/rng.hpp"
#include "loadshed/scenarios.hpp"

using namespace loadshed;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("loadshed_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

cli::RunConfig protocol_config(const fs::path& out) {
  cli::RunConfig cfg;
  cfg.total_mw = 469.0;
  cfg.per_scenario = 200;
  cfg.multiple = false;
  cfg.seed = 1;
  cfg.jobs = std::max(1u, std::thread::hardware_concurrency());
  cfg.out_dir = out.string();
  return cfg;
}

Outcome power_flow_correctness() {
  const auto t0 = Clock::now();
  const double x = 0.1, p = 0.5;
  const auto two = solve_power_flow(testing::two_bus(p * 100.0, 0.0, 0.0, x));
  const double t2 = -0.5 * std::asin(2.0 * x * p);
  const double err = std::max(std::abs(two.theta[1] - t2), std::abs(two.v[1] - std::cos(t2)));

  std::vector<NetworkCase> cases{ieee14(), scale_to_total(ieee14(), 469.0)};
  for (const auto& s : enumerate_n1(cases[1])) cases.push_back(apply_outage(cases[1], s.outaged));
  double worst = 0.0;
  std::size_t converged = 0;
  for (const auto& c : cases) {
    const auto s = solve_power_flow(c);
    if (!s.converged) continue;
    ++converged;
    worst = std::max(worst, s.max_mismatch);
  }
  const double t = seconds_since(t0);
  return {two.converged && err <= 1e-10 && converged > 0 && worst <= 1e-8 && t < 1.0,
          "2-bus error " + num(err) + " pu, " + std::to_string(converged) + "/" + std::to_string(cases.size()) +
              " 14-bus solves converged, max mismatch " + num(worst) + " pu, " + num(t, 3) + " s"};
}

Outcome ols_vs_oracle() {
  const auto t0 = Clock::now();
  double worst_obj = 0.0, worst_shed = 0.0;
  int failures = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto c = testing::random_three_bus(seed);
    const auto prob = assemble_ols(c, CostConfig::defaults(c));
    const auto sol = solve_ols(prob);
    if (sol.status != OlsStatus::optimal) {
      ++failures;
      continue;
    }
    const auto oracle = brute_force_ols(prob, {0.01});
    worst_obj = std::max(worst_obj, std::abs(sol.objective - oracle.objective));
    for (std::size_t i = 0; i < c.bus_count(); ++i)
      worst_shed = std::max({worst_shed, std::abs(sol.p_s[i] - oracle.p_s[i]) / c.base_mva(),
                             std::abs(sol.q_s[i] - oracle.q_s[i]) / c.base_mva()});
  }
  const double t = seconds_since(t0);
  return {failures == 0 && worst_obj <= 1e-3 && worst_shed <= 0.01 && t < 300.0,
          "20 instances, max |objective gap| " + num(worst_obj) + " $/h, max shed gap " + num(worst_shed) +
              " pu, " + std::to_string(failures) + " solver failures, " + num(t, 3) + " s"};
}

Outcome zero_shed() {
  const auto t0 = Clock::now();
  const auto base = ieee14();
  const auto costs = CostConfig::defaults(base);
  double worst = 0.0;
  int failures = 0;
  for (const auto& load : sample_loads(base, 0.95, 1.05, 50, 3)) {
    const auto c = scale_loads(base, load.multipliers);
    const auto pf = solve_power_flow(c);
    const auto sol = solve_ols(assemble_ols(c, costs), {}, pf.converged ? std::optional(pf) : std::nullopt);
    if (sol.status != OlsStatus::optimal) ++failures;
    worst = std::max({worst, std::abs(sol.total_p_shed()) / c.base_mva(), std::abs(sol.total_q_shed()) / c.base_mva()});
  }
  const double t = seconds_since(t0);
  return {failures == 0 && worst <= 1e-6 && t < 60.0,
          "50 samples, max total shedding " + num(worst) + " pu, " + std::to_string(failures) + " solver failures, " +
              num(t, 3) + " s"};
}

double gradient_error(const std::vector<int>& sizes, int batch, Rng& rng) {
  auto model = init_mlp(sizes, rng.next());
  auto uniform = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
  };
  for (auto& l : model.layers) l.b = uniform(l.b.size(), 1).col(0) * 0.5;
  const auto x = uniform(batch, sizes.front());
  const auto y = uniform(batch, sizes.back());
  const double lambda = 1e-3, h = 1e-6;
  const auto g = mlp_gradients(model, x, y, lambda);
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = mlp_loss(model, x, y, lambda);
    param = keep - h;
    const double down = mlp_loss(model, x, y, lambda);
    param = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-3}));
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

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  Rng rng(44);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    std::vector<int> sizes{1 + int(rng.index(10))};
    const auto hidden = rng.index(4);
    for (std::uint64_t h = 0; h < hidden; ++h) sizes.push_back(1 + int(rng.index(16)));
    sizes.push_back(1 + int(rng.index(3)));
    const int batch = 1 + int(rng.index(32));
    worst = std::max(worst, gradient_error(sizes, batch, rng));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-5 && t < 60.0, "20 architecture/batch pairs, max relative error " + num(worst) + ", " +
                                         num(t, 3) + " s"};
}

struct Protocol {
  fs::path out;
  cli::RunConfig cfg;
  double seconds = 0.0;
};

Outcome table_regime(Protocol& run) {
  const auto t0 = Clock::now();
  std::ostringstream log;
  cli::run_pipeline(run.cfg, log);
  run.seconds = seconds_since(t0);

  const auto d = load_dataset((run.out / "data" / "bus14_single.csv").string());
  const auto model = load_model((run.out / "models" / "bus14_single.json").string());
  const auto [train, test] =
      split_dataset(d, run.cfg.train.test_fraction, cli::training_seed(run.cfg.seed, 14, "single"));
  const double occurrence = occurrence_rate(d, run.cfg.occurrence_eps);
  const auto metrics = evaluate(model, test, run.cfg.occurrence_eps);
  const bool rmse_ok = metrics.shedding > 0 && metrics.rmse_p_shed <= 1.5;
  return {occurrence >= 80.0 && rmse_ok && run.seconds < 1800.0,
          std::to_string(d.rows.size()) + " samples, bus-14 occurrence " + num(occurrence) + "% (need >= 80), " +
              "test RMSE on " + std::to_string(metrics.shedding) + " shed samples " + num(metrics.rmse_p_shed) +
              " MW (need <= 1.5), " + num(run.seconds, 3) + " s"};
}

Outcome double_outage_trend() {
  const auto t0 = Clock::now();
  cli::RunConfig cfg;
  const auto stressed = cli::stressed_case(cfg);
  const auto costs = CostConfig::defaults(stressed, cfg.dominance);
  OlsOptions ols;
  ols.fixed_power_factor = cfg.fixed_power_factor;
  const auto base = dispatch_operating_point(stressed, costs, ols, cfg.ipm);
  const std::vector<Scenario> scenarios{
      make_scenario(base, {base.branch_index(2, 3), base.branch_index(4, 9)})};
  DatasetOptions opts;
  opts.costs = costs;
  opts.ols = ols;
  opts.jobs = std::max(1u, std::thread::hardware_concurrency());
  const auto records = generate_dataset(base, scenarios, 200, derive_seed(cfg.seed, "fig3"), opts);
  const auto d = build_dataset(base, 14, scenarios, records).ok_rows();

  std::vector<double> ps, v, flow;
  for (const auto& r : d.rows) {
    ps.push_back(r.ps_mw);
    v.push_back(r.features[2]);
    flow.push_back(r.features[3] + r.features[4]);
  }
  const double rho_v = spearman(ps, v), rho_f = spearman(ps, flow);
  const double t = seconds_since(t0);
  return {d.rows.size() >= 200 && rho_v <= -0.3 && rho_f <= -0.3 && t < 600.0,
          std::to_string(d.rows.size()) + " ok samples, Spearman(p_s, v_post) " + num(rho_v) +
              ", Spearman(p_s, incident flow) " + num(rho_f) + ", " + num(t, 3) + " s"};
}

Outcome training_time(const Protocol& run) {
  double slowest = 0.0;
  int slowest_bus = 0;
  for (int bus : run.cfg.buses) {
    const auto d = load_dataset((run.out / "data" / ("bus" + std::to_string(bus) + "_single.csv")).string());
    const auto t0 = Clock::now();
    fit_load_center(d, run.cfg.train, cli::training_seed(run.cfg.seed, bus, "single"), "single");
    const double t = seconds_since(t0);
    if (t > slowest) {
      slowest = t;
      slowest_bus = bus;
    }
  }
  return {slowest < 300.0, std::to_string(run.cfg.buses.size()) + " load centers on 19 x 200 samples, slowest bus " +
                               std::to_string(slowest_bus) + " took " + num(slowest, 3) + " s"};
}

std::vector<fs::path> artifact_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& sub : {"data", "models"}) {
    for (const auto& e : fs::directory_iterator(root / sub)) {
      const auto name = e.path().filename().string();
      if (name.size() > 11 && name.substr(name.size() - 11) == ".train.json") continue;  // wall-clock timings
      out.push_back(fs::relative(e.path(), root));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism_and_round_trips() {
  auto small = [](const fs::path& out, unsigned jobs) {
    cli::RunConfig cfg;
    cfg.per_scenario = 10;
    cfg.n2_count = 4;
    cfg.n3_count = 4;
    cfg.buses = {13, 14};
    cfg.train.max_epochs = 40;
    cfg.seed = 7;
    cfg.jobs = jobs;
    cfg.out_dir = out.string();
    return cfg;
  };
  const auto a = scratch("det_a"), b = scratch("det_b");
  std::ostringstream log;
  cli::run_pipeline(small(a, 1), log);
  cli::run_pipeline(small(b, 2), log);

  const auto files = artifact_files(a);
  std::size_t identical = 0;
  for (const auto& f : files) identical += fs::exists(b / f) && slurp(a / f) == slurp(b / f);
  const bool same_set = files == artifact_files(b);

  std::size_t datasets = 0, models = 0, exact = 0;
  for (const auto& f : files) {
    const auto text = slurp(a / f);
    if (f.extension() == ".csv") {
      ++datasets;
      std::istringstream in(text);
      std::ostringstream again;
      write_dataset(read_dataset(in), again);
      exact += again.str() == text;
    } else if (f.parent_path() == "models" && f.filename() != "manifest.json") {
      ++models;
      const auto m = model_from_json(text);
      exact += model_to_json(m) == text && model_from_json(model_to_json(m)) == m;
    }
  }
  fs::remove_all(a);
  fs::remove_all(b);
  return {same_set && identical == files.size() && files.size() > 0 && exact == datasets + models,
          std::to_string(identical) + "/" + std::to_string(files.size()) + " artifacts byte-identical across reruns, " +
              std::to_string(exact) + "/" + std::to_string(datasets + models) + " dataset/model round-trips exact"};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << name << "): " << o.detail << std::endl;
  };

  report(1, "power-flow correctness", power_flow_correctness);
  report(2, "OLS vs brute-force oracle", ols_vs_oracle);
  report(3, "zero-shed property", zero_shed);
  report(4, "gradient fidelity", gradient_fidelity);

  Protocol run;
  run.out = scratch("protocol");
  run.cfg = protocol_config(run.out);
  report(5, "stressed 14-bus single-outage regime", [&] { return table_regime(run); });
  report(6, "double-outage correlation trend", double_outage_trend);
  report(7, "per-bus training time", [&] { return training_time(run); });
  fs::remove_all(run.out);

  report(8, "determinism and round-trips", determinism_and_round_trips);

  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
