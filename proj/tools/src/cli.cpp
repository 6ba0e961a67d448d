#include "cli.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "loadshed/error.hpp"
#include "loadshed/eval.hpp"
#include "loadshed/features.hpp"
#include "loadshed/format.hpp"
#include "loadshed/mlp.hpp"
#include "loadshed/ols.hpp"
#include "loadshed/rng.hpp"

namespace fs = std::filesystem;

namespace loadshed::cli {

namespace {

using Json = nlohmann::ordered_json;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

std::string digest_hex(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

std::vector<std::string> enabled_classes(const RunConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.single) out.emplace_back("single");
  if (cfg.multiple) out.emplace_back("multiple");
  return out;
}

std::string dataset_name(int bus, const std::string& klass) {
  return "bus" + std::to_string(bus) + "_" + klass;
}

CostConfig costs_for(const RunConfig& cfg, const NetworkCase& c) { return CostConfig::defaults(c, cfg.dominance); }

OlsOptions ols_options(const RunConfig& cfg) {
  OlsOptions o;
  o.fixed_power_factor = cfg.fixed_power_factor;
  return o;
}

std::vector<Scenario> scenarios_for(const RunConfig& cfg, const NetworkCase& base, const std::string& klass,
                                    Json& info) {
  if (klass == "single") {
    auto s = enumerate_n1(base);
    info["n1"] = s.size();
    return s;
  }
  std::vector<Scenario> out;
  for (int k : {2, 3}) {
    const auto count = k == 2 ? cfg.n2_count : cfg.n3_count;
    if (count == 0) continue;
    const auto tag = k == 2 ? "n2" : "n3";
    const auto draw = sample_nk(base, k, count, derive_seed(cfg.seed, tag));
    info[tag] = {{"requested", count}, {"drawn", draw.scenarios.size()}, {"valid", draw.valid},
                 {"shortfall", draw.shortfall}};
    out.insert(out.end(), draw.scenarios.begin(), draw.scenarios.end());
  }
  return out;
}

std::vector<std::size_t> parse_outage(const NetworkCase& c, const std::string& text) {
  std::vector<std::size_t> out;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, ',')) {
    std::stringstream parts(item);
    std::string tok;
    while (std::getline(parts, tok, '+')) {
      const auto dash = tok.find('-');
      if (dash == std::string::npos) throw ConfigError("outage '" + tok + "' is not of the form from-to");
      const auto ids = parse_int_list(tok.substr(0, dash) + "," + tok.substr(dash + 1));
      if (ids.size() != 2) throw ConfigError("outage '" + tok + "' is not of the form from-to");
      out.push_back(c.branch_index(ids[0], ids[1]));
    }
  }
  return out;
}

// Flags shared by the pipeline-style subcommands. Values are applied only
// when the flag was given, so they override the config file.
struct RunFlags {
  std::string case_path, out_dir, buses, hidden;
  double total = 0.0;
  std::uint64_t seed = 0;
  std::size_t per_scenario = 0, n2 = 0, n3 = 0;
  unsigned jobs = 1;
  int max_epochs = 0;
  std::string classes;
  CLI::Option *o_case{}, *o_out{}, *o_buses{}, *o_total{}, *o_seed{}, *o_per{}, *o_n2{}, *o_n3{}, *o_jobs{},
      *o_epochs{}, *o_classes{}, *o_hidden{};

  void add(CLI::App* app) {
    o_case = app->add_option("--case", case_path, "Case file (default: bundled IEEE 14-bus)");
    o_total = app->add_option("--total", total, "Total real demand after stressing, MW (0 keeps the case loading)");
    o_seed = app->add_option("--seed", seed, "Top-level random seed");
    o_per = app->add_option("--per-scenario", per_scenario, "Load samples per scenario");
    o_n2 = app->add_option("--n2", n2, "Sampled double-outage scenarios");
    o_n3 = app->add_option("--n3", n3, "Sampled triple-outage scenarios");
    o_buses = app->add_option("--buses", buses, "Comma-separated load-center bus ids");
    o_classes = app->add_option("--classes", classes, "Outage classes to run: single, multiple or both (comma-separated)");
    o_jobs = app->add_option("--jobs", jobs, "Worker threads");
    o_epochs = app->add_option("--max-epochs", max_epochs, "Training epoch limit");
    o_hidden = app->add_option("--hidden", hidden, "Hidden layer sizes, comma-separated");
    o_out = app->add_option("--out", out_dir, "Output directory");
  }

  void apply(RunConfig& cfg) const {
    if (o_case->count()) cfg.case_path = case_path;
    if (o_total->count()) cfg.total_mw = total;
    if (o_seed->count()) cfg.seed = seed;
    if (o_per->count()) cfg.per_scenario = per_scenario;
    if (o_n2->count()) cfg.n2_count = n2;
    if (o_n3->count()) cfg.n3_count = n3;
    if (o_buses->count()) cfg.buses = parse_int_list(buses);
    if (o_jobs->count()) cfg.jobs = jobs;
    if (o_epochs->count()) cfg.train.max_epochs = max_epochs;
    if (o_hidden->count()) cfg.train.hidden = parse_int_list(hidden);
    if (o_out->count()) cfg.out_dir = out_dir;
    if (o_classes->count()) {
      cfg.single = cfg.multiple = false;
      std::stringstream ss(classes);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item == "single") {
          cfg.single = true;
        } else if (item == "multiple") {
          cfg.multiple = true;
        } else {
          throw ConfigError("unknown outage class '" + item + "' (expected single or multiple)");
        }
      }
    }
  }
};

void print_pf(const NetworkCase& c, const PowerFlowSolution& pf, std::ostream& out) {
  out << "bus,v,theta_deg,p_g_mw,q_g_mvar\n";
  const double base = c.base_mva();
  for (std::size_t i = 0; i < c.bus_count(); ++i) {
    out << c.buses()[i].id << ',' << format_double(pf.v[i]) << ',' << format_double(pf.theta[i] * 180.0 / std::numbers::pi)
        << ',' << format_double(pf.p_g[i] * base) << ',' << format_double(pf.q_g[i] * base) << '\n';
  }
}

std::string ols_csv(const NetworkCase& c, const OlsSolution& s) {
  std::ostringstream out;
  out << "bus,p_s_mw,q_s_mvar,v,theta_deg\n";
  for (std::size_t i = 0; i < c.bus_count(); ++i) {
    out << c.buses()[i].id << ',' << format_double(s.p_s[i]) << ',' << format_double(s.q_s[i]) << ','
        << format_double(s.v[i]) << ',' << format_double(s.theta[i] * 180.0 / std::numbers::pi) << '\n';
  }
  return out.str();
}

std::string ols_json(const OlsSolution& s) {
  Json j;
  j["status"] = std::string(to_string(s.status));
  j["objective"] = s.objective;
  j["iterations"] = s.iterations;
  j["total_p_shed_mw"] = s.total_p_shed();
  j["total_q_shed_mvar"] = s.total_q_shed();
  j["kkt"] = {{"feasibility", s.kkt.feasibility}, {"gradient", s.kkt.gradient},
              {"complementarity", s.kkt.complementarity}};
  return j.dump(2) + "\n";
}

template <class F>
void parallel_for(std::size_t n, unsigned jobs, F&& body) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  auto worker = [&]() {
    for (;;) {
      const auto k = next.fetch_add(1);
      if (k >= n) return;
      try {
        body(k);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
        next = n;
        return;
      }
    }
  };
  const unsigned t = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (t == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < t; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

NetworkCase stressed_case(const RunConfig& cfg) {
  NetworkCase c = cfg.case_path.empty() || cfg.case_path == "ieee14" ? ieee14() : load_case(cfg.case_path);
  if (cfg.total_mw > 0.0) c = scale_to_total(c, cfg.total_mw);
  return c;
}

std::uint64_t training_seed(std::uint64_t seed, int bus, const std::string& outage_class) {
  return derive_seed(derive_seed(seed, "train-" + outage_class), "bus", static_cast<std::uint64_t>(bus));
}

void generate_datasets(const RunConfig& cfg, std::ostream& log) {
  const fs::path out(cfg.out_dir);
  const auto stressed = stressed_case(cfg);
  const auto costs = costs_for(cfg, stressed);
  const auto base = dispatch_operating_point(stressed, costs, ols_options(cfg), cfg.ipm);

  DatasetOptions opts;
  opts.load_lo = cfg.load_lo;
  opts.load_hi = cfg.load_hi;
  opts.beta = cfg.beta;
  opts.f0 = cfg.f0;
  opts.pf = cfg.pf;
  opts.ipm = cfg.ipm;
  opts.ols = ols_options(cfg);
  opts.costs = costs;
  opts.jobs = cfg.jobs;

  Json manifest;
  manifest["seed"] = cfg.seed;
  manifest["case_digest"] = case_digest(stressed);
  manifest["total_mw"] = stressed.total_p_demand();
  manifest["per_scenario"] = cfg.per_scenario;
  manifest["load_range"] = {cfg.load_lo, cfg.load_hi};
  Json classes = Json::object();
  Json files = Json::object();
  for (const auto& klass : enabled_classes(cfg)) {
    Json info;
    const auto scenarios = scenarios_for(cfg, base, klass, info);
    std::string list;
    for (const auto& s : scenarios) list += s.id + "\n";
    write_file(out / ("scenarios_" + klass + ".txt"), list);

    const auto records = generate_dataset(base, scenarios, cfg.per_scenario, derive_seed(cfg.seed, "dataset-" + klass), opts);
    const auto t = tally(records);
    info["scenarios"] = scenarios.size();
    info["records"] = records.size();
    info["ok"] = t.ok;
    info["pf_diverged"] = t.pf_diverged;
    info["ols_failed"] = t.ols_failed;
    classes[klass] = info;
    log << klass << ": " << scenarios.size() << " scenarios, " << records.size() << " samples (" << t.ok << " ok, "
        << t.pf_diverged << " pf_diverged, " << t.ols_failed << " ols_failed)\n";

    for (int bus : cfg.buses) {
      const auto ds = build_dataset(base, bus, scenarios, records);
      std::ostringstream csv;
      write_dataset(ds, csv);
      const auto rel = "data/" + dataset_name(bus, klass) + ".csv";
      write_file(out / rel, csv.str());
      files[rel] = digest_hex(csv.str());
    }
  }
  manifest["classes"] = classes;
  manifest["files"] = files;
  write_file(out / "data" / "manifest.json", manifest.dump(2) + "\n");
}

void train_models(const RunConfig& cfg, const std::string& data_dir, const std::string& model_dir, std::ostream& log) {
  struct Item {
    int bus;
    std::string klass;
  };
  std::vector<Item> items;
  for (const auto& klass : enabled_classes(cfg)) {
    for (int bus : cfg.buses) items.push_back({bus, klass});
  }
  const double base_mva = stressed_case(cfg).base_mva();
  std::vector<std::string> lines(items.size());
  std::vector<std::string> digests(items.size());
  parallel_for(items.size(), cfg.jobs, [&](std::size_t k) {
    const auto& it = items[k];
    const auto name = dataset_name(it.bus, it.klass);
    const auto ds = load_dataset((fs::path(data_dir) / (name + ".csv")).string());
    if (ds.bus != it.bus && !ds.rows.empty()) throw SchemaError(name + ".csv holds bus " + std::to_string(ds.bus));
    const auto fit = fit_load_center(ds, cfg.train, training_seed(cfg.seed, it.bus, it.klass), it.klass, base_mva);
    const auto text = model_to_json(fit.model);
    write_file(fs::path(model_dir) / (name + ".json"), text);
    write_file(fs::path(model_dir) / (name + ".train.json"), fit.training.to_json());
    digests[k] = digest_hex(text);
    std::ostringstream line;
    line << name << ": " << fit.train.rows.size() << " train / " << fit.test.rows.size() << " test rows, "
         << fit.training.epochs << " epochs (" << fit.training.stop_reason << "), "
         << format_double(std::round(fit.training.seconds * 100.0) / 100.0) << " s\n";
    lines[k] = line.str();
  });
  Json files = Json::object();
  for (std::size_t k = 0; k < items.size(); ++k) {
    log << lines[k];
    files[dataset_name(items[k].bus, items[k].klass) + ".json"] = digests[k];
  }
  write_file(fs::path(model_dir) / "manifest.json", Json{{"seed", cfg.seed}, {"files", files}}.dump(2) + "\n");
}

void evaluate_models(const RunConfig& cfg, const std::string& data_dir, const std::string& model_dir,
                     const std::string& report_dir, std::ostream& log) {
  EvalReport report;
  for (const auto& klass : enabled_classes(cfg)) {
    for (int bus : cfg.buses) {
      const auto name = dataset_name(bus, klass);
      const auto ds = load_dataset((fs::path(data_dir) / (name + ".csv")).string());
      const auto model = load_model((fs::path(model_dir) / (name + ".json")).string());
      const auto [train, test] = split_dataset(ds, cfg.train.test_fraction, training_seed(cfg.seed, bus, klass));
      report.entries.push_back(evaluate(model, train, test, cfg.occurrence_eps));
      std::ostringstream scatter;
      export_scatter(ds, scatter);
      write_file(fs::path(report_dir) / ("scatter_" + name + ".csv"), scatter.str());
    }
  }
  write_file(fs::path(report_dir) / "report.txt", report.text());
  write_file(fs::path(report_dir) / "report.json", report.to_json());
  log << report.text();
}

void run_pipeline(const RunConfig& cfg, std::ostream& log) {
  const fs::path out(cfg.out_dir);
  write_file(out / "config.ini", config_to_ini(cfg));
  generate_datasets(cfg, log);
  train_models(cfg, (out / "data").string(), (out / "models").string(), log);
  evaluate_models(cfg, (out / "data").string(), (out / "models").string(), (out / "report").string(), log);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal load shedding: contingency datasets and per-bus decision rules", "loadshed"};
  app.require_subcommand(1);
  app.fallthrough();  // --config may follow the subcommand
  std::string config_path;
  app.add_option("--config", config_path, std::string("INI configuration file (default: $") + kConfigEnv + ")");

  std::string case_path, outage, model_path, features, json_path, csv_path, dataset_path, klass = "single";
  std::optional<double> total;
  std::size_t count = 10, row = 0;
  std::uint64_t seed = 1;

  auto* parse = app.add_subcommand("parse", "Validate a case file and print a summary");
  parse->add_option("--case", case_path, "Case file (default: bundled IEEE 14-bus)");

  auto* pf = app.add_subcommand("pf", "Solve one power flow");
  auto* ols = app.add_subcommand("ols", "Solve one optimal load shedding problem");
  for (auto* sub : {pf, ols}) {
    sub->add_option("--case", case_path, "Case file (default: bundled IEEE 14-bus)");
    sub->add_option("--total", total, "Scale demand to this total, MW");
    sub->add_option("--outage", outage, "Branches to take out, e.g. 2-3,4-9");
  }
  ols->add_option("--json", json_path, "Write the solve summary as JSON");
  ols->add_option("--csv", csv_path, "Write per-bus results to a file instead of standard output");

  auto* scen = app.add_subcommand("scenarios", "List contingency scenarios");
  scen->add_option("--case", case_path, "Case file (default: bundled IEEE 14-bus)");
  scen->add_option("--class", klass, "single, double or triple");
  scen->add_option("--count", count, "Scenarios to draw for double / triple");
  scen->add_option("--seed", seed, "Sampling seed");

  RunFlags dataset_flags, train_flags, eval_flags, pipeline_flags;
  auto* dataset = app.add_subcommand("dataset", "Generate per-bus datasets");
  dataset_flags.add(dataset);
  auto* train = app.add_subcommand("train", "Train per-bus models from generated datasets");
  train_flags.add(train);
  auto* evalc = app.add_subcommand("eval", "Evaluate trained models and write reports");
  eval_flags.add(evalc);
  auto* pipeline = app.add_subcommand("pipeline", "Generate, train and evaluate end to end");
  pipeline_flags.add(pipeline);

  auto* predict_cmd = app.add_subcommand("predict", "Shedding decision for one feature row");
  predict_cmd->add_option("--model", model_path, "Model JSON")->required();
  auto* feat_opt = predict_cmd->add_option("--features", features, "Comma-separated raw feature values");
  auto* ds_opt = predict_cmd->add_option("--dataset", dataset_path, "Take the features from a dataset CSV");
  predict_cmd->add_option("--row", row, "Row of --dataset (0-based)");
  feat_opt->excludes(ds_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return Exit::ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return Exit::ok;
  } catch (const CLI::ParseError& e) {
    err << "loadshed: " << e.what() << "\n";
    return Exit::usage;
  }

  try {
    RunConfig cfg;
    if (config_path.empty()) {
      if (const char* env = std::getenv(kConfigEnv); env && *env) config_path = env;
    }
    if (!config_path.empty()) apply_config_file(cfg, config_path);

    if (parse->parsed()) {
      const auto c = case_path.empty() ? ieee14() : load_case(case_path);
      out << "buses " << c.bus_count() << ", generators " << c.gens().size() << ", branches " << c.branch_count()
          << "\ntotal demand " << format_double(c.total_p_demand()) << " MW, " << format_double(c.total_q_demand())
          << " MVAr\nconnected " << (check_connectivity(c).connected ? "yes" : "no") << "\ndigest "
          << case_digest(c) << "\n";
      return Exit::ok;
    }
    if (pf->parsed() || ols->parsed()) {
      NetworkCase c = case_path.empty() ? ieee14() : load_case(case_path);
      if (total) c = scale_to_total(c, *total);
      const auto intact = c;
      if (!outage.empty()) c = apply_outage(c, parse_outage(c, outage));
      const auto flow = solve_power_flow(c, std::nullopt, cfg.pf);
      if (pf->parsed()) {
        if (!flow.converged) {
          err << "loadshed: power flow did not converge (max mismatch " << format_double(flow.max_mismatch) << ")\n";
          return Exit::solver;
        }
        print_pf(c, flow, out);
        err << "converged in " << flow.iterations << " iterations, max mismatch " << format_double(flow.max_mismatch)
            << " pu\n";
        return Exit::ok;
      }
      OlsOptions oo;
      oo.fixed_power_factor = cfg.fixed_power_factor;
      const auto problem = assemble_ols(c, CostConfig::defaults(intact, cfg.dominance), oo);
      const auto sol = solve_ols(problem, cfg.ipm, flow.converged ? std::optional(flow) : std::nullopt);
      const auto csv = ols_csv(c, sol);
      if (csv_path.empty()) {
        out << csv;
      } else {
        write_file(csv_path, csv);
      }
      if (!json_path.empty()) write_file(json_path, ols_json(sol));
      err << "status " << to_string(sol.status) << ", objective " << format_double(sol.objective) << " $/h, shed "
          << format_double(sol.total_p_shed()) << " MW\n";
      return sol.status == OlsStatus::optimal ? Exit::ok : Exit::solver;
    }
    if (scen->parsed()) {
      const auto c = case_path.empty() ? ieee14() : load_case(case_path);
      const auto k = outage_class_from_string(klass);
      if (k == OutageClass::single) {
        for (const auto& s : enumerate_n1(c)) out << s.id << "\n";
        return Exit::ok;
      }
      const auto draw = sample_nk(c, static_cast<int>(k), count, seed);
      for (const auto& s : draw.scenarios) out << s.id << "\n";
      if (draw.shortfall) {
        err << "only " << draw.scenarios.size() << " connectivity-preserving scenarios exist (requested " << count
            << ")\n";
      }
      return Exit::ok;
    }
    if (predict_cmd->parsed()) {
      const auto model = load_model(model_path);
      std::vector<double> x;
      if (!dataset_path.empty()) {
        const auto ds = load_dataset(dataset_path);
        if (row >= ds.rows.size()) throw ConfigError("row " + std::to_string(row) + " is past the end of the dataset");
        x = ds.rows[row].features;
      } else if (!features.empty()) {
        std::stringstream ss(features);
        std::string item;
        while (std::getline(ss, item, ',')) x.push_back(parse_double(item));
      } else {
        throw ConfigError("predict needs --features or --dataset");
      }
      if (x.size() != static_cast<std::size_t>(model.inputs())) {
        throw SchemaError("model expects " + std::to_string(model.inputs()) + " features, got " +
                          std::to_string(x.size()));
      }
      const auto y = predict(model, x);
      out << "p_s_mw,q_s_mvar\n" << format_double(y.p_s) << ',' << format_double(y.q_s) << "\n";
      return Exit::ok;
    }

    if (dataset->parsed()) {
      dataset_flags.apply(cfg);
      cfg.validate();
      generate_datasets(cfg, err);
    } else if (train->parsed()) {
      train_flags.apply(cfg);
      cfg.validate();
      const fs::path out_dir(cfg.out_dir);
      train_models(cfg, (out_dir / "data").string(), (out_dir / "models").string(), err);
    } else if (evalc->parsed()) {
      eval_flags.apply(cfg);
      cfg.validate();
      const fs::path out_dir(cfg.out_dir);
      evaluate_models(cfg, (out_dir / "data").string(), (out_dir / "models").string(), (out_dir / "report").string(),
                      out);
    } else if (pipeline->parsed()) {
      pipeline_flags.apply(cfg);
      cfg.validate();
      run_pipeline(cfg, err);
    }
    return Exit::ok;
  } catch (const SolverError& e) {
    err << "loadshed: " << e.what() << "\n";
    return Exit::solver;
  } catch (const std::exception& e) {
    err << "loadshed: " << e.what() << "\n";
    return Exit::data;
  }
}

}  // namespace loadshed::cli
