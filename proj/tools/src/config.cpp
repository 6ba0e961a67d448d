#include "config.hpp"

#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "loadshed/error.hpp"
#include "loadshed/format.hpp"

namespace loadshed::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(trim(v));
  } catch (const SchemaError&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<double>(static_cast<long long>(d))) throw ConfigError(key + ": expected an integer");
  return static_cast<long long>(d);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const auto n = to_integer(key, v);
  if (n < 0) throw ConfigError(key + ": must not be negative");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected true or false");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"case.path", [](RunConfig& c, auto&, auto& v) { c.case_path = trim(v); }},
      {"case.total_mw", [](RunConfig& c, auto& k, auto& v) { c.total_mw = to_double(k, v); }},
      {"scenarios.load_lo", [](RunConfig& c, auto& k, auto& v) { c.load_lo = to_double(k, v); }},
      {"scenarios.load_hi", [](RunConfig& c, auto& k, auto& v) { c.load_hi = to_double(k, v); }},
      {"scenarios.per_scenario", [](RunConfig& c, auto& k, auto& v) { c.per_scenario = to_count(k, v); }},
      {"scenarios.n2_count", [](RunConfig& c, auto& k, auto& v) { c.n2_count = to_count(k, v); }},
      {"scenarios.n3_count", [](RunConfig& c, auto& k, auto& v) { c.n3_count = to_count(k, v); }},
      {"scenarios.single", [](RunConfig& c, auto& k, auto& v) { c.single = to_bool(k, v); }},
      {"scenarios.multiple", [](RunConfig& c, auto& k, auto& v) { c.multiple = to_bool(k, v); }},
      {"scenarios.beta", [](RunConfig& c, auto& k, auto& v) { c.beta = to_double(k, v); }},
      {"scenarios.f0", [](RunConfig& c, auto& k, auto& v) { c.f0 = to_double(k, v); }},
      {"run.seed", [](RunConfig& c, auto& k, auto& v) { c.seed = static_cast<std::uint64_t>(to_count(k, v)); }},
      {"run.jobs", [](RunConfig& c, auto& k, auto& v) { c.jobs = static_cast<unsigned>(to_count(k, v)); }},
      {"run.buses", [](RunConfig& c, auto&, auto& v) { c.buses = parse_int_list(v); }},
      {"run.out_dir", [](RunConfig& c, auto&, auto& v) { c.out_dir = trim(v); }},
      {"ols.dominance", [](RunConfig& c, auto& k, auto& v) { c.dominance = to_double(k, v); }},
      {"ols.fixed_power_factor", [](RunConfig& c, auto& k, auto& v) { c.fixed_power_factor = to_bool(k, v); }},
      {"ols.feas_tol", [](RunConfig& c, auto& k, auto& v) { c.ipm.feas_tol = to_double(k, v); }},
      {"ols.grad_tol", [](RunConfig& c, auto& k, auto& v) { c.ipm.grad_tol = to_double(k, v); }},
      {"ols.comp_tol", [](RunConfig& c, auto& k, auto& v) { c.ipm.comp_tol = to_double(k, v); }},
      {"ols.cost_tol", [](RunConfig& c, auto& k, auto& v) { c.ipm.cost_tol = to_double(k, v); }},
      {"ols.max_iter", [](RunConfig& c, auto& k, auto& v) { c.ipm.max_iter = static_cast<int>(to_count(k, v)); }},
      {"powerflow.tol", [](RunConfig& c, auto& k, auto& v) { c.pf.tol = to_double(k, v); }},
      {"powerflow.max_iter", [](RunConfig& c, auto& k, auto& v) { c.pf.max_iter = static_cast<int>(to_count(k, v)); }},
      {"train.hidden", [](RunConfig& c, auto&, auto& v) { c.train.hidden = parse_int_list(v); }},
      {"train.learning_rate", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); }},
      {"train.lambda", [](RunConfig& c, auto& k, auto& v) { c.train.lambda = to_double(k, v); }},
      {"train.batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = static_cast<int>(to_count(k, v)); }},
      {"train.max_epochs", [](RunConfig& c, auto& k, auto& v) { c.train.max_epochs = static_cast<int>(to_count(k, v)); }},
      {"train.patience", [](RunConfig& c, auto& k, auto& v) { c.train.patience = static_cast<int>(to_count(k, v)); }},
      {"train.validation_fraction", [](RunConfig& c, auto& k, auto& v) { c.train.validation_fraction = to_double(k, v); }},
      {"train.test_fraction", [](RunConfig& c, auto& k, auto& v) { c.train.test_fraction = to_double(k, v); }},
      {"train.shed_weight", [](RunConfig& c, auto& k, auto& v) { c.train.shed_weight = to_double(k, v); }},
      {"eval.occurrence_eps", [](RunConfig& c, auto& k, auto& v) {
         c.occurrence_eps = to_double(k, v);
         c.train.shed_eps = c.occurrence_eps;
       }},
  };
  return table;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(to_integer("list entry", item)));
  }
  return out;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(total_mw >= 0.0, "total_mw must not be negative");
  require(load_lo > 0.0 && load_lo <= load_hi, "load range needs 0 < load_lo <= load_hi");
  require(per_scenario > 0, "per_scenario must be positive");
  require(single || multiple, "enable at least one of single / multiple");
  require(!buses.empty(), "bus list is empty");
  require(beta > 0.0, "beta must be positive");
  require(dominance >= 1.0, "dominance must be at least 1");
  require(occurrence_eps >= 0.0, "occurrence_eps must not be negative");
  require(pf.tol > 0.0 && pf.max_iter > 0, "power-flow tolerance and iteration limit must be positive");
  require(ipm.feas_tol > 0.0 && ipm.grad_tol > 0.0 && ipm.comp_tol > 0.0 && ipm.cost_tol > 0.0 && ipm.max_iter > 0,
          "solver tolerances and iteration limit must be positive");
  require(!train.hidden.empty(), "at least one hidden layer is required");
  for (int h : train.hidden) require(h > 0, "hidden layer sizes must be positive");
  require(train.learning_rate > 0.0, "learning_rate must be positive");
  require(train.lambda >= 0.0, "lambda must not be negative");
  require(train.batch_size > 0, "batch_size must be positive");
  require(train.patience > 0, "patience must be positive");
  require(train.validation_fraction >= 0.0 && train.validation_fraction < 1.0, "validation_fraction must lie in [0, 1)");
  require(train.test_fraction > 0.0 && train.test_fraction < 1.0, "test_fraction must lie in (0, 1)");
  require(train.shed_weight > 0.0, "shed_weight must be positive");
  require(!out_dir.empty(), "out_dir is empty");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const auto name = section + "." + key;
      const auto it = setters().find(name);
      if (it == setters().end()) throw ConfigError("config: unknown key '" + name + "'");
      it->second(cfg, name, value.data());
    }
  }
}

std::string config_to_ini(const RunConfig& c) {
  std::ostringstream os;
  auto num = [](double v) { return format_double(v); };
  auto flag = [](bool b) { return b ? "true" : "false"; };
  os << "[case]\npath = " << c.case_path << "\ntotal_mw = " << num(c.total_mw) << "\n\n";
  os << "[scenarios]\nload_lo = " << num(c.load_lo) << "\nload_hi = " << num(c.load_hi)
     << "\nper_scenario = " << c.per_scenario << "\nn2_count = " << c.n2_count << "\nn3_count = " << c.n3_count
     << "\nsingle = " << flag(c.single) << "\nmultiple = " << flag(c.multiple) << "\nbeta = " << num(c.beta)
     << "\nf0 = " << num(c.f0) << "\n\n";
  os << "[run]\nseed = " << c.seed << "\njobs = " << c.jobs << "\nbuses = " << join(c.buses)
     << "\nout_dir = " << c.out_dir << "\n\n";
  os << "[ols]\ndominance = " << num(c.dominance) << "\nfixed_power_factor = " << flag(c.fixed_power_factor)
     << "\nfeas_tol = " << num(c.ipm.feas_tol) << "\ngrad_tol = " << num(c.ipm.grad_tol)
     << "\ncomp_tol = " << num(c.ipm.comp_tol) << "\ncost_tol = " << num(c.ipm.cost_tol)
     << "\nmax_iter = " << c.ipm.max_iter << "\n\n";
  os << "[powerflow]\ntol = " << num(c.pf.tol) << "\nmax_iter = " << c.pf.max_iter << "\n\n";
  os << "[train]\nhidden = " << join(c.train.hidden) << "\nlearning_rate = " << num(c.train.learning_rate)
     << "\nlambda = " << num(c.train.lambda) << "\nbatch_size = " << c.train.batch_size
     << "\nmax_epochs = " << c.train.max_epochs << "\npatience = " << c.train.patience
     << "\nvalidation_fraction = " << num(c.train.validation_fraction)
     << "\ntest_fraction = " << num(c.train.test_fraction) << "\nshed_weight = " << num(c.train.shed_weight)
     << "\n\n";
  os << "[eval]\noccurrence_eps = " << num(c.occurrence_eps) << "\n";
  return os.str();
}

}  // namespace loadshed::cli
