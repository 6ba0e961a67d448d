#include "loadshed/features.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "loadshed/error.hpp"
#include "loadshed/format.hpp"

namespace loadshed {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

std::vector<std::string> dataset_header(const Dataset& d) {
  std::vector<std::string> h{"bus", "scenario", "status"};
  for (auto& n : d.feature_names()) h.push_back(n);
  h.emplace_back("ps_mw");
  h.emplace_back("qs_mvar");
  return h;
}

}  // namespace

std::vector<double> FeatureVector::values() const {
  std::vector<double> out{p_d, q_d, v_post};
  out.insert(out.end(), p_flows.begin(), p_flows.end());
  out.insert(out.end(), q_flows.begin(), q_flows.end());
  out.push_back(freq);
  return out;
}

std::vector<std::size_t> feature_branches(const NetworkCase& c, int bus_id) {
  const auto i = c.bus_index(bus_id);
  if (!(c.buses()[i].p_d > 0.0)) {
    throw ConfigError("bus " + std::to_string(bus_id) + " is not a load center");
  }
  return c.incident_branches(i, false);
}

FeatureVector extract_features(const NetworkCase& post_case, int bus_id, const PowerFlowSolution& pf_post,
                               const FrequencyProxy& freq) {
  const auto branches = feature_branches(post_case, bus_id);
  const auto i = post_case.bus_index(bus_id);
  const double base = post_case.base_mva();
  FeatureVector f;
  f.p_d = post_case.buses()[i].p_d / base;
  f.q_d = post_case.buses()[i].q_d / base;
  f.v_post = pf_post.v.at(i);
  f.freq = freq.f;
  const auto flows = line_flows(post_case, pf_post);
  for (auto k : branches) {
    const auto* lf = flows.find(k);
    if (!lf) {
      f.p_flows.push_back(0.0);
      f.q_flows.push_back(0.0);
      continue;
    }
    const auto s = post_case.branches()[k].from == bus_id ? lf->s_from : lf->s_to;
    f.p_flows.push_back(s.real());
    f.q_flows.push_back(s.imag());
  }
  return f;
}

TargetVector extract_target(const NetworkCase& c, int bus_id, const OlsSolution& sol) {
  if (sol.status != OlsStatus::optimal) throw SolverError("shedding target from a non-optimal solution");
  const auto i = c.bus_index(bus_id);
  return {sol.p_s.at(i), sol.q_s.at(i)};
}

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> n{"p_d", "q_d", "v_post"};
  for (const auto& l : branch_labels) n.push_back("p_flow_" + l);
  for (const auto& l : branch_labels) n.push_back("q_flow_" + l);
  n.emplace_back("freq");
  return n;
}

Dataset Dataset::ok_rows() const {
  Dataset d{bus, branch_labels, {}};
  for (const auto& r : rows) {
    if (r.status == SampleStatus::ok) d.rows.push_back(r);
  }
  return d;
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset d{bus, branch_labels, {}};
  d.rows.reserve(idx.size());
  for (auto k : idx) d.rows.push_back(rows.at(k));
  return d;
}

Eigen::MatrixXd Dataset::feature_matrix() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width(); ++c) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r].features[c];
    }
  }
  return x;
}

Eigen::MatrixXd Dataset::target_matrix() const {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y(static_cast<Eigen::Index>(r), 0) = rows[r].ps_mw;
    y(static_cast<Eigen::Index>(r), 1) = rows[r].qs_mvar;
  }
  return y;
}

Dataset build_dataset(const NetworkCase& base, int bus_id, const std::vector<Scenario>& scenarios,
                      const std::vector<SampleRecord>& records) {
  Dataset d;
  d.bus = bus_id;
  for (auto k : feature_branches(base, bus_id)) d.branch_labels.push_back(base.branches()[k].label());
  for (const auto& rec : records) {
    const auto& scenario = scenarios.at(rec.scenario);
    DatasetRow row;
    row.scenario = scenario.id;
    row.status = rec.status;
    if (rec.status == SampleStatus::pf_diverged) {
      row.features.assign(d.width(), kNan);
    } else {
      const auto post = sample_case(base, scenario, rec.load);
      row.features = extract_features(post, bus_id, rec.pf_post, rec.freq).values();
    }
    if (rec.status == SampleStatus::ok) {
      const auto t = extract_target(base, bus_id, rec.ols);
      row.ps_mw = t.p_s;
      row.qs_mvar = t.q_s;
    } else {
      row.ps_mw = row.qs_mvar = kNan;
    }
    d.rows.push_back(std::move(row));
  }
  return d;
}

void write_dataset(const Dataset& d, std::ostream& out) {
  const auto header = dataset_header(d);
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  for (const auto& r : d.rows) {
    if (r.scenario.find_first_of(",\n\r") != std::string::npos) {
      throw SchemaError("scenario id '" + r.scenario + "' cannot be written to CSV");
    }
    if (r.features.size() != d.width()) throw SchemaError("row width does not match the dataset");
    out << d.bus << ',' << r.scenario << ',' << to_string(r.status);
    for (double v : r.features) out << ',' << format_double(v);
    out << ',' << format_double(r.ps_mw) << ',' << format_double(r.qs_mvar) << '\n';
  }
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_dataset(d, out);
  if (!out) throw std::runtime_error("error writing " + path);
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty dataset");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto cols = split(line, ',');
  const auto ncol = cols.size();
  if (ncol < 9 || cols[0] != "bus" || cols[1] != "scenario" || cols[2] != "status" || cols[3] != "p_d" ||
      cols[4] != "q_d" || cols[5] != "v_post" || cols[ncol - 3] != "freq" || cols[ncol - 2] != "ps_mw" ||
      cols[ncol - 1] != "qs_mvar" || (ncol - 9) % 2 != 0) {
    throw SchemaError("unexpected dataset header");
  }
  Dataset d;
  const auto deg = (ncol - 9) / 2;
  for (std::size_t k = 0; k < deg; ++k) {
    const auto p = cols[6 + k];
    const auto q = cols[6 + deg + k];
    if (p.substr(0, 7) != "p_flow_" || q.substr(0, 7) != "q_flow_" || p.substr(7) != q.substr(7)) {
      throw SchemaError("unexpected flow columns in dataset header");
    }
    d.branch_labels.emplace_back(p.substr(7));
  }

  bool have_bus = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != ncol) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " + std::to_string(ncol) +
                        " fields, found " + std::to_string(f.size()));
    }
    const double bus = parse_double(f[0]);
    if (bus != std::floor(bus)) throw SchemaError("line " + std::to_string(lineno) + ": bad bus id");
    if (!have_bus) {
      d.bus = static_cast<int>(bus);
      have_bus = true;
    } else if (static_cast<int>(bus) != d.bus) {
      throw SchemaError("line " + std::to_string(lineno) + ": dataset mixes buses");
    }
    DatasetRow row;
    row.scenario = std::string(f[1]);
    row.status = sample_status_from_string(f[2]);
    for (std::size_t k = 3; k < ncol - 2; ++k) row.features.push_back(parse_double(f[k]));
    row.ps_mw = parse_double(f[ncol - 2]);
    row.qs_mvar = parse_double(f[ncol - 1]);
    d.rows.push_back(std::move(row));
  }
  return d;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_dataset(in);
}

Eigen::MatrixXd NormalizationStats::apply(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.cols()) != size()) throw SchemaError("normalization width mismatch");
  Eigen::MatrixXd z(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const auto k = static_cast<std::size_t>(c);
    z.col(c) = (x.col(c).array() - mean[k]) / std[k];
  }
  return z;
}

Eigen::MatrixXd NormalizationStats::invert(const Eigen::MatrixXd& z) const {
  if (static_cast<std::size_t>(z.cols()) != size()) throw SchemaError("normalization width mismatch");
  Eigen::MatrixXd x(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const auto k = static_cast<std::size_t>(c);
    x.col(c) = z.col(c).array() * std[k] + mean[k];
  }
  return x;
}

std::string NormalizationStats::to_json() const {
  nlohmann::ordered_json j;
  j["names"] = names;
  j["mean"] = mean;
  j["std"] = std;
  return j.dump(2);
}

NormalizationStats NormalizationStats::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NormalizationStats s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    if (j.contains("names")) s.names = j.at("names").get<std::vector<std::string>>();
    if (s.mean.size() != s.std.size() || (!s.names.empty() && s.names.size() != s.mean.size())) {
      throw SchemaError("normalization arrays differ in length");
    }
    for (double v : s.std) {
      if (!(v > 0.0)) throw SchemaError("normalization std must be positive");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad normalization statistics: ") + e.what());
  }
}

NormalizationStats fit_normalization(const Eigen::MatrixXd& x, std::vector<std::string> names) {
  if (!names.empty() && names.size() != static_cast<std::size_t>(x.cols())) {
    throw ConfigError("normalization names do not match the column count");
  }
  NormalizationStats s;
  s.names = std::move(names);
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (x.rows() == 0) {
      s.mean.push_back(0.0);
      s.std.push_back(1.0);
      continue;
    }
    // Shifting by the first entry keeps constant columns exactly constant.
    const double x0 = x(0, c);
    const double mean = x0 + (x.col(c).array() - x0).sum() / n;
    const double var = (x.col(c).array() - mean).square().sum() / n;
    s.mean.push_back(mean);
    s.std.push_back(std::max(std::sqrt(var), kStdFloor));
  }
  return s;
}

std::pair<Dataset, NormalizationStats> normalize(const Dataset& d, const NormalizationStats* given) {
  NormalizationStats stats = given ? *given : fit_normalization(d.ok_rows().feature_matrix(), d.feature_names());
  if (stats.size() != d.width()) throw SchemaError("normalization width does not match the dataset");
  Dataset out = d;
  for (auto& r : out.rows) {
    for (std::size_t k = 0; k < r.features.size(); ++k) {
      r.features[k] = (r.features[k] - stats.mean[k]) / stats.std[k];
    }
  }
  return {std::move(out), std::move(stats)};
}

}  // namespace loadshed
