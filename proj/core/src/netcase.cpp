#include "loadshed/netcase.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "loadshed/error.hpp"
#include "loadshed/format.hpp"

namespace loadshed {

namespace {

using Table = std::vector<std::vector<double>>;

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  for (char c : text) {
    if (c == '%') in_comment = true;
    if (c == '\n') in_comment = false;
    if (!in_comment) out.push_back(c);
  }
  return out;
}

// Position just after "mpc.<name>" followed by '=', or npos.
std::size_t find_assignment(const std::string& text, std::string_view name) {
  const std::string key = "." + std::string(name);
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    std::size_t p = pos + key.size();
    while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
    if (p < text.size() && text[p] == '=') return p + 1;
    pos += key.size();
  }
  return std::string::npos;
}

std::vector<std::string_view> split_tokens(std::string_view row) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < row.size()) {
    while (i < row.size() &&
           (std::isspace(static_cast<unsigned char>(row[i])) || row[i] == ','))
      ++i;
    std::size_t j = i;
    while (j < row.size() &&
           !(std::isspace(static_cast<unsigned char>(row[j])) || row[j] == ','))
      ++j;
    if (j > i) tokens.push_back(row.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::optional<Table> read_table(const std::string& text, std::string_view name) {
  std::size_t p = find_assignment(text, name);
  if (p == std::string::npos) return std::nullopt;
  std::size_t open = text.find('[', p);
  std::size_t close = text.find(']', p);
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw CaseError("table '" + std::string(name) + "' is not a bracketed matrix");
  }
  std::string_view body(text.data() + open + 1, close - open - 1);
  Table table;
  std::size_t start = 0;
  int row_no = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i == body.size() || body[i] == ';' || body[i] == '\n') {
      auto tokens = split_tokens(body.substr(start, i - start));
      start = i + 1;
      if (tokens.empty()) continue;
      ++row_no;
      std::vector<double> row;
      row.reserve(tokens.size());
      for (auto tok : tokens) {
        try {
          row.push_back(parse_double(tok));
        } catch (const SchemaError&) {
          throw CaseError("malformed row " + std::to_string(row_no) + " in table '" +
                          std::string(name) + "': bad token '" + std::string(tok) + "'");
        }
      }
      table.push_back(std::move(row));
    }
  }
  return table;
}

Table require_table(const std::string& text, std::string_view name, std::size_t min_cols) {
  auto t = read_table(text, name);
  if (!t) throw CaseError("missing required table '" + std::string(name) + "'");
  for (std::size_t r = 0; r < t->size(); ++r) {
    if ((*t)[r].size() < min_cols) {
      throw CaseError("malformed row " + std::to_string(r + 1) + " in table '" +
                      std::string(name) + "': expected at least " +
                      std::to_string(min_cols) + " columns, got " +
                      std::to_string((*t)[r].size()));
    }
  }
  return *t;
}

int as_int(double v, std::string_view what) {
  if (!std::isfinite(v) || std::floor(v) != v) {
    throw CaseError("non-integer value for " + std::string(what));
  }
  return static_cast<int>(v);
}

}  // namespace

double BranchRecord::shift_rad() const { return shift_deg * std::numbers::pi / 180.0; }

std::string BranchRecord::label() const {
  return std::to_string(from) + "-" + std::to_string(to);
}

NetworkCase::NetworkCase(double base_mva, std::vector<BusRecord> buses,
                         std::vector<GenRecord> gens, std::vector<BranchRecord> branches)
    : base_mva_(base_mva),
      buses_(std::move(buses)),
      gens_(std::move(gens)),
      branches_(std::move(branches)) {
  validate();
}

void NetworkCase::validate() {
  if (!(base_mva_ > 0.0)) throw CaseError("base MVA must be positive");
  if (buses_.empty()) throw CaseError("case has no buses");
  index_.clear();
  int slack_count = 0;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    const auto& b = buses_[i];
    if (!index_.emplace(b.id, i).second) {
      throw CaseError("duplicate bus id " + std::to_string(b.id));
    }
    if (!(b.v_min > 0.0)) throw CaseError("bus " + std::to_string(b.id) + ": v_min must be positive");
    if (b.v_min > b.v_max) throw CaseError("bus " + std::to_string(b.id) + ": v_min > v_max");
    if (b.kind == BusKind::slack) {
      ++slack_count;
      slack_ = i;
    }
  }
  if (slack_count == 0) throw CaseError("no slack bus");
  if (slack_count > 1) throw CaseError("multiple slack buses");
  for (const auto& g : gens_) {
    if (!index_.contains(g.bus)) {
      throw CaseError("generator references unknown bus " + std::to_string(g.bus));
    }
    if (g.p_min > g.p_max) throw CaseError("generator at bus " + std::to_string(g.bus) + ": p_min > p_max");
    if (g.q_min > g.q_max) throw CaseError("generator at bus " + std::to_string(g.bus) + ": q_min > q_max");
  }
  for (const auto& br : branches_) {
    if (!index_.contains(br.from) || !index_.contains(br.to)) {
      throw CaseError("branch " + br.label() + " references unknown bus");
    }
    if (br.from == br.to) throw CaseError("branch " + br.label() + " is a self-loop");
    if (br.r == 0.0 && br.x == 0.0) throw CaseError("branch " + br.label() + " has zero impedance");
    if (!(br.tap > 0.0)) throw CaseError("branch " + br.label() + ": tap must be positive");
    if (br.s_rating < 0.0) throw CaseError("branch " + br.label() + ": negative rating");
  }
}

std::size_t NetworkCase::in_service_branch_count() const {
  return static_cast<std::size_t>(
      std::count_if(branches_.begin(), branches_.end(), [](const auto& b) { return b.in_service; }));
}

std::size_t NetworkCase::bus_index(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw CaseError("unknown bus id " + std::to_string(id));
  return it->second;
}

std::size_t NetworkCase::branch_index(int a, int b) const {
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const auto& br = branches_[k];
    if ((br.from == a && br.to == b) || (br.from == b && br.to == a)) return k;
  }
  throw CaseError("no branch between buses " + std::to_string(a) + " and " + std::to_string(b));
}

double NetworkCase::total_p_demand() const {
  double s = 0.0;
  for (const auto& b : buses_) s += b.p_d;
  return s;
}

double NetworkCase::total_q_demand() const {
  double s = 0.0;
  for (const auto& b : buses_) s += b.q_d;
  return s;
}

std::vector<std::size_t> NetworkCase::incident_branches(std::size_t bus,
                                                        bool in_service_only) const {
  const int id = buses_.at(bus).id;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const auto& br = branches_[k];
    if (in_service_only && !br.in_service) continue;
    if (br.from == id || br.to == id) out.push_back(k);
  }
  return out;
}

NetworkCase parse_case(std::string_view raw) {
  const std::string text = strip_comments(raw);

  std::size_t p = find_assignment(text, "baseMVA");
  if (p == std::string::npos) throw CaseError("missing required table 'baseMVA'");
  std::size_t semi = text.find_first_of(";\n", p);
  auto base_tokens = split_tokens(std::string_view(text).substr(p, semi - p));
  if (base_tokens.size() != 1) throw CaseError("malformed baseMVA");
  double base_mva = 0.0;
  try {
    base_mva = parse_double(base_tokens[0]);
  } catch (const SchemaError&) {
    throw CaseError("malformed baseMVA");
  }

  Table bus_t = require_table(text, "bus", 13);
  Table gen_t = require_table(text, "gen", 10);
  Table branch_t = require_table(text, "branch", 11);
  Table cost_t = require_table(text, "gencost", 4);

  std::vector<BusRecord> buses;
  for (const auto& row : bus_t) {
    BusRecord b;
    b.id = as_int(row[0], "bus id");
    int type = as_int(row[1], "bus type");
    if (type < 1 || type > 3) {
      throw CaseError("bus " + std::to_string(b.id) + ": unsupported bus type " + std::to_string(type));
    }
    b.kind = static_cast<BusKind>(type);
    b.p_d = row[2];
    b.q_d = row[3];
    b.shunt_g = row[4];
    b.shunt_b = row[5];
    b.area = as_int(row[6], "bus area");
    b.v_m = row[7];
    b.v_a = row[8];
    b.base_kv = row[9];
    b.zone = as_int(row[10], "bus zone");
    b.v_max = row[11];
    b.v_min = row[12];
    buses.push_back(b);
  }

  std::vector<GenRecord> gens;
  for (const auto& row : gen_t) {
    GenRecord g;
    g.bus = as_int(row[0], "generator bus");
    g.p_g = row[1];
    g.q_g = row[2];
    g.q_max = row[3];
    g.q_min = row[4];
    g.v_set = row[5];
    g.m_base = row[6];
    g.in_service = row[7] > 0.0;
    g.p_max = row[8];
    g.p_min = row[9];
    gens.push_back(g);
  }

  if (cost_t.size() != gens.size() && cost_t.size() != 2 * gens.size()) {
    throw CaseError("gencost has " + std::to_string(cost_t.size()) + " rows for " +
                    std::to_string(gens.size()) + " generators");
  }
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const auto& row = cost_t[k];
    if (as_int(row[0], "cost model") != 2) {
      throw CaseError("gencost row " + std::to_string(k + 1) + ": only polynomial costs are supported");
    }
    const int n = as_int(row[3], "cost term count");
    if (n < 1 || n > 3 || row.size() < 4 + static_cast<std::size_t>(n)) {
      throw CaseError("malformed row " + std::to_string(k + 1) + " in table 'gencost'");
    }
    // Coefficients run from highest order to constant.
    double coef[3] = {0.0, 0.0, 0.0};
    for (int t = 0; t < n; ++t) coef[3 - n + t] = row[4 + static_cast<std::size_t>(t)];
    gens[k].cost_a = coef[0];
    gens[k].cost_b = coef[1];
    gens[k].cost_c = coef[2];
  }

  std::vector<BranchRecord> branches;
  for (const auto& row : branch_t) {
    BranchRecord br;
    br.from = as_int(row[0], "branch from-bus");
    br.to = as_int(row[1], "branch to-bus");
    br.r = row[2];
    br.x = row[3];
    br.b_ch = row[4];
    br.s_rating = row[5];
    br.rate_b = row[6];
    br.rate_c = row[7];
    br.tap = row[8] == 0.0 ? 1.0 : row[8];
    br.shift_deg = row[9];
    br.in_service = row[10] > 0.0;
    if (row.size() >= 13) {
      br.ang_min = row[11];
      br.ang_max = row[12];
    }
    branches.push_back(br);
  }

  return NetworkCase(base_mva, std::move(buses), std::move(gens), std::move(branches));
}

NetworkCase load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CaseError("cannot open case file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

std::string serialize_case(const NetworkCase& c) {
  auto f = [](double v) { return format_double(v); };
  std::ostringstream out;
  out << "function mpc = loadshed_case\n"
      << "mpc.version = '2';\n"
      << "mpc.baseMVA = " << f(c.base_mva()) << ";\n\n";

  out << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n"
      << "mpc.bus = [\n";
  for (const auto& b : c.buses()) {
    out << '\t' << b.id << '\t' << static_cast<int>(b.kind) << '\t' << f(b.p_d) << '\t'
        << f(b.q_d) << '\t' << f(b.shunt_g) << '\t' << f(b.shunt_b) << '\t' << b.area << '\t'
        << f(b.v_m) << '\t' << f(b.v_a) << '\t' << f(b.base_kv) << '\t' << b.zone << '\t'
        << f(b.v_max) << '\t' << f(b.v_min) << ";\n";
  }
  out << "];\n\n";

  out << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n"
      << "mpc.gen = [\n";
  for (const auto& g : c.gens()) {
    out << '\t' << g.bus << '\t' << f(g.p_g) << '\t' << f(g.q_g) << '\t' << f(g.q_max) << '\t'
        << f(g.q_min) << '\t' << f(g.v_set) << '\t' << f(g.m_base) << '\t'
        << (g.in_service ? 1 : 0) << '\t' << f(g.p_max) << '\t' << f(g.p_min) << ";\n";
  }
  out << "];\n\n";

  out << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n"
      << "mpc.branch = [\n";
  for (const auto& br : c.branches()) {
    out << '\t' << br.from << '\t' << br.to << '\t' << f(br.r) << '\t' << f(br.x) << '\t'
        << f(br.b_ch) << '\t' << f(br.s_rating) << '\t' << f(br.rate_b) << '\t' << f(br.rate_c)
        << '\t' << f(br.tap) << '\t' << f(br.shift_deg) << '\t' << (br.in_service ? 1 : 0)
        << '\t' << f(br.ang_min) << '\t' << f(br.ang_max) << ";\n";
  }
  out << "];\n\n";

  out << "%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\n"
      << "mpc.gencost = [\n";
  for (const auto& g : c.gens()) {
    out << "\t2\t0\t0\t3\t" << f(g.cost_a) << '\t' << f(g.cost_b) << '\t' << f(g.cost_c) << ";\n";
  }
  out << "];\n";
  return out.str();
}

BranchAdmittance branch_admittance(const BranchRecord& br) {
  using cd = std::complex<double>;
  const cd ys = 1.0 / cd(br.r, br.x);
  const cd tap = std::polar(br.tap, br.shift_rad());
  const cd ytt = ys + cd(0.0, br.b_ch / 2.0);
  return BranchAdmittance{
      .ff = ytt / (br.tap * br.tap),
      .ft = -ys / std::conj(tap),
      .tf = -ys / tap,
      .tt = ytt,
  };
}

AdmittanceMatrix build_admittance(const NetworkCase& c) {
  using Triplet = Eigen::Triplet<double>;
  const auto n = static_cast<Eigen::Index>(c.bus_count());
  std::vector<Triplet> gt, bt;
  auto add = [&](std::size_t i, std::size_t j, std::complex<double> y) {
    gt.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), y.real());
    bt.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), y.imag());
  };
  for (const auto& br : c.branches()) {
    if (!br.in_service) continue;
    const auto f = c.bus_index(br.from);
    const auto t = c.bus_index(br.to);
    const auto y = branch_admittance(br);
    add(f, f, y.ff);
    add(f, t, y.ft);
    add(t, f, y.tf);
    add(t, t, y.tt);
  }
  for (std::size_t i = 0; i < c.bus_count(); ++i) {
    const auto& b = c.buses()[i];
    if (b.shunt_g != 0.0 || b.shunt_b != 0.0) {
      add(i, i, std::complex<double>(b.shunt_g, b.shunt_b) / c.base_mva());
    }
  }
  AdmittanceMatrix y;
  y.g.resize(n, n);
  y.b.resize(n, n);
  y.g.setFromTriplets(gt.begin(), gt.end());
  y.b.setFromTriplets(bt.begin(), bt.end());
  return y;
}

NetworkCase apply_outage(const NetworkCase& c, std::span<const std::size_t> lines) {
  auto branches = c.branches();
  for (auto k : lines) {
    if (k >= branches.size()) {
      throw CaseError("unknown branch index " + std::to_string(k));
    }
    branches[k].in_service = false;
  }
  return NetworkCase(c.base_mva(), c.buses(), c.gens(), std::move(branches));
}

NetworkCase scale_loads(const NetworkCase& c, std::span<const double> factor_per_bus) {
  if (factor_per_bus.size() != c.bus_count()) {
    throw ConfigError("expected one load factor per bus");
  }
  auto buses = c.buses();
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const double k = factor_per_bus[i];
    if (!(k > 0.0)) {
      throw ConfigError("nonpositive load factor " + format_double(k) + " at bus " +
                        std::to_string(buses[i].id));
    }
    buses[i].p_d *= k;
    buses[i].q_d *= k;
  }
  return NetworkCase(c.base_mva(), std::move(buses), c.gens(), c.branches());
}

NetworkCase scale_loads(const NetworkCase& c, const std::map<int, double>& factor_per_bus_id) {
  std::vector<double> factors(c.bus_count(), 1.0);
  for (const auto& [id, k] : factor_per_bus_id) factors[c.bus_index(id)] = k;
  return scale_loads(c, factors);
}

NetworkCase scale_to_total(const NetworkCase& c, double target_mw) {
  const double total = c.total_p_demand();
  if (!(total > 0.0) || !(target_mw > 0.0)) {
    throw ConfigError("cannot scale a case with no real demand to a positive total");
  }
  std::vector<double> factors(c.bus_count(), target_mw / total);
  return scale_loads(c, factors);
}

NetworkCase ieee14() { return parse_case(ieee14_case_text()); }

}  // namespace loadshed
