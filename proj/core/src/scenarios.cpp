#include "loadshed/scenarios.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "loadshed/error.hpp"
#include "loadshed/rng.hpp"

namespace loadshed {

std::string_view to_string(OutageClass k) {
  switch (k) {
    case OutageClass::single: return "single";
    case OutageClass::double_line: return "double";
    case OutageClass::triple_line: return "triple";
  }
  return "unknown";
}

OutageClass outage_class_from_string(std::string_view s) {
  if (s == "single" || s == "1") return OutageClass::single;
  if (s == "double" || s == "2") return OutageClass::double_line;
  if (s == "triple" || s == "3") return OutageClass::triple_line;
  throw ConfigError("unknown outage class '" + std::string(s) + "'");
}

std::string_view to_string(SampleStatus s) {
  switch (s) {
    case SampleStatus::ok: return "ok";
    case SampleStatus::pf_diverged: return "pf_diverged";
    case SampleStatus::ols_failed: return "ols_failed";
  }
  return "unknown";
}

SampleStatus sample_status_from_string(std::string_view s) {
  if (s == "ok") return SampleStatus::ok;
  if (s == "pf_diverged") return SampleStatus::pf_diverged;
  if (s == "ols_failed") return SampleStatus::ols_failed;
  throw SchemaError("unknown sample status '" + std::string(s) + "'");
}

Scenario make_scenario(const NetworkCase& c, std::vector<std::size_t> branches) {
  if (branches.empty() || branches.size() > 3) throw ConfigError("a scenario outages 1 to 3 branches");
  std::sort(branches.begin(), branches.end());
  if (std::adjacent_find(branches.begin(), branches.end()) != branches.end()) {
    throw ConfigError("duplicate branch in scenario");
  }
  Scenario s;
  for (auto b : branches) {
    if (b >= c.branch_count()) throw ConfigError("scenario branch position out of range");
    if (!s.id.empty()) s.id += '+';
    s.id += c.branches()[b].label();
  }
  s.outaged = std::move(branches);
  s.klass = static_cast<OutageClass>(s.outaged.size());
  return s;
}

namespace {

std::vector<std::size_t> in_service_branches(const NetworkCase& c) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < c.branch_count(); ++k) {
    if (c.branches()[k].in_service) out.push_back(k);
  }
  return out;
}

bool keeps_connected(const NetworkCase& c, const std::vector<std::size_t>& lines) {
  return check_connectivity(apply_outage(c, lines)).connected;
}

double choose(std::size_t n, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r = r * static_cast<double>(n - static_cast<std::size_t>(i)) / (i + 1);
  return r;
}

constexpr double kEnumerationLimit = 2e5;

}  // namespace

std::vector<Scenario> enumerate_n1(const NetworkCase& c) {
  std::vector<Scenario> out;
  for (auto b : in_service_branches(c)) {
    if (keeps_connected(c, {b})) out.push_back(make_scenario(c, {b}));
  }
  return out;
}

NkSample sample_nk(const NetworkCase& c, int k, std::size_t count, std::uint64_t seed) {
  if (k != 2 && k != 3) throw ConfigError("k must be 2 or 3");
  const auto lines = in_service_branches(c);
  const auto m = lines.size();
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> chosen;
  NkSample out;

  if (m < static_cast<std::size_t>(k)) {
    out.shortfall = count > 0;
    return out;
  }
  if (choose(m, k) <= kEnumerationLimit) {
    std::vector<std::vector<std::size_t>> valid;
    std::vector<std::size_t> idx(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) idx[i] = i;
    while (true) {
      std::vector<std::size_t> subset;
      for (auto i : idx) subset.push_back(lines[i]);
      if (keeps_connected(c, subset)) valid.push_back(subset);
      int pos = k - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == m - static_cast<std::size_t>(k - pos)) --pos;
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
      for (auto j = static_cast<std::size_t>(pos) + 1; j < idx.size(); ++j) idx[j] = idx[j - 1] + 1;
    }
    out.valid = valid.size();
    const auto take = std::min(count, valid.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.index(valid.size() - i));
      std::swap(valid[i], valid[j]);
      chosen.push_back(valid[i]);
    }
  } else {
    // Too many subsets to list: rejection-sample distinct connected ones.
    std::set<std::vector<std::size_t>> seen;
    std::vector<std::size_t> pool = lines;
    for (std::size_t attempt = 0; attempt < 1000 * count && chosen.size() < count; ++attempt) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
        std::swap(pool[i], pool[i + static_cast<std::size_t>(rng.index(m - i))]);
      }
      std::vector<std::size_t> subset(pool.begin(), pool.begin() + k);
      std::sort(subset.begin(), subset.end());
      if (!seen.insert(subset).second) continue;
      if (keeps_connected(c, subset)) chosen.push_back(subset);
    }
    out.valid = chosen.size();
  }
  std::sort(chosen.begin(), chosen.end());
  for (auto& s : chosen) out.scenarios.push_back(make_scenario(c, s));
  out.shortfall = out.scenarios.size() < count;
  return out;
}

std::vector<LoadSample> sample_loads(const NetworkCase& c, double lo, double hi, std::size_t count,
                                     std::uint64_t seed) {
  if (!(lo > 0.0) || !(lo <= hi)) throw ConfigError("load multiplier range needs 0 < lo <= hi");
  Rng rng(seed);
  std::vector<LoadSample> out(count);
  for (auto& s : out) {
    s.multipliers.resize(c.bus_count());
    for (auto& m : s.multipliers) m = rng.uniform(lo, hi);
  }
  return out;
}

NetworkCase sample_case(const NetworkCase& base, const Scenario& s, const LoadSample& load) {
  return apply_outage(scale_loads(base, load.multipliers), s.outaged);
}

NetworkCase dispatch_operating_point(const NetworkCase& c, const CostConfig& costs, const OlsOptions& ols,
                                     const IpmOptions& ipm) {
  const auto problem = assemble_ols(c, costs, ols);
  const auto pf = solve_power_flow(c);
  const auto sol = solve_ols(problem, ipm, pf.converged ? std::optional(pf) : std::nullopt);
  if (sol.status != OlsStatus::optimal) return c;

  auto gens = c.gens();
  for (std::size_t i = 0; i < c.bus_count(); ++i) {
    const int id = c.buses()[i].id;
    double cap = 0.0;
    int units = 0;
    for (const auto& g : gens) {
      if (g.bus == id && g.in_service) {
        cap += g.p_max;
        ++units;
      }
    }
    for (auto& g : gens) {
      if (g.bus != id || !g.in_service) continue;
      g.p_g = cap > 0.0 ? sol.p_g[i] * g.p_max / cap : sol.p_g[i] / units;
      g.q_g = sol.q_g[i] / units;
      g.v_set = sol.v[i];
    }
  }
  return NetworkCase(c.base_mva(), c.buses(), gens, c.branches());
}

namespace {

SampleRecord run_sample(const NetworkCase& base, const Scenario& scenario, const LoadSample& load,
                        const CostConfig& costs, const DatasetOptions& opts) {
  SampleRecord rec;
  rec.load = load;
  const auto loaded = scale_loads(base, load.multipliers);
  const auto pre = solve_power_flow(loaded, std::nullopt, opts.pf);
  const auto post_case = apply_outage(loaded, scenario.outaged);
  if (pre.converged) rec.pf_post = solve_power_flow(post_case, pre, opts.pf);
  if (pre.converged && !rec.pf_post.converged) {
    auto retry = opts.pf;
    retry.damping = 0.5;
    retry.max_iter = std::max(retry.max_iter, 60);
    rec.pf_post = solve_power_flow(post_case, std::nullopt, retry);
  }
  if (!pre.converged || !rec.pf_post.converged) {
    rec.status = SampleStatus::pf_diverged;
    return rec;
  }
  rec.freq = frequency_proxy(pre.total_p_g(), rec.pf_post.total_p_g(), opts.beta, opts.f0);
  const auto problem = assemble_ols(post_case, costs, opts.ols);
  rec.ols = solve_ols(problem, opts.ipm, rec.pf_post);
  rec.status = rec.ols.status == OlsStatus::optimal ? SampleStatus::ok : SampleStatus::ols_failed;
  return rec;
}

}  // namespace

std::vector<SampleRecord> generate_dataset(const NetworkCase& base, const std::vector<Scenario>& scenarios,
                                           std::size_t per_scenario, std::uint64_t seed,
                                           const DatasetOptions& opts) {
  const CostConfig costs = opts.costs ? *opts.costs : CostConfig::defaults(base);
  // Fail early on a bad cost setup instead of per sample.
  (void)assemble_ols(base, costs, opts.ols);
  for (const auto& s : scenarios) {
    for (auto b : s.outaged) {
      if (b >= base.branch_count()) throw ConfigError("scenario " + s.id + " does not fit the case");
    }
  }

  std::vector<std::vector<LoadSample>> loads;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    loads.push_back(sample_loads(base, opts.load_lo, opts.load_hi, per_scenario, derive_seed(seed, "loads", s)));
  }

  std::vector<SampleRecord> out(scenarios.size() * per_scenario);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const auto k = next.fetch_add(1);
      if (k >= out.size()) return;
      const auto s = k / per_scenario;
      const auto j = k % per_scenario;
      try {
        out[k] = run_sample(base, scenarios[s], loads[s][j], costs, opts);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = out.size();
        return;
      }
      out[k].scenario = s;
      out[k].sample = j;
    }
  };
  const unsigned jobs = std::max(1u, opts.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

FailureTally tally(const std::vector<SampleRecord>& records) {
  FailureTally t;
  for (const auto& r : records) {
    switch (r.status) {
      case SampleStatus::ok: ++t.ok; break;
      case SampleStatus::pf_diverged: ++t.pf_diverged; break;
      case SampleStatus::ols_failed: ++t.ols_failed; break;
    }
  }
  return t;
}

std::string case_digest(const NetworkCase& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize_case(c))));
  return buf;
}

}  // namespace loadshed
