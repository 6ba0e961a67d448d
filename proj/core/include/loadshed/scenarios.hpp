#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loadshed/ipm.hpp"
#include "loadshed/netcase.hpp"
#include "loadshed/ols.hpp"
#include "loadshed/powerflow.hpp"

namespace loadshed {

enum class OutageClass { single = 1, double_line = 2, triple_line = 3 };

std::string_view to_string(OutageClass k);
OutageClass outage_class_from_string(std::string_view s);

/// A set of simultaneously outaged branches.
struct Scenario {
  std::string id;                     // branch labels joined by '+', e.g. "2-3+4-9"
  std::vector<std::size_t> outaged;   // ascending branch positions
  OutageClass klass = OutageClass::single;

  bool operator==(const Scenario&) const = default;
};

Scenario make_scenario(const NetworkCase& c, std::vector<std::size_t> branches);

/// Single outages of in-service branches that keep the grid connected.
std::vector<Scenario> enumerate_n1(const NetworkCase& c);

struct NkSample {
  std::vector<Scenario> scenarios;
  std::size_t valid = 0;   // connectivity-preserving subsets that exist
  bool shortfall = false;  // fewer valid subsets than requested
};

/// `count` distinct k-subsets (k = 2 or 3) drawn uniformly without replacement
/// from the connectivity-preserving ones, returned in ascending order.
NkSample sample_nk(const NetworkCase& c, int k, std::size_t count, std::uint64_t seed);

/// Per-bus demand multipliers.
struct LoadSample {
  std::vector<double> multipliers;

  bool operator==(const LoadSample&) const = default;
};

/// Independent uniform multipliers in [lo, hi] per bus. Throws ConfigError
/// unless 0 < lo <= hi.
std::vector<LoadSample> sample_loads(const NetworkCase& c, double lo, double hi, std::size_t count,
                                     std::uint64_t seed);

/// The network seen by one sample: loads scaled, then the outage applied.
NetworkCase sample_case(const NetworkCase& base, const Scenario& s, const LoadSample& load);

/// Pre-contingency operating point: generator outputs and voltage setpoints
/// taken from an intact OLS solve. Returns the case unchanged when that solve
/// does not reach optimality.
NetworkCase dispatch_operating_point(const NetworkCase& c, const CostConfig& costs,
                                     const OlsOptions& ols = {}, const IpmOptions& ipm = {});

enum class SampleStatus { ok, pf_diverged, ols_failed };

std::string_view to_string(SampleStatus s);
SampleStatus sample_status_from_string(std::string_view s);

struct SampleRecord {
  std::size_t scenario = 0;  // position in the scenario list
  std::size_t sample = 0;
  LoadSample load;
  SampleStatus status = SampleStatus::ok;
  PowerFlowSolution pf_post;
  FrequencyProxy freq;
  OlsSolution ols;
};

struct DatasetOptions {
  double load_lo = 0.95;
  double load_hi = 1.05;
  double beta = 10.0;  // pu / Hz
  double f0 = 60.0;
  PowerFlowOptions pf;
  IpmOptions ipm;
  OlsOptions ols;
  /// Shedding costs; derived from the base case when absent.
  std::optional<CostConfig> costs;
  /// Worker threads; output order does not depend on it.
  unsigned jobs = 1;
};

/// Runs every (scenario, load sample) pair: intact power flow for the
/// pre-contingency generation, outage power flow (one damped flat-start retry
/// on divergence), frequency proxy, and OLS warm-started from the outage
/// state. Records are scenario-major and never dropped.
std::vector<SampleRecord> generate_dataset(const NetworkCase& base, const std::vector<Scenario>& scenarios,
                                           std::size_t per_scenario, std::uint64_t seed,
                                           const DatasetOptions& opts = {});

struct FailureTally {
  std::size_t ok = 0;
  std::size_t pf_diverged = 0;
  std::size_t ols_failed = 0;
};

FailureTally tally(const std::vector<SampleRecord>& records);

/// FNV-1a digest of the canonical case text, as 16 hex digits.
std::string case_digest(const NetworkCase& c);

}  // namespace loadshed
