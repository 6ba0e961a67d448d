#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loadshed/ipm.hpp"
#include "loadshed/mlp.hpp"
#include "loadshed/powerflow.hpp"

namespace loadshed::cli {

/// Everything a pipeline run depends on. Loaded from an INI file, then
/// overridden by command-line flags.
struct RunConfig {
  std::string case_path;      // empty: the bundled IEEE 14-bus case
  double total_mw = 469.0;    // 0 keeps the case's own loading
  double load_lo = 0.95;
  double load_hi = 1.05;
  std::size_t per_scenario = 1000;
  std::size_t n2_count = 50;
  std::size_t n3_count = 50;
  bool single = true;    // train on N-1 scenarios
  bool multiple = true;  // train on sampled N-2 and N-3 scenarios
  std::uint64_t seed = 1;
  std::vector<int> buses{6, 9, 10, 11, 13, 14};
  unsigned jobs = 1;
  double beta = 10.0;
  double f0 = 60.0;
  double dominance = 100.0;
  bool fixed_power_factor = true;
  double occurrence_eps = 1e-3;
  PowerFlowOptions pf;
  IpmOptions ipm;
  TrainConfig train;
  std::string out_dir = "loadshed-out";

  /// Throws ConfigError naming the first out-of-range field.
  void validate() const;
};

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "LOADSHED_CONFIG";

/// Applies the keys of an INI file on top of `cfg`. Unknown sections or keys
/// are errors so that typos do not pass silently.
void apply_config_file(RunConfig& cfg, const std::string& path);

/// INI text reproducing every field of `cfg`.
std::string config_to_ini(const RunConfig& cfg);

std::vector<int> parse_int_list(const std::string& text);

}  // namespace loadshed::cli
