#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "config.hpp"
#include "loadshed/netcase.hpp"
#include "loadshed/scenarios.hpp"

namespace loadshed::cli {

/// Exit codes.
enum Exit : int { ok = 0, usage = 1, data = 2, solver = 3 };

/// Runs the command line; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// The case a run works on: loaded (or bundled) and scaled to total_mw.
NetworkCase stressed_case(const RunConfig& cfg);

/// Seed of the model for one (bus, outage class).
std::uint64_t training_seed(std::uint64_t seed, int bus, const std::string& outage_class);

/// Dataset generation, training and evaluation into cfg.out_dir.
void run_pipeline(const RunConfig& cfg, std::ostream& log);
void generate_datasets(const RunConfig& cfg, std::ostream& log);
void train_models(const RunConfig& cfg, const std::string& data_dir, const std::string& model_dir, std::ostream& log);
void evaluate_models(const RunConfig& cfg, const std::string& data_dir, const std::string& model_dir,
                     const std::string& report_dir, std::ostream& log);

}  // namespace loadshed::cli
