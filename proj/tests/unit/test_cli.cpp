#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "config.hpp"
#include "loadshed/error.hpp"
#include "loadshed/features.hpp"
#include "loadshed/mlp.hpp"

namespace loadshed::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  ::unsetenv(kConfigEnv);
  args.insert(args.begin(), "loadshed");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("loadshed_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Cli, HelpAndUsageErrors) {
  const auto help = invoke({"--help"});
  EXPECT_EQ(help.code, Exit::ok);
  EXPECT_NE((help.out + help.err).find("pipeline"), std::string::npos);
  EXPECT_EQ(invoke({"--no-such-flag"}).code, Exit::usage);
  EXPECT_EQ(invoke({"pf", "--bogus"}).code, Exit::usage);
  EXPECT_EQ(invoke({"predict"}).code, Exit::usage);
}

TEST(Cli, DataErrors) {
  EXPECT_EQ(invoke({"parse", "--case", "/nonexistent/case.m"}).code, Exit::data);
  EXPECT_EQ(invoke({"pf", "--outage", "1-99"}).code, Exit::data);
}

TEST(Cli, ParseAndSolve) {
  const auto parse = invoke({"parse"});
  EXPECT_EQ(parse.code, Exit::ok) << parse.err;
  EXPECT_NE(parse.out.find("14"), std::string::npos);

  const auto pf = invoke({"pf", "--total", "469"});
  EXPECT_EQ(pf.code, Exit::ok) << pf.err;

  const auto dir = scratch("ols");
  const auto json = (dir / "ols.json").string();
  const auto ols = invoke({"ols", "--total", "469", "--outage", "2-3,4-9", "--json", json});
  EXPECT_EQ(ols.code, Exit::ok) << ols.err;
  std::ifstream in(json);
  std::stringstream text;
  text << in.rdbuf();
  EXPECT_NE(text.str().find("optimal"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ScenarioListing) {
  const auto single = invoke({"scenarios", "--class", "single"});
  EXPECT_EQ(single.code, Exit::ok) << single.err;
  EXPECT_EQ(single.out.find("7-8\n"), std::string::npos);
  const auto d1 = invoke({"scenarios", "--class", "double", "--count", "5", "--seed", "3"});
  const auto d2 = invoke({"scenarios", "--class", "double", "--count", "5", "--seed", "3"});
  EXPECT_EQ(d1.code, Exit::ok);
  EXPECT_EQ(d1.out, d2.out);
}

TEST(Config, FileRoundTripAndErrors) {
  RunConfig cfg;
  cfg.total_mw = 400.0;
  cfg.buses = {9, 14};
  cfg.train.hidden = {7, 3};
  cfg.fixed_power_factor = false;
  cfg.occurrence_eps = 0.01;
  const auto dir = scratch("config");
  const auto path = (dir / "run.ini").string();
  std::ofstream(path) << config_to_ini(cfg);

  RunConfig back;
  apply_config_file(back, path);
  EXPECT_EQ(config_to_ini(back), config_to_ini(cfg));
  EXPECT_EQ(back.buses, cfg.buses);
  EXPECT_EQ(back.train.shed_eps, 0.01);

  std::ofstream(path) << "[run]\nsede = 3\n";
  RunConfig bad;
  EXPECT_THROW(apply_config_file(bad, path), ConfigError);
  std::ofstream(path) << "[train]\nbatch_size = -2\n";
  EXPECT_THROW(apply_config_file(bad, path), ConfigError);

  RunConfig invalid;
  invalid.load_lo = 1.2;
  EXPECT_THROW(invalid.validate(), ConfigError);
  EXPECT_EQ(parse_int_list(" 6, 9 ,14"), (std::vector<int>{6, 9, 14}));
  fs::remove_all(dir);
}

TEST(Cli, SmallPipelineAndPredict) {
  const auto dir = scratch("pipeline");
  const auto ini = (dir / "run.ini").string();
  std::ofstream(ini) << "[scenarios]\nper_scenario = 40\n";
  const auto out = (dir / "out").string();
  const auto r = invoke({"pipeline", "--config", ini, "--per-scenario", "3", "--buses", "14", "--classes",
                         "single", "--max-epochs", "5", "--out", out});
  ASSERT_EQ(r.code, Exit::ok) << r.err;
  const fs::path o(out);
  EXPECT_TRUE(fs::exists(o / "config.ini"));
  EXPECT_TRUE(fs::exists(o / "data" / "manifest.json"));
  EXPECT_TRUE(fs::exists(o / "models" / "bus14_single.json"));
  EXPECT_TRUE(fs::exists(o / "report" / "report.txt"));
  EXPECT_TRUE(fs::exists(o / "report" / "scatter_bus14_single.csv"));

  // Flags win over the file.
  const auto d = load_dataset((o / "data" / "bus14_single.csv").string());
  EXPECT_EQ(d.rows.size(), 19u * 3u);

  const auto model = (o / "models" / "bus14_single.json").string();
  const auto data = (o / "data" / "bus14_single.csv").string();
  const auto m = load_model(model);
  for (int row : {0, 10, 40}) {
    const auto p = invoke({"predict", "--model", model, "--dataset", data, "--row", std::to_string(row)});
    ASSERT_EQ(p.code, Exit::ok) << p.err;
    const double p_d = d.rows[std::size_t(row)].features[0] * m.base_mva;
    std::istringstream lines(p.out);
    std::string header, values;
    std::getline(lines, header);
    std::getline(lines, values);
    EXPECT_EQ(header, "p_s_mw,q_s_mvar");
    const double ps = std::stod(values.substr(0, values.find(',')));
    EXPECT_GE(ps, 0.0);
    EXPECT_LE(ps, p_d);
  }
  EXPECT_EQ(invoke({"predict", "--model", model, "--features", "1,2"}).code, Exit::data);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace loadshed::cli
