#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlstop/controlstop.hpp"
#include "nlstop/gexp.hpp"
#include "nlstop/lattice.hpp"
#include "nlstop/snell.hpp"

namespace nlstop::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kSchemaError = 2,
  kStabilityError = 3,
  kBudgetError = 4,
};

struct ModelConfig {
  std::string kind = "lattice";
  int n_steps = 0;
  double dt = 0.0;
  double x0 = 0.0;
  std::size_t branching = 2;
  std::vector<double> probabilities;
  int max_depth = kDefaultMaxDepth;
};

/// Parsed configuration. Sections that need a model to be interpreted
/// (generators, reward, control) are kept as JSON and built on demand.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  ModelConfig model;
  nlohmann::json generators = nlohmann::json::array();
  nlohmann::json reward;
  nlohmann::json control;
  nlohmann::json verify = nlohmann::json::object();
  nlohmann::json converge = nlohmann::json::object();
  std::string format = "csv";
  std::string out_path;
  nlohmann::json raw;
};

/// Throws ConfigError with a line/column for syntax errors and a field path
/// for schema errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

ModelPtr build_model(const ModelConfig& config);
std::vector<Generator> build_generators(const RunConfig& config);
RewardSpec build_reward(const RunConfig& config, const ModelPtr& model, std::size_t n_generators);
ControlledSpec build_control_spec(const RunConfig& config);

/// Runs one command and writes its artifacts; returns the process exit code.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Entry point shared by the executable and the tests:
/// nlstop <snell|robust|control|verify|converge|run> --config P [--out P]
///        [--format csv|json] [--seed N]
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nlstop::cli
