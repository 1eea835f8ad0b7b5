#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvl/trainer.hpp"

namespace tvl {

/// Bad command line or configuration file.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// --help was given; what() holds the usage text.
class HelpRequested : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kDataDirEnv = "TVL_DATA_DIR";

struct ExperimentSpec {
  TrainConfig train;
  std::string dataset = "mnist";  // mnist | fashion
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::string label;
  std::size_t subset = 0;  // 0 = full training set
  bool standardize = false;
  bool quiet = false;
  std::vector<std::uint64_t> seeds;  // more than one: sibling run directories
};

/// Parses `train` flags (program name and subcommand excluded). Precedence:
/// flags, then values from --config FILE, then the built-in defaults.
ExperimentSpec parse_config(const std::vector<std::string>& args);

/// Every effective setting as `key = value` lines that parse_config accepts
/// back through --config.
std::string resolved_config(const ExperimentSpec& spec);

std::filesystem::path default_data_dir();

/// Loads the datasets, trains, and writes metrics.csv, tau.csv, timing.csv,
/// prunes.csv, checkpoint.bin and spec.resolved under out_dir (one
/// seed-<s> subdirectory per seed when several are given). Returns 0 on
/// success; failures are reported on stderr with a nonzero status.
int run_experiment(const ExperimentSpec& spec);

/// Same as run_experiment for one seed, with datasets supplied by the caller.
TrainResult run_single(const ExperimentSpec& spec, const Dataset& train, const Dataset& test,
                       const std::filesystem::path& out_dir);

struct RunSummary {
  std::string run;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  std::optional<std::size_t> iterations_to_threshold;
  double final_tau_sum = 0.0;
  std::size_t final_layers = 0;
};

/// Reads metrics.csv and tau.csv from each directory. Needs at least two.
std::vector<RunSummary> compare_runs(const std::vector<std::filesystem::path>& run_dirs,
                                     double threshold);
std::string format_summary(const std::vector<RunSummary>& rows, double threshold);

}  // namespace tvl
