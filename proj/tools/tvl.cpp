// tvl: train networks with learnable layer step sizes and compare runs.
//
//   tvl train [options]            see `tvl train --help`
//   tvl compare DIR DIR... [--threshold 0.9]

#include <CLI11.hpp>
#include <fmt/format.h>

#include <string>
#include <vector>

#include "tvl/experiment.hpp"

namespace {

int usage() {
  fmt::print(stderr,
             "usage: tvl train [options]      (tvl train --help for the option list)\n"
             "       tvl compare DIR DIR... [--threshold ACC]\n");
  return 2;
}

int compare(const std::vector<std::string>& args) {
  CLI::App app{"Summarize finished runs", "tvl compare"};
  std::vector<std::string> dirs;
  double threshold = 0.9;
  app.add_option("dirs", dirs, "Run directories")->required();
  app.add_option("--threshold", threshold, "Accuracy for the iterations-to-threshold column");
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    const auto rows = tvl::compare_runs({dirs.begin(), dirs.end()}, threshold);
    fmt::print("{}", tvl::format_summary(rows, threshold));
    return 0;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return usage();
  const std::string cmd = argv[1];
  const std::vector<std::string> rest(argv + 2, argv + argc);
  if (cmd == "train") {
    try {
      return tvl::run_experiment(tvl::parse_config(rest));
    } catch (const tvl::HelpRequested& h) {
      fmt::print("{}", h.what());
      return 0;
    } catch (const tvl::UsageError& e) {
      fmt::print(stderr, "error: {}\n", e.what());
      return 2;
    }
  }
  if (cmd == "compare") return compare(rest);
  return usage();
}
