#include "tvl/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "tvl/checkpoint.hpp"

#ifndef TVL_DEFAULT_DATA_DIR
#define TVL_DEFAULT_DATA_DIR "data"
#endif

namespace tvl {
namespace {

const std::map<std::string, ArchKind> kArchNames = {{"resnet", ArchKind::ResNet},
                                                    {"fractional", ArchKind::Fractional}};
const std::map<std::string, Sampling> kSamplingNames = {{"random", Sampling::Random},
                                                        {"shuffle", Sampling::Shuffle}};

std::string sampling_name(Sampling s) { return s == Sampling::Random ? "random" : "shuffle"; }

std::string auto_label(const ExperimentSpec& spec) {
  return fmt::format("{}-{}-{}-{}", to_string(spec.train.arch), spec.dataset,
                     to_string(spec.train.reg.kind), spec.train.fixed_tau ? "fixed" : "trainable");
}

void validate_spec(const ExperimentSpec& spec) {
  const TrainConfig& c = spec.train;
  if (c.epochs == 0) throw UsageError("--epochs must be at least 1");
  if (c.batch_size == 0) throw UsageError("--batch must be at least 1");
  if (c.prune && c.arch == ArchKind::Fractional) {
    throw UsageError(
        "--prune cannot be combined with --arch fractional: a fractional layer with a vanishing "
        "step size still mixes in its history terms, so it is not redundant and is never pruned");
  }
  if (c.reg.final_tau_dependent() && c.depth < 3) {
    throw UsageError("--reg final-tau needs --depth of at least 3 (two step sizes)");
  }
  if (spec.dataset != "mnist" && spec.dataset != "fashion") {
    throw UsageError(fmt::format("unknown dataset '{}'", spec.dataset));
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(fmt::format("--seeds: '{}' is not an unsigned integer", item));
    }
  }
  if (out.empty()) throw UsageError("--seeds needs at least one value");
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

class CsvSink {
 public:
  explicit CsvSink(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error(fmt::format("cannot create {}", path.string()));
  }
  void line(const std::string& s) {
    out_ << s << '\n';
    if (!out_) throw std::runtime_error(fmt::format("write failed on {}", path_.string()));
  }
  void flush() { out_.flush(); }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(fmt::format("{} is empty", path.string()));
  header = split_csv(line);
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split_csv(line);
    if (row.size() != header.size()) {
      throw std::runtime_error(fmt::format("{}:{}: {} fields, header has {}", path.string(), lineno,
                                           row.size(), header.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double to_double(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(fmt::format("{}: '{}' is not a number", path.string(), s));
  }
}

std::size_t column(const std::vector<std::string>& header, const std::string& name,
                   const std::filesystem::path& path) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw std::runtime_error(fmt::format("{}: missing column '{}'", path.string(), name));
  }
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  return TVL_DEFAULT_DATA_DIR;
}

ExperimentSpec parse_config(const std::vector<std::string>& args) {
  ExperimentSpec spec;
  TrainConfig& c = spec.train;
  std::string arch = "resnet";
  std::string reg = "none";
  std::string sampling = "random";
  std::string seeds;
  std::string data_dir;
  std::string out;
  double alpha = 0.01;

  CLI::App app{"Train a network with learnable layer step sizes", "tvl train"};
  app.set_config("--config", "", "Read option values from a key = value file");
  app.allow_config_extras(false);
  app.add_option("--arch", arch, "Layer family")->check(CLI::IsMember({"resnet", "fractional"}));
  app.add_option("--dataset", spec.dataset, "Dataset")->check(CLI::IsMember({"mnist", "fashion"}));
  app.add_option("--reg", reg, "Step-size regularization")
      ->check(CLI::IsMember({"none", "l1", "horizon", "l1+horizon", "final-tau"}));
  app.add_flag("--fixed-tau", c.fixed_tau, "Freeze step sizes at their initial value T/(L-1)");
  app.add_flag("--prune", c.prune, "Adaptive layer pruning (ResNet only)");
  app.add_option("--epsilon", c.prune_epsilon, "Pruning threshold relative to sum |tau|");
  app.add_option("--alpha", alpha, "l1 penalty weight");
  app.add_option("--horizon", c.horizon, "Time horizon T");
  app.add_option("--gamma", c.gamma, "Fractional order in (0, 1]");
  app.add_option("--lr", c.learning_rate, "SGD learning rate");
  app.add_option("--batch", c.batch_size, "Mini-batch size");
  app.add_option("--epochs", c.epochs, "Epochs (iterations = epochs * N / batch)");
  app.add_option("--seed", c.seed, "Random seed");
  app.add_option("--seeds", seeds, "Comma-separated seeds; one run directory per seed");
  app.add_option("--depth", c.depth, "Network depth L");
  app.add_option("--width", c.hidden_width, "Hidden width");
  app.add_option("--data-dir", data_dir,
                 fmt::format("Dataset root holding mnist/ and fashion/ (env {})", kDataDirEnv));
  app.add_option("--out", out, "Output directory (default runs/<label>)");
  app.add_option("--label", spec.label, "Run label");
  app.add_option("--subset", spec.subset, "Use only the first N training samples");
  app.add_option("--eval-every", c.eval_interval, "Test evaluation interval (0 = each epoch)");
  app.add_option("--tau-every", c.tau_interval, "Step-size snapshot interval in iterations");
  app.add_option("--prune-every", c.prune_interval, "Pruning check interval (0 = each epoch)");
  app.add_option("--projection-floor", c.projection_floor,
                 "Lower bound for fractional step sizes");
  app.add_option("--sampling", sampling, "Mini-batch sampling")
      ->check(CLI::IsMember({"random", "shuffle"}));
  app.add_flag("--standardize", spec.standardize, "Standardize pixels instead of plain 1/255");
  app.add_flag("--quiet", spec.quiet, "No progress output");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  c.arch = kArchNames.at(arch);
  c.sampling = kSamplingNames.at(sampling);
  const auto kind = parse_regularization(reg);
  c.reg = RegularizationMode{kind, 0.0, c.horizon};
  if (c.reg.has_l1()) c.reg.alpha = alpha;
  if (!(alpha >= 0.0)) throw UsageError("--alpha must be >= 0");

  if (!seeds.empty()) {
    spec.seeds = parse_seed_list(seeds);
    c.seed = spec.seeds.front();
  }
  spec.data_dir = data_dir.empty() ? default_data_dir() : std::filesystem::path(data_dir);
  if (spec.label.empty()) spec.label = auto_label(spec);
  spec.out_dir = out.empty() ? std::filesystem::path("runs") / spec.label
                             : std::filesystem::path(out);
  validate_spec(spec);
  return spec;
}

std::string resolved_config(const ExperimentSpec& spec) {
  const TrainConfig& c = spec.train;
  std::string s;
  auto kv = [&](const char* key, const auto& value) { s += fmt::format("{} = {}\n", key, value); };
  auto str = [&](const char* key, const std::string& value) {
    s += fmt::format("{} = \"{}\"\n", key, value);
  };
  str("arch", std::string(to_string(c.arch)));
  str("dataset", spec.dataset);
  str("reg", to_string(c.reg.kind));
  kv("fixed-tau", c.fixed_tau);
  kv("prune", c.prune);
  kv("epsilon", c.prune_epsilon);
  kv("alpha", c.reg.has_l1() ? c.reg.alpha : 0.01);
  kv("horizon", c.horizon);
  kv("gamma", c.gamma);
  kv("lr", c.learning_rate);
  kv("batch", c.batch_size);
  kv("epochs", c.epochs);
  kv("seed", c.seed);
  kv("depth", c.depth);
  kv("width", c.hidden_width);
  str("data-dir", spec.data_dir.string());
  str("out", spec.out_dir.string());
  str("label", spec.label);
  kv("subset", spec.subset);
  kv("eval-every", c.eval_interval);
  kv("tau-every", c.tau_interval);
  kv("prune-every", c.prune_interval);
  kv("projection-floor", c.projection_floor);
  str("sampling", sampling_name(c.sampling));
  kv("standardize", spec.standardize);
  return s;
}

TrainResult run_single(const ExperimentSpec& spec, const Dataset& train, const Dataset& test,
                       const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  ExperimentSpec resolved = spec;
  resolved.seeds.clear();
  resolved.out_dir = out_dir;
  write_text(out_dir / "spec.resolved", resolved_config(resolved));

  const std::size_t steps = spec.train.depth - 1;
  CsvSink metrics(out_dir / "metrics.csv");
  CsvSink tau(out_dir / "tau.csv");
  CsvSink timing(out_dir / "timing.csv");
  CsvSink prunes(out_dir / "prunes.csv");
  metrics.line(
      "iteration,epoch,train_loss_total,train_loss_data,penalty,test_accuracy,active_layers,"
      "train_accuracy");
  std::string tau_header = "iteration";
  for (std::size_t k = 0; k < steps; ++k) tau_header += fmt::format(",tau{}", k);
  tau.line(tau_header);
  timing.line("iteration,wall_time_ms");
  prunes.line("iteration,removed_tau_ids,depth_after");

  TrainObserver obs;
  obs.on_metrics = [&](const MetricsRecord& r) {
    metrics.line(fmt::format("{},{},{},{},{},{},{},{}", r.iteration, r.epoch, r.train_loss.total,
                             r.train_loss.data_loss, r.train_loss.penalty, r.test_accuracy,
                             r.active_layers, r.train_accuracy));
    timing.line(fmt::format("{},{:.3f}", r.iteration, r.wall_time_ms));
    if (!spec.quiet) {
      double sum = 0.0;
      for (double t : r.tau_snapshot) sum += t;
      fmt::print(stderr, "[{}] it {:>7} epoch {:>4}  loss {:.5f}  test acc {:.4f}  L {}  sum tau {:.4f}\n",
                 spec.label, r.iteration, r.epoch, r.train_loss.total, r.test_accuracy,
                 r.active_layers, sum);
    }
  };
  obs.on_tau = [&](const TauRecord& r) {
    std::vector<std::string> cells(steps);
    for (std::size_t k = 0; k < r.tau.size(); ++k) cells[r.tau_ids[k]] = fmt::format("{}", r.tau[k]);
    std::string row = std::to_string(r.iteration);
    for (const auto& cell : cells) row += "," + cell;
    tau.line(row);
  };
  obs.on_prune = [&](const PruneEvent& e) {
    std::string ids;
    for (std::size_t i = 0; i < e.removed_ids.size(); ++i)
      ids += fmt::format("{}{}", i ? " " : "", e.removed_ids[i]);
    prunes.line(fmt::format("{},{},{}", e.iteration, ids, e.depth_after));
    if (!spec.quiet) {
      fmt::print(stderr, "[{}] it {:>7} pruned tau ids {{{}}}, depth now {}\n", spec.label,
                 e.iteration, ids, e.depth_after);
    }
  };

  TrainResult result = run_training(spec.train, train, test, obs);
  save_checkpoint(result.params, out_dir / "checkpoint.bin");
  return result;
}

int run_experiment(const ExperimentSpec& spec) {
  try {
    const auto dir = spec.data_dir / spec.dataset;
    Dataset train = load_dataset(dir, Split::Train, spec.dataset + "-train");
    Dataset test = load_dataset(dir, Split::Test, spec.dataset + "-test");
    if (spec.subset) train = head(train, spec.subset);
    if (spec.standardize) standardize(train, test);

    if (spec.seeds.size() <= 1) {
      run_single(spec, train, test, spec.out_dir);
      return 0;
    }
    for (std::uint64_t seed : spec.seeds) {
      ExperimentSpec one = spec;
      one.train.seed = seed;
      one.label = fmt::format("{}-seed{}", spec.label, seed);
      run_single(one, train, test, spec.out_dir / fmt::format("seed-{}", seed));
    }
    return 0;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}

std::vector<RunSummary> compare_runs(const std::vector<std::filesystem::path>& run_dirs,
                                     double threshold) {
  if (run_dirs.size() < 2) throw UsageError("compare needs at least two run directories");
  std::vector<RunSummary> out;
  for (const auto& dir : run_dirs) {
    RunSummary row;
    row.run = dir.string();

    const auto mpath = dir / "metrics.csv";
    std::vector<std::string> header;
    const auto rows = read_csv(mpath, header);
    if (rows.empty()) throw std::runtime_error(fmt::format("{} has no data rows", mpath.string()));
    const auto it_col = column(header, "iteration", mpath);
    const auto acc_col = column(header, "test_accuracy", mpath);
    const auto layers_col = column(header, "active_layers", mpath);
    for (const auto& r : rows) {
      const double acc = to_double(r[acc_col], mpath);
      row.best_accuracy = std::max(row.best_accuracy, acc);
      if (!row.iterations_to_threshold && acc >= threshold) {
        row.iterations_to_threshold = static_cast<std::size_t>(to_double(r[it_col], mpath));
      }
    }
    row.final_accuracy = to_double(rows.back()[acc_col], mpath);
    row.final_layers = static_cast<std::size_t>(to_double(rows.back()[layers_col], mpath));

    const auto tpath = dir / "tau.csv";
    const auto taus = read_csv(tpath, header);
    if (taus.empty()) throw std::runtime_error(fmt::format("{} has no data rows", tpath.string()));
    for (std::size_t k = 1; k < taus.back().size(); ++k) {
      if (!taus.back()[k].empty()) row.final_tau_sum += to_double(taus.back()[k], tpath);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_summary(const std::vector<RunSummary>& rows, double threshold) {
  std::size_t width = 3;
  for (const auto& r : rows) width = std::max(width, r.run.size());
  std::string s = fmt::format("{:<{}}  {:>9}  {:>9}  {:>12}  {:>9}  {:>6}\n", "run", width,
                              "final_acc", "best_acc", fmt::format("it_to_{:g}", threshold),
                              "sum_tau", "layers");
  for (const auto& r : rows) {
    s += fmt::format("{:<{}}  {:>9.4f}  {:>9.4f}  {:>12}  {:>9.4f}  {:>6}\n", r.run, width,
                     r.final_accuracy, r.best_accuracy,
                     r.iterations_to_threshold ? std::to_string(*r.iterations_to_threshold) : "-",
                     r.final_tau_sum, r.final_layers);
  }
  return s;
}

}  // namespace tvl
