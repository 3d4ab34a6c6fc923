// superconv: command-line entry points for schedules, range tests,
// comparisons and learning-rate estimation runs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "superconv/config.hpp"
#include "superconv/error.hpp"
#include "superconv/harness.hpp"
#include "superconv/nn.hpp"

namespace fs = std::filesystem;
using namespace superconv;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::validation: return 2;
    case ErrorCategory::out_of_range: return 2;
    case ErrorCategory::dimension: return 3;
    case ErrorCategory::consistency: return 3;
    case ErrorCategory::format: return 3;
    case ErrorCategory::io: return 3;
    case ErrorCategory::divergence: return 4;
    case ErrorCategory::numeric: return 5;
    case ErrorCategory::insufficient_data: return 6;
  }
  return 1;
}

void report_error(std::string_view category, const std::string& message) {
  nlohmann::json j = {{"error", category}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

fs::path output_dir(const ExperimentConfig& cfg, const std::string& flag) {
  fs::path dir = flag.empty() ? resolve_output_dir(cfg) : fs::path(flag);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
}

int run_train(const std::string& config_path, const std::string& out_flag, bool with_estimator,
              const std::string& checkpoint) {
  ExperimentConfig cfg = load_config(config_path);
  if (with_estimator) cfg.estimator.enabled = true;
  const fs::path dir = output_dir(cfg, out_flag);
  Model trained(ModelSpec{{LayerSpec::dense(1, 2)}, LossHead::softmax_cross_entropy, 0});
  const TrainingLog log = train(cfg, load_data(cfg.data), checkpoint.empty() ? nullptr : &trained);

  std::ofstream csv(dir / (cfg.name + ".csv"), std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write CSV under '" + dir.string() + "'");
  write_log_csv(log, csv);
  const std::string summary = summary_json(log.summary);
  write_file(dir / (cfg.name + ".summary.json"), summary);
  std::cout << summary;
  if (!checkpoint.empty() && !log.summary.diverged) save_checkpoint(trained, checkpoint);
  if (log.summary.diverged) {
    report_error("divergence", "training diverged at iteration " +
                                   std::to_string(log.summary.diverged_at.value_or(-1)));
    return exit_code(ErrorCategory::divergence);
  }
  return 0;
}

int run_range(const std::string& config_path, const std::string& out_flag) {
  const ExperimentConfig cfg = load_config(config_path);
  const fs::path dir = output_dir(cfg, out_flag);
  const RangeTestReport report = range_test(cfg, load_data(cfg.data));
  std::ofstream csv(dir / (cfg.name + ".range.csv"), std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write CSV under '" + dir.string() + "'");
  write_range_test_csv(report, csv);
  const std::string bounds = bounds_json(report);
  write_file(dir / (cfg.name + ".bounds.json"), bounds);
  std::cout << bounds;
  return 0;
}

int run_compare(const std::string& path_a, const std::string& path_b, int trials, int jobs,
                const std::string& out_flag) {
  const ExperimentConfig a = load_config(path_a);
  const ExperimentConfig b = load_config(path_b);
  const fs::path dir = output_dir(a, out_flag);
  RunSinks sinks{dir, jobs};
  const CompareReport report = compare(a, b, trials > 0 ? trials : a.trials, load_data(a.data), sinks);
  const std::string text = compare_json(report);
  write_file(dir / ("compare." + a.name + ".vs." + b.name + ".json"), text);
  std::cout << text;
  return 0;
}

int run_sweep(const std::string& config_path, std::vector<int> sizes, int trials, int jobs,
              const std::string& out_flag) {
  const ExperimentConfig cfg = load_config(config_path);
  if (sizes.empty()) sizes = cfg.sweep_sizes;
  const fs::path dir = output_dir(cfg, out_flag);
  RunSinks sinks{dir, jobs};
  DataConfig full = cfg.data;
  full.train_per_class = 0;
  const SweepReport report =
      run_limited_data_sweep(cfg, sizes, trials > 0 ? trials : cfg.trials, load_data(full), sinks);
  const std::string text = sweep_json(report);
  write_file(dir / ("sweep." + cfg.name + ".json"), text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"superconv: cyclical learning-rate training toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string out_flag;
  app.add_option("-o,--output-dir", out_flag,
                 "Output directory (overrides $SUPERCONV_OUTPUT_DIR and the config)");

  std::string config;
  std::string config_b;
  std::string checkpoint;
  int trials = 0;
  int jobs = 1;
  std::vector<int> sizes;

  auto* train_cmd = app.add_subcommand("train", "Train one configuration and write its CSV log");
  train_cmd->add_option("config", config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--save-checkpoint", checkpoint, "Write the trained model here");

  auto* range_cmd = app.add_subcommand("range-test", "Run the LR range test and suggest CLR bounds");
  range_cmd->add_option("config", config, "Experiment config (JSON)")->required();

  auto* compare_cmd = app.add_subcommand("compare", "Compare two configurations over seeded trials");
  compare_cmd->add_option("config_a", config, "First config")->required();
  compare_cmd->add_option("config_b", config_b, "Second config")->required();
  compare_cmd->add_option("--trials", trials, "Trials per config (default: config 'trials')");
  compare_cmd->add_option("--jobs", jobs, "Trials to run concurrently");

  auto* sweep_cmd =
      app.add_subcommand("sweep-limited-data", "Compare a config with its baseline over data sizes");
  sweep_cmd->add_option("config", config, "Experiment config with a 'baseline' section")->required();
  sweep_cmd->add_option("--sizes", sizes, "Examples per class, descending");
  sweep_cmd->add_option("--trials", trials, "Trials per arm and size (default: config 'trials')");
  sweep_cmd->add_option("--jobs", jobs, "Trials to run concurrently");

  auto* estimate_cmd =
      app.add_subcommand("estimate-lr", "Train with the optimal-learning-rate estimator enabled");
  estimate_cmd->add_option("config", config, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(config, out_flag, false, checkpoint);
    if (*estimate_cmd) return run_train(config, out_flag, true, "");
    if (*range_cmd) return run_range(config, out_flag);
    if (*compare_cmd) return run_compare(config, config_b, trials, jobs, out_flag);
    if (*sweep_cmd) return run_sweep(config, sizes, trials, jobs, out_flag);
  } catch (const Error& e) {
    report_error(category_name(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 1;
}
