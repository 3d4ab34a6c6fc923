#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "superconv/config.hpp"
#include "superconv/data.hpp"
#include "superconv/nn.hpp"
#include "superconv/range_test.hpp"

namespace superconv {

struct DataBundle {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> test;
};

// Resolves the configured source into train/test sets (subsetting applied).
DataBundle load_data(const DataConfig& cfg);

// One CSV row. Iterations 0..T-1 are update steps: lr and momentum are the
// values applied at that step, train loss/accuracy describe its mini-batch.
// Test metrics, when present, are measured on the parameters *before* that
// step. The closing row has iteration T, no lr/momentum, and the final
// evaluation.
struct LogRecord {
  std::int64_t iteration = 0;
  std::int64_t epoch = 0;
  std::optional<double> lr;
  std::optional<double> momentum;
  std::optional<double> train_loss;
  std::optional<double> train_accuracy;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
  std::optional<double> lr_estimate_raw;
  std::optional<double> lr_estimate_smoothed;
};

struct ThresholdHit {
  double threshold = 0.0;
  std::optional<std::int64_t> iteration;
};

struct TrainingSummary {
  std::string name;
  std::string data_provenance;
  std::uint64_t seed = 0;
  std::int64_t total_iters = 0;
  std::int64_t iters_per_epoch = 0;
  std::optional<double> final_test_accuracy;
  std::optional<double> final_test_loss;
  std::optional<double> best_test_accuracy;
  std::optional<double> final_train_accuracy;  // eval mode on the full training set
  std::optional<double> generalization_gap;    // train - test accuracy
  std::vector<ThresholdHit> iterations_to_threshold;
  std::optional<double> noise_scale_at_peak;   // lr N / (B (1 - m)) at the max-lr step
  bool diverged = false;
  std::optional<std::int64_t> diverged_at;
  double wall_seconds = 0.0;
};

struct TrainingLog {
  std::vector<LogRecord> records;
  TrainingSummary summary;
};

// Seeded mini-batch training run. A non-finite or exploding (> 1e6) loss
// aborts the run; the partial log is returned with summary.diverged set.
// When `trained` is given, the final model is copied into it.
TrainingLog train(const ExperimentConfig& cfg, const DataBundle& data, Model* trained = nullptr);
TrainingLog train(const ExperimentConfig& cfg);

struct TrialResult {
  std::uint64_t seed = 0;
  bool diverged = false;
  std::optional<double> final_accuracy;
  std::optional<double> best_accuracy;
  std::vector<ThresholdHit> iterations_to_threshold;
};

struct ArmStats {
  std::string name;
  std::vector<TrialResult> trials;
  std::size_t valid_trials = 0;
  std::optional<double> mean_accuracy;
  std::optional<double> stddev_accuracy;  // absent with fewer than two valid trials
  // Mean iterations to each threshold over the valid trials that reached it.
  std::vector<ThresholdHit> mean_iterations_to_threshold;
};

struct CompareReport {
  ArmStats a;
  ArmStats b;
  std::optional<double> gap;  // mean_a - mean_b
};

struct RunSinks {
  // When set, each trial's CSV and summary are written here.
  std::optional<std::filesystem::path> output_dir;
  int jobs = 1;  // trials run concurrently when > 1
};

// Each config runs `trials` times with seeds seed + trial_index.
CompareReport compare(const ExperimentConfig& cfg_a, const ExperimentConfig& cfg_b, int trials,
                      const DataBundle& data, const RunSinks& sinks = {});

struct SweepEntry {
  int per_class = 0;
  CompareReport report;
};

struct SweepReport {
  std::vector<SweepEntry> entries;
  std::vector<std::optional<double>> gaps;  // aligned with entries
  bool gaps_non_decreasing = false;         // as data shrinks
  bool smallest_beats_largest = false;      // gap(last) > gap(first)
};

// For each per-class size (descending) compares `base` against
// apply_baseline(base) on a balanced subset of `full.train` drawn with
// base.data.subset_seed; every size is scored on `full.test`.
SweepReport run_limited_data_sweep(const ExperimentConfig& base, const std::vector<int>& sizes,
                                   int trials, const DataBundle& full, const RunSinks& sinks = {});

// Runs the configured range test on a fresh model built from `cfg`.
RangeTestReport range_test(const ExperimentConfig& cfg, const DataBundle& data);

void write_log_csv(const TrainingLog& log, std::ostream& out);
std::string summary_json(const TrainingSummary& summary);
std::string compare_json(const CompareReport& report);
std::string sweep_json(const SweepReport& report);
std::string bounds_json(const RangeTestReport& report);

ModelSpec build_model_spec(const ExperimentConfig& cfg, int input_dim, int n_classes);

}  // namespace superconv
