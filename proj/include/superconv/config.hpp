#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "superconv/estimator.hpp"
#include "superconv/nn.hpp"
#include "superconv/optim.hpp"
#include "superconv/range_test.hpp"
#include "superconv/schedules.hpp"

namespace superconv {

inline constexpr int kConfigVersion = 1;

struct DataConfig {
  std::string source = "blobs";  // "mnist" or "blobs"
  // mnist: directory holding the four IDX files. Empty means
  // $SUPERCONV_MNIST_DIR, then ./data/mnist.
  std::string dir;
  int train_per_class = 0;  // 0 keeps the full training set
  int test_per_class = 0;   // 0 keeps the full test set
  std::uint64_t subset_seed = 0;
  // blobs
  int n_classes = 3;
  int per_class = 200;
  int blob_test_per_class = 100;
  double spread = 0.1;
  std::uint64_t blob_seed = 0;
};

struct LayerConfig {
  LayerKind kind = LayerKind::dense;
  int units = 0;  // dense only
  double maf = 0.999;
  double ratio = 0.0;
};

struct EstimatorSettings {
  bool enabled = false;
  EstimatorConfig config;
};

// Arm-B overrides used by sweep-limited-data (the piecewise baseline).
struct BaselineOverrides {
  std::string name;
  std::optional<ScheduleParams> schedule;
  std::optional<MomentumParams> momentum;
  std::optional<OptimizerConfig> optimizer;
  std::optional<std::int64_t> epochs;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string name = "run";
  std::uint64_t seed = 0;
  DataConfig data;
  std::vector<LayerConfig> layers;
  LossHead head = LossHead::softmax_cross_entropy;
  OptimizerConfig optimizer;
  ScheduleParams schedule;  // total_iters and iters_per_epoch filled in at run time
  MomentumParams momentum;
  std::int64_t batch_size = 32;
  std::optional<std::int64_t> epochs;
  std::optional<std::int64_t> iterations;
  std::int64_t eval_every = 0;  // iterations; 0 = once per epoch
  bool final_train_eval = true;
  std::vector<double> thresholds{0.9, 0.95, 0.97, 0.98};
  EstimatorSettings estimator;
  RangeTestConfig range_test;
  PeakMode peak_mode = PeakMode::accuracy;
  std::optional<BaselineOverrides> baseline;
  std::vector<int> sweep_sizes;
  int trials = 3;
  std::string output_dir = "runs";
  // Start from these weights instead of a fresh initialization.
  std::optional<std::filesystem::path> init_checkpoint;
};

// Parses and validates a JSON config. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Returns `cfg` with the baseline overrides applied (arm B of a sweep).
ExperimentConfig apply_baseline(const ExperimentConfig& cfg);

// Output directory after applying $SUPERCONV_OUTPUT_DIR.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

}  // namespace superconv
