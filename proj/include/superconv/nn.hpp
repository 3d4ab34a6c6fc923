#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "superconv/optim.hpp"

namespace superconv {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

enum class LayerKind { dense, relu, batchnorm, dropout };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int in = 0;          // dense input width; feature width for the other kinds
  int out = 0;         // dense output width
  double maf = 0.999;  // batchnorm moving_average_fraction
  double ratio = 0.0;  // dropout probability

  static LayerSpec dense(int in, int out) { return {LayerKind::dense, in, out, 0.999, 0.0}; }
  static LayerSpec relu(int dim) { return {LayerKind::relu, dim, dim, 0.999, 0.0}; }
  static LayerSpec batchnorm(int dim, double maf) { return {LayerKind::batchnorm, dim, dim, maf, 0.0}; }
  static LayerSpec dropout(int dim, double ratio) { return {LayerKind::dropout, dim, dim, 0.999, ratio}; }
};

std::string_view to_string(LayerKind kind);

enum class LossHead { softmax_cross_entropy, squared_error };

struct ModelSpec {
  std::vector<LayerSpec> layers;
  LossHead head = LossHead::softmax_cross_entropy;
  std::uint64_t seed = 0;

  void validate() const;
  int input_dim() const;
  int output_dim() const;
};

// Non-owning view of a mini-batch. `targets` is only read by the
// squared-error head; when empty the one-hot encoding of `labels` is used.
struct BatchView {
  Eigen::Ref<const Matrix> inputs;
  std::span<const int> labels;
  const Matrix* targets = nullptr;
};

enum class Mode { train, eval };

struct ForwardOptions {
  // Train mode only: fold batch statistics into the running averages.
  bool update_running_stats = true;
  // Replay these dropout masks (one per dropout layer, in order) instead of
  // drawing new ones.
  const std::vector<Matrix>* dropout_masks = nullptr;
};

struct LayerCache {
  Matrix input;     // dense: layer input; relu: pre-activation
  Matrix xhat;      // batchnorm: normalized input
  RowVector batch_mean;  // batchnorm: statistics used for normalization
  RowVector batch_var;
  RowVector inv_std;
  Matrix mask;      // dropout: scaled keep mask
};

struct ForwardTrace {
  Mode mode = Mode::train;
  std::size_t layer_count = 0;
  Eigen::Index param_count = 0;
  std::vector<LayerCache> caches;
  Matrix output;  // logits (or regression outputs)
  Matrix probs;   // softmax head only
  std::vector<int> labels;
  Matrix targets;
  double loss = 0.0;
  std::vector<int> predictions;

  std::vector<Matrix> dropout_masks() const;
};

// Dense network with hand-written reverse mode.
//
// Parameters live in one flat vector, laid out layer by layer: a dense
// layer contributes its weight matrix (out x in, row-major) followed by its
// bias (out); a batchnorm layer contributes its scale (dim) then its shift
// (dim). ReLU and dropout layers own no parameters. Gradients use the same
// layout.
class Model {
 public:
  explicit Model(ModelSpec spec);

  // Train mode consumes randomness (dropout) and, unless disabled, updates
  // batchnorm running statistics.
  ForwardTrace forward(const BatchView& batch, Mode mode, const ForwardOptions& options = {});
  ForwardTrace infer(const BatchView& batch) const;

  Vector backward(const ForwardTrace& trace) const;

  const ModelSpec& spec() const { return spec_; }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }
  void set_params(const Vector& params);
  Eigen::Index param_count() const { return params_.size(); }

  // Running statistics, one entry per batchnorm layer in order.
  const std::vector<RowVector>& running_means() const { return running_mean_; }
  const std::vector<RowVector>& running_vars() const { return running_var_; }
  void set_running_stats(std::vector<RowVector> means, std::vector<RowVector> vars);

  static constexpr double kBatchNormEps = 1e-5;

 private:
  ForwardTrace run(const BatchView& batch, Mode mode, const ForwardOptions& options,
                   std::mt19937_64* rng) const;
  void init_params();

  ModelSpec spec_;
  Vector params_;
  std::vector<Eigen::Index> offsets_;  // parameter offset per layer
  std::vector<int> bn_index_;          // batchnorm slot per layer, -1 otherwise
  std::vector<RowVector> running_mean_;
  std::vector<RowVector> running_var_;
  std::mt19937_64 dropout_rng_;
};

// Row-wise numerically stable softmax.
Matrix softmax(const Matrix& logits);

struct GradCheckOptions {
  // Models with more parameters are checked on a seeded random sample of
  // this many coordinates.
  Eigen::Index max_coords = 400;
  std::uint64_t sample_seed = 0;
  // Gradients smaller than this in magnitude are compared on an absolute
  // scale (see relative_error).
  double abs_floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index coords_checked = 0;
  Eigen::Index worst_coord = -1;
};

// Compares backward() against central differences. Train-mode behaviour is
// pinned for the comparison: dropout masks are drawn once and replayed, and
// running statistics are left untouched, so both sides differentiate the
// same function of the parameters.
GradCheckResult grad_check(const Model& model, const BatchView& batch, double h,
                           const GradCheckOptions& options = {});

// Relative error used by grad_check: |a - n| / max(|a|, |n|, floor), with 0
// when both sides vanish.
double relative_error(double analytic, double numeric, double floor = 0.0);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace superconv
