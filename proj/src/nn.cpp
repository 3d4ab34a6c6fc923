#include "superconv/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "superconv/error.hpp"

namespace superconv {

namespace {

constexpr std::uint64_t kDropoutStreamSalt = 0x9e3779b97f4a7c15ULL;

void check_finite(const Matrix& m, std::size_t layer) {
  if (!m.allFinite()) {
    throw NumericError("forward: non-finite activations at layer " + std::to_string(layer));
  }
}

Matrix one_hot(std::span<const int> labels, int classes) {
  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return t;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::dropout: return "dropout";
  }
  return "unknown";
}

void ModelSpec::validate() const {
  SUPERCONV_CHECK(!layers.empty(), ValidationError, "model: no layers");
  int width = layers.front().in;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "model: layer " + std::to_string(i) + " (" +
                              std::string(to_string(l.kind)) + ")";
    SUPERCONV_CHECK(l.in >= 1 && l.out >= 1, ValidationError, where + " has non-positive width");
    SUPERCONV_CHECK(l.in == width, ValidationError,
                    where + " expects width " + std::to_string(l.in) + " but receives " +
                        std::to_string(width));
    if (l.kind != LayerKind::dense) {
      SUPERCONV_CHECK(l.out == l.in, ValidationError, where + " must preserve width");
    }
    if (l.kind == LayerKind::batchnorm) {
      SUPERCONV_CHECK(l.maf > 0 && l.maf < 1, ValidationError, where + ": maf must lie in (0,1)");
    }
    if (l.kind == LayerKind::dropout) {
      SUPERCONV_CHECK(l.ratio >= 0 && l.ratio < 1, ValidationError,
                      where + ": ratio must lie in [0,1)");
    }
    width = l.out;
  }
  if (head == LossHead::softmax_cross_entropy) {
    SUPERCONV_CHECK(width >= 2, ValidationError, "model: softmax head needs at least 2 outputs");
  }
}

int ModelSpec::input_dim() const { return layers.empty() ? 0 : layers.front().in; }
int ModelSpec::output_dim() const { return layers.empty() ? 0 : layers.back().out; }

std::vector<Matrix> ForwardTrace::dropout_masks() const {
  std::vector<Matrix> masks;
  for (const auto& c : caches) {
    if (c.mask.size() > 0) masks.push_back(c.mask);
  }
  return masks;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)), dropout_rng_(spec_.seed ^ kDropoutStreamSalt) {
  spec_.validate();
  Eigen::Index offset = 0;
  for (const auto& l : spec_.layers) {
    offsets_.push_back(offset);
    if (l.kind == LayerKind::dense) {
      offset += static_cast<Eigen::Index>(l.in) * l.out + l.out;
      bn_index_.push_back(-1);
    } else if (l.kind == LayerKind::batchnorm) {
      offset += 2 * static_cast<Eigen::Index>(l.in);
      bn_index_.push_back(static_cast<int>(running_mean_.size()));
      running_mean_.push_back(RowVector::Zero(l.in));
      running_var_.push_back(RowVector::Ones(l.in));
    } else {
      bn_index_.push_back(-1);
    }
  }
  params_ = Vector::Zero(offset);
  init_params();
}

// Uniform He-style fan-in scaling for dense weights, zero biases, unit
// batchnorm scale and zero shift.
void Model::init_params() {
  std::mt19937_64 rng(spec_.seed);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const Eigen::Index off = offsets_[i];
    if (l.kind == LayerKind::dense) {
      const double limit = std::sqrt(6.0 / l.in);
      std::uniform_real_distribution<double> dist(-limit, limit);
      const Eigen::Index nw = static_cast<Eigen::Index>(l.in) * l.out;
      for (Eigen::Index k = 0; k < nw; ++k) params_[off + k] = dist(rng);
    } else if (l.kind == LayerKind::batchnorm) {
      params_.segment(off, l.in).setOnes();
    }
  }
}

void Model::set_params(const Vector& params) {
  if (params.size() != params_.size()) {
    throw DimensionError("set_params: expected " + std::to_string(params_.size()) +
                         " values, got " + std::to_string(params.size()));
  }
  params_ = params;
}

void Model::set_running_stats(std::vector<RowVector> means, std::vector<RowVector> vars) {
  if (means.size() != running_mean_.size() || vars.size() != running_var_.size()) {
    throw DimensionError("set_running_stats: batchnorm layer count mismatch");
  }
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (means[i].size() != running_mean_[i].size() || vars[i].size() != running_var_[i].size()) {
      throw DimensionError("set_running_stats: width mismatch at batchnorm " + std::to_string(i));
    }
  }
  running_mean_ = std::move(means);
  running_var_ = std::move(vars);
}

ForwardTrace Model::forward(const BatchView& batch, Mode mode, const ForwardOptions& options) {
  ForwardTrace trace = run(batch, mode, options, &dropout_rng_);
  if (mode == Mode::train && options.update_running_stats) {
    const auto rows = batch.inputs.rows();
    const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const int slot = bn_index_[i];
      if (slot < 0) continue;
      const double maf = spec_.layers[i].maf;
      const auto& cache = trace.caches[i];
      running_mean_[slot] = maf * running_mean_[slot] + (1.0 - maf) * cache.batch_mean;
      running_var_[slot] = maf * running_var_[slot] + (1.0 - maf) * (unbias * cache.batch_var);
    }
  }
  return trace;
}

ForwardTrace Model::infer(const BatchView& batch) const {
  return run(batch, Mode::eval, {}, nullptr);
}

ForwardTrace Model::run(const BatchView& batch, Mode mode, const ForwardOptions& options,
                        std::mt19937_64* rng) const {
  const Eigen::Index rows = batch.inputs.rows();
  if (batch.inputs.cols() != spec_.input_dim()) {
    throw DimensionError("forward: input width " + std::to_string(batch.inputs.cols()) +
                         " does not match model input " + std::to_string(spec_.input_dim()));
  }
  if (static_cast<Eigen::Index>(batch.labels.size()) != rows) {
    throw DimensionError("forward: " + std::to_string(rows) + " rows but " +
                         std::to_string(batch.labels.size()) + " labels");
  }
  SUPERCONV_CHECK(rows >= 1, DimensionError, "forward: empty batch");
  const int classes = spec_.output_dim();
  for (int y : batch.labels) {
    if (y < 0 || y >= classes) {
      throw DimensionError("forward: label " + std::to_string(y) + " outside [0, " +
                           std::to_string(classes) + ")");
    }
  }

  ForwardTrace trace;
  trace.mode = mode;
  trace.layer_count = spec_.layers.size();
  trace.param_count = params_.size();
  trace.caches.resize(spec_.layers.size());
  trace.labels.assign(batch.labels.begin(), batch.labels.end());

  std::size_t mask_slot = 0;
  Matrix x = batch.inputs;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    auto& cache = trace.caches[i];
    const Eigen::Index off = offsets_[i];
    switch (l.kind) {
      case LayerKind::dense: {
        Eigen::Map<const Matrix> w(params_.data() + off, l.out, l.in);
        Eigen::Map<const RowVector> b(params_.data() + off + static_cast<Eigen::Index>(l.in) * l.out,
                                      l.out);
        Matrix y = x * w.transpose();
        y.rowwise() += b;
        cache.input = std::move(x);
        x = std::move(y);
        break;
      }
      case LayerKind::relu: {
        Matrix y = x.cwiseMax(0.0);
        cache.input = std::move(x);
        x = std::move(y);
        break;
      }
      case LayerKind::batchnorm: {
        Eigen::Map<const RowVector> gamma(params_.data() + off, l.in);
        Eigen::Map<const RowVector> beta(params_.data() + off + l.in, l.in);
        const int slot = bn_index_[i];
        if (mode == Mode::train) {
          cache.batch_mean = x.colwise().mean();
          cache.batch_var =
              (x.rowwise() - cache.batch_mean).array().square().colwise().mean().matrix();
        } else {
          cache.batch_mean = running_mean_[slot];
          cache.batch_var = running_var_[slot];
        }
        cache.inv_std = (cache.batch_var.array() + kBatchNormEps).rsqrt().matrix();
        cache.xhat =
            ((x.rowwise() - cache.batch_mean).array().rowwise() * cache.inv_std.array()).matrix();
        Matrix y = (cache.xhat.array().rowwise() * gamma.array()).matrix();
        y.rowwise() += beta;
        x = std::move(y);
        break;
      }
      case LayerKind::dropout: {
        if (mode == Mode::eval || l.ratio == 0.0) break;
        if (options.dropout_masks != nullptr) {
          if (mask_slot >= options.dropout_masks->size()) {
            throw ConsistencyError("forward: not enough replay masks for dropout layers");
          }
          cache.mask = (*options.dropout_masks)[mask_slot];
          if (cache.mask.rows() != x.rows() || cache.mask.cols() != x.cols()) {
            throw DimensionError("forward: replay mask shape mismatch at layer " + std::to_string(i));
          }
        } else {
          if (rng == nullptr) throw ConsistencyError("forward: dropout needs a random stream");
          std::bernoulli_distribution keep(1.0 - l.ratio);
          const double scale = 1.0 / (1.0 - l.ratio);
          cache.mask.resize(x.rows(), x.cols());
          for (Eigen::Index k = 0; k < cache.mask.size(); ++k) {
            cache.mask.data()[k] = keep(*rng) ? scale : 0.0;
          }
        }
        ++mask_slot;
        x = x.cwiseProduct(cache.mask);
        break;
      }
    }
    check_finite(x, i);
  }

  trace.predictions.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    Eigen::Index arg = 0;
    x.row(r).maxCoeff(&arg);
    trace.predictions[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }

  if (spec_.head == LossHead::softmax_cross_entropy) {
    trace.probs = softmax(x);
    // log p_y computed from logits to avoid log(0).
    double total = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double m = x.row(r).maxCoeff();
      const double lse = m + std::log((x.row(r).array() - m).exp().sum());
      total += lse - x(r, batch.labels[static_cast<std::size_t>(r)]);
    }
    trace.loss = total / static_cast<double>(rows);
  } else {
    trace.targets = batch.targets != nullptr ? *batch.targets : one_hot(batch.labels, classes);
    if (trace.targets.rows() != rows || trace.targets.cols() != classes) {
      throw DimensionError("forward: target shape does not match model output");
    }
    trace.loss = 0.5 * (x - trace.targets).squaredNorm() / static_cast<double>(rows);
  }
  if (!std::isfinite(trace.loss)) {
    throw NumericError("forward: non-finite loss at layer " + std::to_string(spec_.layers.size()));
  }
  trace.output = std::move(x);
  return trace;
}

Vector Model::backward(const ForwardTrace& trace) const {
  if (trace.layer_count != spec_.layers.size() || trace.param_count != params_.size() ||
      trace.caches.size() != spec_.layers.size()) {
    throw ConsistencyError("backward: trace was not produced by this model");
  }
  const auto rows = static_cast<double>(trace.output.rows());
  Matrix grad_out;
  if (spec_.head == LossHead::softmax_cross_entropy) {
    grad_out = trace.probs;
    for (Eigen::Index r = 0; r < grad_out.rows(); ++r) {
      grad_out(r, trace.labels[static_cast<std::size_t>(r)]) -= 1.0;
    }
  } else {
    grad_out = trace.output - trace.targets;
  }
  grad_out /= rows;

  Vector grad = Vector::Zero(params_.size());
  for (std::size_t i = spec_.layers.size(); i-- > 0;) {
    const auto& l = spec_.layers[i];
    const auto& cache = trace.caches[i];
    const Eigen::Index off = offsets_[i];
    switch (l.kind) {
      case LayerKind::dense: {
        if (cache.input.rows() != grad_out.rows() || cache.input.cols() != l.in) {
          throw ConsistencyError("backward: cache shape mismatch at layer " + std::to_string(i));
        }
        Eigen::Map<const Matrix> w(params_.data() + off, l.out, l.in);
        Eigen::Map<Matrix> gw(grad.data() + off, l.out, l.in);
        Eigen::Map<RowVector> gb(grad.data() + off + static_cast<Eigen::Index>(l.in) * l.out, l.out);
        gw.noalias() = grad_out.transpose() * cache.input;
        gb = grad_out.colwise().sum();
        if (i > 0) grad_out = grad_out * w;
        break;
      }
      case LayerKind::relu:
        grad_out = (cache.input.array() > 0.0).select(grad_out, 0.0);
        break;
      case LayerKind::batchnorm: {
        Eigen::Map<const RowVector> gamma(params_.data() + off, l.in);
        Eigen::Map<RowVector> ggamma(grad.data() + off, l.in);
        Eigen::Map<RowVector> gbeta(grad.data() + off + l.in, l.in);
        ggamma = grad_out.cwiseProduct(cache.xhat).colwise().sum();
        gbeta = grad_out.colwise().sum();
        Matrix dxhat = (grad_out.array().rowwise() * gamma.array()).matrix();
        if (trace.mode == Mode::train) {
          const RowVector sum_dxhat = dxhat.colwise().sum();
          const RowVector sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).colwise().sum();
          Matrix t = rows * dxhat;
          t.rowwise() -= sum_dxhat;
          t -= (cache.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
          grad_out = (t.array().rowwise() * (cache.inv_std.array() / rows)).matrix();
        } else {
          grad_out = (dxhat.array().rowwise() * cache.inv_std.array()).matrix();
        }
        break;
      }
      case LayerKind::dropout:
        if (cache.mask.size() > 0) grad_out = grad_out.cwiseProduct(cache.mask);
        break;
    }
  }
  return grad;
}

Matrix softmax(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult grad_check(const Model& model, const BatchView& batch, double h,
                           const GradCheckOptions& options) {
  SUPERCONV_CHECK(std::isfinite(h) && h >= 1e-10, ValidationError,
                  "grad_check: step h is below the round-off floor 1e-10");
  Model probe = model;
  ForwardOptions frozen;
  frozen.update_running_stats = false;
  const ForwardTrace base = probe.forward(batch, Mode::train, frozen);
  const std::vector<Matrix> masks = base.dropout_masks();
  frozen.dropout_masks = &masks;
  const Vector analytic = probe.backward(base);

  const Eigen::Index n = probe.param_count();
  std::vector<Eigen::Index> coords(static_cast<std::size_t>(n));
  std::iota(coords.begin(), coords.end(), Eigen::Index{0});
  if (n > options.max_coords) {
    std::mt19937_64 rng(options.sample_seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(options.max_coords));
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  Vector& theta = probe.params();
  for (Eigen::Index k : coords) {
    const double saved = theta[k];
    theta[k] = saved + h;
    const double plus = probe.forward(batch, Mode::train, frozen).loss;
    theta[k] = saved - h;
    const double minus = probe.forward(batch, Mode::train, frozen).loss;
    theta[k] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double err = relative_error(analytic[k], numeric, options.abs_floor);
    if (result.worst_coord < 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_coord = k;
    }
    ++result.coords_checked;
  }
  return result;
}

}  // namespace superconv
