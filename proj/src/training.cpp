#include "superconv/training.hpp"

#include <algorithm>
#include <numeric>

#include "superconv/error.hpp"

namespace superconv {

EpochSampler::EpochSampler(Eigen::Index n_examples, Eigen::Index batch_size, std::uint64_t seed)
    : order_(static_cast<std::size_t>(n_examples)),
      batch_size_(batch_size),
      cursor_(n_examples),
      iters_per_epoch_(0),
      rng_(seed) {
  SUPERCONV_CHECK(n_examples >= 1, InsufficientDataError, "sampler: empty dataset");
  SUPERCONV_CHECK(batch_size >= 1 && batch_size <= n_examples, ValidationError,
                  "sampler: batch size must lie in [1, dataset size]");
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  iters_per_epoch_ = (n_examples + batch_size - 1) / batch_size;
}

std::span<const Eigen::Index> EpochSampler::next() {
  const auto n = static_cast<Eigen::Index>(order_.size());
  if (cursor_ >= n) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
    ++epoch_;
  }
  const Eigen::Index take = std::min(batch_size_, n - cursor_);
  std::span<const Eigen::Index> out(order_.data() + cursor_, static_cast<std::size_t>(take));
  cursor_ += take;
  return out;
}

void gather_batch(const Dataset& data, std::span<const Eigen::Index> rows, Matrix& inputs,
                  std::vector<int>& labels) {
  inputs.resize(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
  labels.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    inputs.row(static_cast<Eigen::Index>(r)) = data.inputs.row(rows[r]);
    labels[r] = data.labels[static_cast<std::size_t>(rows[r])];
  }
}

EvalResult evaluate(const Model& model, const Dataset& data, Eigen::Index chunk) {
  SUPERCONV_CHECK(data.size() >= 1, InsufficientDataError, "evaluate: empty dataset");
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  for (Eigen::Index start = 0; start < data.size(); start += chunk) {
    const Eigen::Index rows = std::min(chunk, data.size() - start);
    std::span<const int> labels(data.labels.data() + start, static_cast<std::size_t>(rows));
    const ForwardTrace trace = model.infer({data.inputs.middleRows(start, rows), labels});
    loss_sum += trace.loss * static_cast<double>(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (trace.predictions[static_cast<std::size_t>(r)] == labels[static_cast<std::size_t>(r)]) ++correct;
    }
  }
  const auto n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

}  // namespace superconv
