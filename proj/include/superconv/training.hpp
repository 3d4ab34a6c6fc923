#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "superconv/data.hpp"
#include "superconv/nn.hpp"

namespace superconv {

// Mini-batches drawn without replacement; the order is reshuffled at the
// start of every epoch and the last batch of an epoch may be short.
class EpochSampler {
 public:
  EpochSampler(Eigen::Index n_examples, Eigen::Index batch_size, std::uint64_t seed);

  std::span<const Eigen::Index> next();

  std::int64_t iters_per_epoch() const { return iters_per_epoch_; }
  std::int64_t epoch() const { return epoch_; }

 private:
  std::vector<Eigen::Index> order_;
  Eigen::Index batch_size_;
  Eigen::Index cursor_;
  std::int64_t iters_per_epoch_;
  std::int64_t epoch_ = -1;
  std::mt19937_64 rng_;
};

void gather_batch(const Dataset& data, std::span<const Eigen::Index> rows, Matrix& inputs,
                  std::vector<int>& labels);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // fraction in [0,1]
};

// Eval-mode pass (running batchnorm statistics, no dropout) in row chunks.
EvalResult evaluate(const Model& model, const Dataset& data, Eigen::Index chunk = 1000);

}  // namespace superconv
