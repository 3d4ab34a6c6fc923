#pragma once

#include <random>
#include <vector>

#include "superconv/nn.hpp"

namespace testsupport {

inline superconv::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                       double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  superconv::Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = d(rng);
  return m;
}

inline std::vector<int> random_labels(Eigen::Index n, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = d(rng);
  return y;
}

inline superconv::ModelSpec mlp(int in, int hidden, int out, std::uint64_t seed,
                                bool batchnorm = false, double dropout = 0.0) {
  using superconv::LayerSpec;
  superconv::ModelSpec s;
  s.layers.push_back(LayerSpec::dense(in, hidden));
  if (batchnorm) s.layers.push_back(LayerSpec::batchnorm(hidden, 0.95));
  s.layers.push_back(LayerSpec::relu(hidden));
  if (dropout > 0) s.layers.push_back(LayerSpec::dropout(hidden, dropout));
  s.layers.push_back(LayerSpec::dense(hidden, out));
  s.seed = seed;
  return s;
}

}  // namespace testsupport
