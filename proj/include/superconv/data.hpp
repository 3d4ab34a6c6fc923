#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "superconv/nn.hpp"

namespace superconv {

struct Dataset {
  Matrix inputs;  // one example per row
  std::vector<int> labels;
  int n_classes = 0;
  std::string provenance;

  Eigen::Index size() const { return inputs.rows(); }
  int dim() const { return static_cast<int>(inputs.cols()); }
  void validate() const;
  std::vector<std::int64_t> class_counts() const;
};

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
// Pixels are flattened row-major and scaled by 1/255.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Writes inputs as unsigned bytes (round(x * 255)) with the given image
// shape, and labels as a rank-1 IDX file.
void write_idx(const Dataset& data, int rows, int cols, const std::filesystem::path& images,
               const std::filesystem::path& labels);

// Class-balanced sample of `per_class` examples from every class, in a
// seeded random order.
Dataset subset(const Dataset& data, int per_class, std::uint64_t seed);

// Gaussian clusters around fixed centers 0.2 + 0.6 * e_c in
// max(2, n_classes) dimensions, clamped to [0, 1].
Dataset synth_blobs(int n_classes, int per_class, double spread, std::uint64_t seed);

// f(theta) = 1/2 sum_j curvature_j * theta_j^2.
struct QuadraticProblem {
  Vector curvatures;
  Vector start;

  void validate() const;
  double loss(const Vector& theta) const;
  Vector gradient(const Vector& theta) const;
  // Plain gradient-descent iterates theta_0 .. theta_{count-1} at a fixed rate.
  std::vector<Vector> descent_iterates(double lr, int count) const;
};

}  // namespace superconv
