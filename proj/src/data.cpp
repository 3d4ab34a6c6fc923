#include "superconv/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>

#include "superconv/error.hpp"

namespace superconv {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), {}};
}

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path.string() + ": truncated header at byte offset " + std::to_string(offset) +
                      " (file has " + std::to_string(bytes.size()) + " bytes)");
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

void Dataset::validate() const {
  SUPERCONV_CHECK(n_classes >= 1, ValidationError, "dataset: n_classes must be positive");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw ConsistencyError("dataset: " + std::to_string(inputs.rows()) + " rows but " +
                           std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw ValidationError("dataset: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(n_classes) + ")");
    }
  }
  SUPERCONV_CHECK(inputs.allFinite(), NumericError, "dataset: non-finite inputs");
}

std::vector<std::int64_t> Dataset::class_counts() const {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const std::string img = read_file(images);
  const std::string lab = read_file(labels);

  const auto img_magic = read_be32(img, 0, images);
  if (img_magic != kImageMagic) {
    throw FormatError(images.string() + ": bad magic " + hex32(img_magic) +
                      " at byte offset 0, expected " + hex32(kImageMagic));
  }
  const auto n = read_be32(img, 4, images);
  const auto rows = read_be32(img, 8, images);
  const auto cols = read_be32(img, 12, images);
  const std::size_t expected_img = 16 + static_cast<std::size_t>(n) * rows * cols;
  if (img.size() != expected_img) {
    throw FormatError(images.string() + ": expected " + std::to_string(expected_img) +
                      " bytes from header, found " + std::to_string(img.size()) +
                      " (mismatch at byte offset " + std::to_string(std::min(img.size(), expected_img)) +
                      ")");
  }

  const auto lab_magic = read_be32(lab, 0, labels);
  if (lab_magic != kLabelMagic) {
    throw FormatError(labels.string() + ": bad magic " + hex32(lab_magic) +
                      " at byte offset 0, expected " + hex32(kLabelMagic));
  }
  const auto n_labels = read_be32(lab, 4, labels);
  const std::size_t expected_lab = 8 + static_cast<std::size_t>(n_labels);
  if (lab.size() != expected_lab) {
    throw FormatError(labels.string() + ": expected " + std::to_string(expected_lab) +
                      " bytes from header, found " + std::to_string(lab.size()) +
                      " (mismatch at byte offset " + std::to_string(std::min(lab.size(), expected_lab)) +
                      ")");
  }
  if (n_labels != n) {
    throw ConsistencyError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                           std::to_string(n_labels) + " labels");
  }

  Dataset out;
  const Eigen::Index dim = static_cast<Eigen::Index>(rows) * cols;
  out.inputs.resize(n, dim);
  const auto* px = reinterpret_cast<const unsigned char*>(img.data() + 16);
  for (Eigen::Index k = 0; k < out.inputs.size(); ++k) out.inputs.data()[k] = px[k] / 255.0;
  out.labels.resize(n);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    out.labels[i] = static_cast<unsigned char>(lab[8 + i]);
    max_label = std::max(max_label, out.labels[i]);
  }
  out.n_classes = std::max(10, max_label + 1);
  out.provenance = "idx:" + images.filename().string();
  return out;
}

void write_idx(const Dataset& data, int rows, int cols, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  data.validate();
  if (static_cast<Eigen::Index>(rows) * cols != data.inputs.cols()) {
    throw DimensionError("write_idx: image shape does not match feature count");
  }
  std::string img;
  img.reserve(16 + static_cast<std::size_t>(data.inputs.size()));
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (Eigen::Index k = 0; k < data.inputs.size(); ++k) {
    const double v = std::clamp(data.inputs.data()[k], 0.0, 1.0);
    img.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  std::string lab;
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.labels.size()));
  for (int y : data.labels) {
    SUPERCONV_CHECK(y <= 255, ValidationError, "write_idx: label does not fit in a byte");
    lab.push_back(static_cast<char>(static_cast<unsigned char>(y)));
  }
  write_file(images, img);
  write_file(labels, lab);
}

Dataset subset(const Dataset& data, int per_class, std::uint64_t seed) {
  SUPERCONV_CHECK(per_class >= 1, ValidationError, "subset: per_class must be positive");
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(data.n_classes));
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> picked;
  picked.reserve(static_cast<std::size_t>(per_class) * by_class.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (static_cast<int>(idx.size()) < per_class) {
      throw InsufficientDataError("subset: class " + std::to_string(c) + " has " +
                                  std::to_string(idx.size()) + " examples, " +
                                  std::to_string(per_class) + " requested");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    picked.insert(picked.end(), idx.begin(), idx.begin() + per_class);
  }
  std::shuffle(picked.begin(), picked.end(), rng);

  Dataset out;
  out.n_classes = data.n_classes;
  out.inputs.resize(static_cast<Eigen::Index>(picked.size()), data.inputs.cols());
  out.labels.resize(picked.size());
  for (std::size_t r = 0; r < picked.size(); ++r) {
    out.inputs.row(static_cast<Eigen::Index>(r)) = data.inputs.row(picked[r]);
    out.labels[r] = data.labels[static_cast<std::size_t>(picked[r])];
  }
  out.provenance = data.provenance + "|subset(" + std::to_string(per_class) + ",seed=" +
                   std::to_string(seed) + ")";
  return out;
}

Dataset synth_blobs(int n_classes, int per_class, double spread, std::uint64_t seed) {
  SUPERCONV_CHECK(n_classes >= 2, ValidationError, "synth_blobs: need at least 2 classes");
  SUPERCONV_CHECK(per_class >= 1, ValidationError, "synth_blobs: per_class must be positive");
  SUPERCONV_CHECK(std::isfinite(spread) && spread >= 0, ValidationError,
                  "synth_blobs: spread must be >= 0");
  const int dim = std::max(2, n_classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset out;
  out.n_classes = n_classes;
  out.inputs.resize(static_cast<Eigen::Index>(n_classes) * per_class, dim);
  out.labels.resize(static_cast<std::size_t>(n_classes) * per_class);
  Eigen::Index r = 0;
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < n_classes; ++c, ++r) {
      for (int d = 0; d < dim; ++d) {
        const double center = d == c ? 0.8 : 0.2;
        const double jitter = spread > 0 ? spread * noise(rng) : 0.0;
        out.inputs(r, d) = std::clamp(center + jitter, 0.0, 1.0);
      }
      out.labels[static_cast<std::size_t>(r)] = c;
    }
  }
  out.provenance = "blobs(" + std::to_string(n_classes) + "x" + std::to_string(per_class) +
                   ",seed=" + std::to_string(seed) + ")";
  return out;
}

void QuadraticProblem::validate() const {
  SUPERCONV_CHECK(curvatures.size() >= 1, ValidationError, "quadratic: empty curvature vector");
  SUPERCONV_CHECK((curvatures.array() > 0).all(), ValidationError,
                  "quadratic: curvatures must be positive");
  if (start.size() != curvatures.size()) {
    throw DimensionError("quadratic: start point and curvature lengths differ");
  }
}

double QuadraticProblem::loss(const Vector& theta) const {
  return 0.5 * (curvatures.array() * theta.array().square()).sum();
}

Vector QuadraticProblem::gradient(const Vector& theta) const {
  return (curvatures.array() * theta.array()).matrix();
}

std::vector<Vector> QuadraticProblem::descent_iterates(double lr, int count) const {
  validate();
  std::vector<Vector> out;
  Vector theta = start;
  for (int i = 0; i < count; ++i) {
    out.push_back(theta);
    theta -= lr * gradient(theta);
  }
  return out;
}

}  // namespace superconv
