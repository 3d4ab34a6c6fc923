// Model checkpoint: a flat little-endian binary record.
//
//   offset  field
//   0       magic "SCVCKPT\0" (8 bytes)
//   8       u32 format version (1)
//   12      u32 loss head (0 softmax-ce, 1 squared-error)
//   16      u64 init seed
//   24      u32 layer count L
//   then L x { u32 kind, u32 in, u32 out, f64 maf, f64 ratio }
//   then    u64 parameter count P, P x f64 (flat layout of Model)
//   then    u32 batchnorm count K, K x { u32 dim, dim x f64 mean, dim x f64 var }

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "superconv/error.hpp"
#include "superconv/nn.hpp"

namespace superconv {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'C', 'V', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_raw(const double* data, std::size_t n) {
    const auto* p = reinterpret_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n * sizeof(double));
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    T value;
    need(sizeof(T));
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_raw(double* out, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(out, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("checkpoint: truncated at byte offset " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                        " left)");
    }
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  Writer w;
  for (char c : kMagic) w.put(c);
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(model.spec().head));
  w.put(static_cast<std::uint64_t>(model.spec().seed));
  w.put(static_cast<std::uint32_t>(model.spec().layers.size()));
  for (const auto& l : model.spec().layers) {
    w.put(static_cast<std::uint32_t>(l.kind));
    w.put(static_cast<std::uint32_t>(l.in));
    w.put(static_cast<std::uint32_t>(l.out));
    w.put(l.maf);
    w.put(l.ratio);
  }
  w.put(static_cast<std::uint64_t>(model.param_count()));
  w.put_raw(model.params().data(), static_cast<std::size_t>(model.param_count()));
  w.put(static_cast<std::uint32_t>(model.running_means().size()));
  for (std::size_t i = 0; i < model.running_means().size(); ++i) {
    const auto& mean = model.running_means()[i];
    const auto& var = model.running_vars()[i];
    w.put(static_cast<std::uint32_t>(mean.size()));
    w.put_raw(mean.data(), static_cast<std::size_t>(mean.size()));
    w.put_raw(var.data(), static_cast<std::size_t>(var.size()));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("checkpoint: write failed for '" + path.string() + "'");
}

constexpr std::uint32_t kMaxWidth = 1u << 20;

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path.string() + "'");
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  for (char expected : kMagic) {
    if (r.get<char>() != expected) throw FormatError("checkpoint: bad magic at byte offset 0");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelSpec spec;
  const auto head = r.get<std::uint32_t>();
  if (head > 1) throw FormatError("checkpoint: unknown loss head " + std::to_string(head));
  spec.head = static_cast<LossHead>(head);
  spec.seed = r.get<std::uint64_t>();
  const auto n_layers = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const auto kind = r.get<std::uint32_t>();
    if (kind > 3) {
      throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind) + " at byte offset " +
                        std::to_string(r.pos() - 4));
    }
    l.kind = static_cast<LayerKind>(kind);
    const auto in = r.get<std::uint32_t>();
    const auto out = r.get<std::uint32_t>();
    if (in > kMaxWidth || out > kMaxWidth) {
      throw FormatError("checkpoint: layer width out of range at byte offset " +
                        std::to_string(r.pos() - 8));
    }
    l.in = static_cast<int>(in);
    l.out = static_cast<int>(out);
    l.maf = r.get<double>();
    l.ratio = r.get<double>();
    spec.layers.push_back(l);
  }
  Model model(std::move(spec));

  const auto n_params = r.get<std::uint64_t>();
  if (n_params != static_cast<std::uint64_t>(model.param_count())) {
    throw ConsistencyError("checkpoint: " + std::to_string(n_params) +
                           " parameters recorded, layer specs imply " +
                           std::to_string(model.param_count()));
  }
  Vector params(model.param_count());
  r.get_raw(params.data(), static_cast<std::size_t>(n_params));
  model.set_params(params);

  const auto n_bn = r.get<std::uint32_t>();
  if (n_bn != model.running_means().size()) {
    throw ConsistencyError("checkpoint: batchnorm count mismatch");
  }
  std::vector<RowVector> means;
  std::vector<RowVector> vars;
  for (std::uint32_t i = 0; i < n_bn; ++i) {
    const auto dim = r.get<std::uint32_t>();
    RowVector mean(dim);
    RowVector var(dim);
    r.get_raw(mean.data(), dim);
    r.get_raw(var.data(), dim);
    means.push_back(std::move(mean));
    vars.push_back(std::move(var));
  }
  model.set_running_stats(std::move(means), std::move(vars));
  if (r.pos() != r.size()) {
    throw FormatError("checkpoint: " + std::to_string(r.size() - r.pos()) +
                      " trailing bytes after byte offset " + std::to_string(r.pos()));
  }
  return model;
}

}  // namespace superconv
