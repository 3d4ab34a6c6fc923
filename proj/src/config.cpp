#include "superconv/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "superconv/error.hpp"

namespace superconv {

namespace {

using nlohmann::json;

void allow_keys(const json& obj, const std::string& where, std::set<std::string> keys) {
  if (!obj.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!keys.contains(key)) throw ValidationError("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

StepUnit parse_unit(const std::string& s) {
  if (s == "iterations") return StepUnit::iterations;
  if (s == "epochs") return StepUnit::epochs;
  throw ValidationError("config: unit must be 'iterations' or 'epochs', got '" + s + "'");
}

ScheduleParams parse_schedule(const json& j) {
  allow_keys(j, "schedule",
             {"kind", "min_lr", "max_lr", "lr", "stepsize", "unit", "drop_factor", "boundaries",
              "final_div", "gamma", "power"});
  ScheduleParams p;
  std::string kind = "clr-triangular";
  read(j, "kind", kind);
  p.kind = parse_schedule_kind(kind);
  read(j, "min_lr", p.min_lr);
  read(j, "max_lr", p.max_lr);
  if (j.contains("lr")) {
    read(j, "lr", p.max_lr);
    p.min_lr = p.max_lr;
  }
  read(j, "stepsize", p.stepsize);
  std::string unit = "iterations";
  read(j, "unit", unit);
  p.unit = parse_unit(unit);
  read(j, "drop_factor", p.drop_factor);
  read(j, "boundaries", p.boundaries);
  read(j, "final_div", p.final_div);
  read(j, "gamma", p.gamma);
  read(j, "power", p.power);
  if (p.kind == ScheduleKind::exp && !j.contains("gamma")) p.gamma = 0.9999;
  return p;
}

MomentumParams parse_momentum(const json& j) {
  if (j.is_number()) {
    MomentumParams p;
    p.max_m = p.min_m = j.get<double>();
    return p;
  }
  allow_keys(j, "momentum", {"kind", "max", "min", "value", "stepsize", "unit"});
  MomentumParams p;
  std::string kind = "constant";
  read(j, "kind", kind);
  if (kind == "constant") {
    p.kind = MomentumKind::constant;
  } else if (kind == "cyclical") {
    p.kind = MomentumKind::cyclical;
  } else {
    throw ValidationError("config: momentum kind must be 'constant' or 'cyclical'");
  }
  read(j, "max", p.max_m);
  read(j, "min", p.min_m);
  if (j.contains("value")) {
    read(j, "value", p.max_m);
    p.min_m = p.max_m;
  }
  read(j, "stepsize", p.stepsize);
  std::string unit = "iterations";
  read(j, "unit", unit);
  p.unit = parse_unit(unit);
  return p;
}

OptimizerConfig parse_optimizer(const json& j) {
  allow_keys(j, "optimizer",
             {"method", "weight_decay", "beta1", "beta2", "adam_eps", "adagrad_eps", "rho",
              "adadelta_eps"});
  OptimizerConfig c;
  std::string method = "sgd-momentum";
  read(j, "method", method);
  c.method = parse_optimizer_method(method);
  read(j, "weight_decay", c.weight_decay);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "adam_eps", c.adam_eps);
  read(j, "adagrad_eps", c.adagrad_eps);
  read(j, "rho", c.rho);
  read(j, "adadelta_eps", c.adadelta_eps);
  c.validate();
  return c;
}

DataConfig parse_data(const json& j) {
  allow_keys(j, "data",
             {"source", "dir", "train_per_class", "test_per_class", "subset_seed", "n_classes",
              "per_class", "blob_test_per_class", "spread", "seed"});
  DataConfig d;
  read(j, "source", d.source);
  if (d.source != "mnist" && d.source != "blobs") {
    throw ValidationError("config: data.source must be 'mnist' or 'blobs'");
  }
  read(j, "dir", d.dir);
  read(j, "train_per_class", d.train_per_class);
  read(j, "test_per_class", d.test_per_class);
  read(j, "subset_seed", d.subset_seed);
  read(j, "n_classes", d.n_classes);
  read(j, "per_class", d.per_class);
  read(j, "blob_test_per_class", d.blob_test_per_class);
  read(j, "spread", d.spread);
  read(j, "seed", d.blob_seed);
  SUPERCONV_CHECK(d.train_per_class >= 0 && d.test_per_class >= 0, ValidationError,
                  "config: per-class counts must be >= 0");
  return d;
}

std::vector<LayerConfig> parse_layers(const json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("config: model.layers must be a nonempty array");
  std::vector<LayerConfig> layers;
  for (const auto& lj : j) {
    allow_keys(lj, "model.layers[]", {"type", "units", "maf", "ratio"});
    LayerConfig l;
    std::string type;
    read(lj, "type", type);
    if (type == "dense") {
      l.kind = LayerKind::dense;
      read(lj, "units", l.units);
      SUPERCONV_CHECK(l.units >= 1, ValidationError, "config: dense layer needs units >= 1");
    } else if (type == "relu") {
      l.kind = LayerKind::relu;
    } else if (type == "batchnorm") {
      l.kind = LayerKind::batchnorm;
      read(lj, "maf", l.maf);
    } else if (type == "dropout") {
      l.kind = LayerKind::dropout;
      read(lj, "ratio", l.ratio);
    } else {
      throw ValidationError("config: unknown layer type '" + type + "'");
    }
    layers.push_back(l);
  }
  return layers;
}

RangeTestConfig parse_range_test(const json& j, PeakMode& mode) {
  allow_keys(j, "range_test",
             {"start_lr", "end_lr", "n_iters", "smooth_beta", "divergence_factor", "eval_every",
              "momentum", "divisor", "peak"});
  RangeTestConfig c;
  read(j, "start_lr", c.start_lr);
  read(j, "end_lr", c.end_lr);
  read(j, "n_iters", c.n_iters);
  read(j, "smooth_beta", c.smooth_beta);
  read(j, "divergence_factor", c.divergence_factor);
  read(j, "eval_every", c.eval_every);
  read(j, "momentum", c.momentum);
  read(j, "divisor", c.divisor);
  std::string peak = "accuracy";
  read(j, "peak", peak);
  if (peak == "accuracy") {
    mode = PeakMode::accuracy;
  } else if (peak == "loss-valley") {
    mode = PeakMode::loss_valley;
  } else {
    throw ValidationError("config: range_test.peak must be 'accuracy' or 'loss-valley'");
  }
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: JSON parse error: ") + e.what());
  }
  allow_keys(j, "config",
             {"version", "name", "seed", "data", "model", "optimizer", "schedule", "momentum",
              "batch_size", "epochs", "iterations", "eval_every", "final_train_eval", "thresholds",
              "estimator", "range_test", "baseline", "sweep", "trials", "output_dir", "init_checkpoint"});

  ExperimentConfig cfg;
  read(j, "version", cfg.version);
  if (cfg.version != kConfigVersion) {
    throw ValidationError("config: unsupported version " + std::to_string(cfg.version) +
                          " (expected " + std::to_string(kConfigVersion) + ")");
  }
  read(j, "name", cfg.name);
  SUPERCONV_CHECK(!cfg.name.empty(), ValidationError, "config: name must be nonempty");
  read(j, "seed", cfg.seed);
  if (j.contains("data")) cfg.data = parse_data(j["data"]);
  if (!j.contains("model")) throw ValidationError("config: missing 'model'");
  allow_keys(j["model"], "model", {"layers", "head"});
  cfg.layers = parse_layers(j["model"].value("layers", json::array()));
  std::string head = j["model"].value("head", "softmax-cross-entropy");
  if (head == "softmax-cross-entropy") {
    cfg.head = LossHead::softmax_cross_entropy;
  } else if (head == "squared-error") {
    cfg.head = LossHead::squared_error;
  } else {
    throw ValidationError("config: unknown head '" + head + "'");
  }
  if (j.contains("optimizer")) cfg.optimizer = parse_optimizer(j["optimizer"]);
  if (!j.contains("schedule")) throw ValidationError("config: missing 'schedule'");
  cfg.schedule = parse_schedule(j["schedule"]);
  if (j.contains("momentum")) cfg.momentum = parse_momentum(j["momentum"]);
  read(j, "batch_size", cfg.batch_size);
  SUPERCONV_CHECK(cfg.batch_size >= 1, ValidationError, "config: batch_size must be >= 1");
  if (j.contains("epochs")) read(j, "epochs", cfg.epochs.emplace());
  if (j.contains("iterations")) read(j, "iterations", cfg.iterations.emplace());
  SUPERCONV_CHECK(cfg.epochs.has_value() != cfg.iterations.has_value(), ValidationError,
                  "config: give exactly one of 'epochs' or 'iterations'");
  SUPERCONV_CHECK(cfg.epochs.value_or(0) >= 0 && cfg.iterations.value_or(0) >= 0, ValidationError,
                  "config: run length must be >= 0");
  read(j, "eval_every", cfg.eval_every);
  SUPERCONV_CHECK(cfg.eval_every >= 0, ValidationError, "config: eval_every must be >= 0");
  read(j, "final_train_eval", cfg.final_train_eval);
  read(j, "thresholds", cfg.thresholds);
  if (j.contains("estimator")) {
    const auto& e = j["estimator"];
    allow_keys(e, "estimator", {"enabled", "cadence", "alpha", "aggregation"});
    read(e, "enabled", cfg.estimator.enabled);
    read(e, "cadence", cfg.estimator.config.cadence);
    read(e, "alpha", cfg.estimator.config.alpha);
    std::string agg = "abs-sum";
    read(e, "aggregation", agg);
    cfg.estimator.config.aggregation = parse_aggregation(agg);
    SUPERCONV_CHECK(cfg.estimator.config.cadence >= 1, ValidationError,
                    "config: estimator.cadence must be >= 1");
    SUPERCONV_CHECK(cfg.estimator.config.alpha > 0 && cfg.estimator.config.alpha <= 1,
                    ValidationError, "config: estimator.alpha must lie in (0,1]");
  }
  if (j.contains("range_test")) cfg.range_test = parse_range_test(j["range_test"], cfg.peak_mode);
  if (j.contains("baseline")) {
    const auto& b = j["baseline"];
    allow_keys(b, "baseline", {"name", "schedule", "momentum", "optimizer", "epochs"});
    BaselineOverrides o;
    o.name = cfg.name + "_baseline";
    read(b, "name", o.name);
    if (b.contains("schedule")) o.schedule = parse_schedule(b["schedule"]);
    if (b.contains("momentum")) o.momentum = parse_momentum(b["momentum"]);
    if (b.contains("optimizer")) o.optimizer = parse_optimizer(b["optimizer"]);
    if (b.contains("epochs")) read(b, "epochs", o.epochs.emplace());
    cfg.baseline = o;
  }
  if (j.contains("sweep")) {
    allow_keys(j["sweep"], "sweep", {"sizes"});
    read(j["sweep"], "sizes", cfg.sweep_sizes);
  }
  read(j, "trials", cfg.trials);
  SUPERCONV_CHECK(cfg.trials >= 1, ValidationError, "config: trials must be >= 1");
  read(j, "output_dir", cfg.output_dir);
  if (j.contains("init_checkpoint")) {
    std::string ckpt;
    read(j, "init_checkpoint", ckpt);
    cfg.init_checkpoint = ckpt;
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  return parse_config(std::string(std::istreambuf_iterator<char>(in), {}));
}

ExperimentConfig apply_baseline(const ExperimentConfig& cfg) {
  if (!cfg.baseline) throw ValidationError("config: no 'baseline' section to apply");
  ExperimentConfig out = cfg;
  const auto& b = *cfg.baseline;
  out.name = b.name;
  if (b.schedule) out.schedule = *b.schedule;
  if (b.momentum) out.momentum = *b.momentum;
  if (b.optimizer) out.optimizer = *b.optimizer;
  if (b.epochs) {
    out.epochs = b.epochs;
    out.iterations.reset();
  }
  out.baseline.reset();
  return out;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("SUPERCONV_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return cfg.output_dir;
}

}  // namespace superconv
