#include "superconv/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "superconv/error.hpp"
#include "superconv/estimator.hpp"
#include "superconv/format.hpp"
#include "superconv/schedules.hpp"
#include "superconv/training.hpp"

namespace superconv {

namespace {

using nlohmann::json;

constexpr double kDivergenceLoss = 1e6;

std::uint64_t shuffle_seed(std::uint64_t seed) { return seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL; }

std::filesystem::path mnist_dir(const DataConfig& cfg) {
  if (!cfg.dir.empty()) return cfg.dir;
  if (const char* env = std::getenv("SUPERCONV_MNIST_DIR"); env != nullptr && *env != '\0') return env;
  return "data/mnist";
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json thresholds_json(const std::vector<ThresholdHit>& hits) {
  json arr = json::array();
  for (const auto& h : hits) {
    arr.push_back({{"threshold", h.threshold},
                   {"iteration", h.iteration ? json(*h.iteration) : json(nullptr)}});
  }
  return arr;
}

json arm_json(const ArmStats& arm) {
  json trials = json::array();
  for (const auto& t : arm.trials) {
    trials.push_back({{"seed", t.seed},
                      {"diverged", t.diverged},
                      {"final_accuracy", opt(t.final_accuracy)},
                      {"best_accuracy", opt(t.best_accuracy)},
                      {"iterations_to_threshold", thresholds_json(t.iterations_to_threshold)}});
  }
  json mean_hits = json::array();
  for (const auto& h : arm.mean_iterations_to_threshold) {
    mean_hits.push_back({{"threshold", h.threshold},
                         {"mean_iteration", h.iteration ? json(*h.iteration) : json(nullptr)}});
  }
  return {{"name", arm.name},
          {"valid_trials", arm.valid_trials},
          {"mean_accuracy", opt(arm.mean_accuracy)},
          {"stddev_accuracy", opt(arm.stddev_accuracy)},
          {"mean_iterations_to_threshold", mean_hits},
          {"trials", trials}};
}

json compare_to_json(const CompareReport& r) {
  return {{"a", arm_json(r.a)}, {"b", arm_json(r.b)}, {"gap", opt(r.gap)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
}

void write_run(const TrainingLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / (log.summary.name + ".csv"), std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write run CSV under '" + dir.string() + "'");
  write_log_csv(log, csv);
  write_text(dir / (log.summary.name + ".summary.json"), summary_json(log.summary));
}

std::vector<ThresholdHit> threshold_hits(const std::vector<LogRecord>& records,
                                         const std::vector<double>& thresholds) {
  std::vector<ThresholdHit> hits;
  for (double thr : thresholds) {
    ThresholdHit hit{thr, std::nullopt};
    for (const auto& r : records) {
      if (r.test_accuracy && *r.test_accuracy >= thr) {
        hit.iteration = r.iteration;
        break;
      }
    }
    hits.push_back(hit);
  }
  return hits;
}

ArmStats summarize_arm(const std::string& name, std::vector<TrialResult> trials,
                       const std::vector<double>& thresholds) {
  ArmStats arm;
  arm.name = name;
  arm.trials = std::move(trials);
  std::vector<double> acc;
  for (const auto& t : arm.trials) {
    if (!t.diverged && t.final_accuracy) acc.push_back(*t.final_accuracy);
  }
  arm.valid_trials = acc.size();
  if (!acc.empty()) {
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
    arm.mean_accuracy = mean;
    if (acc.size() >= 2) {
      double ss = 0.0;
      for (double a : acc) ss += (a - mean) * (a - mean);
      arm.stddev_accuracy = std::sqrt(ss / static_cast<double>(acc.size() - 1));
    }
  }
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    double sum = 0.0;
    int count = 0;
    for (const auto& t : arm.trials) {
      if (t.diverged || k >= t.iterations_to_threshold.size()) continue;
      if (const auto& it = t.iterations_to_threshold[k].iteration) {
        sum += static_cast<double>(*it);
        ++count;
      }
    }
    ThresholdHit h{thresholds[k], std::nullopt};
    if (count > 0) h.iteration = static_cast<std::int64_t>(std::llround(sum / count));
    arm.mean_iterations_to_threshold.push_back(h);
  }
  return arm;
}

std::vector<TrialResult> run_trials(const ExperimentConfig& cfg, int trials, const DataBundle& data,
                                    const RunSinks& sinks) {
  auto one = [&](int k) {
    ExperimentConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(k);
    c.name = cfg.name + ".trial" + std::to_string(k);
    const TrainingLog log = train(c, data);
    if (sinks.output_dir) write_run(log, *sinks.output_dir);
    TrialResult r;
    r.seed = c.seed;
    r.diverged = log.summary.diverged;
    r.final_accuracy = log.summary.final_test_accuracy;
    r.best_accuracy = log.summary.best_test_accuracy;
    r.iterations_to_threshold = log.summary.iterations_to_threshold;
    return r;
  };
  std::vector<TrialResult> results(static_cast<std::size_t>(trials));
  const int jobs = std::max(1, sinks.jobs);
  for (int start = 0; start < trials; start += jobs) {
    const int end = std::min(trials, start + jobs);
    if (jobs == 1) {
      results[static_cast<std::size_t>(start)] = one(start);
      continue;
    }
    std::vector<std::future<TrialResult>> pending;
    for (int k = start; k < end; ++k) pending.push_back(std::async(std::launch::async, one, k));
    for (int k = start; k < end; ++k) {
      results[static_cast<std::size_t>(k)] = pending[static_cast<std::size_t>(k - start)].get();
    }
  }
  return results;
}

}  // namespace

DataBundle load_data(const DataConfig& cfg) {
  DataBundle out;
  if (cfg.source == "mnist") {
    const auto dir = mnist_dir(cfg);
    auto train = std::make_shared<Dataset>(
        load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"));
    auto test = std::make_shared<Dataset>(
        load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"));
    if (cfg.train_per_class > 0) {
      train = std::make_shared<Dataset>(subset(*train, cfg.train_per_class, cfg.subset_seed));
    }
    if (cfg.test_per_class > 0) {
      test = std::make_shared<Dataset>(subset(*test, cfg.test_per_class, cfg.subset_seed + 1));
    }
    out.train = std::move(train);
    out.test = std::move(test);
  } else if (cfg.source == "blobs") {
    out.train = std::make_shared<Dataset>(
        synth_blobs(cfg.n_classes, cfg.per_class, cfg.spread, cfg.blob_seed));
    out.test = std::make_shared<Dataset>(
        synth_blobs(cfg.n_classes, cfg.blob_test_per_class, cfg.spread, cfg.blob_seed + 1));
  } else {
    throw ValidationError("data: unknown source '" + cfg.source + "'");
  }
  out.train->validate();
  out.test->validate();
  return out;
}

ModelSpec build_model_spec(const ExperimentConfig& cfg, int input_dim, int n_classes) {
  ModelSpec spec;
  spec.head = cfg.head;
  spec.seed = cfg.seed;
  int width = input_dim;
  for (const auto& l : cfg.layers) {
    switch (l.kind) {
      case LayerKind::dense:
        spec.layers.push_back(LayerSpec::dense(width, l.units));
        width = l.units;
        break;
      case LayerKind::relu: spec.layers.push_back(LayerSpec::relu(width)); break;
      case LayerKind::batchnorm: spec.layers.push_back(LayerSpec::batchnorm(width, l.maf)); break;
      case LayerKind::dropout: spec.layers.push_back(LayerSpec::dropout(width, l.ratio)); break;
    }
  }
  spec.validate();
  if (spec.output_dim() != n_classes) {
    throw ValidationError("model: output width " + std::to_string(spec.output_dim()) +
                          " does not match the dataset's " + std::to_string(n_classes) + " classes");
  }
  return spec;
}

TrainingLog train(const ExperimentConfig& cfg, const DataBundle& data, Model* trained) {
  const auto wall_start = std::chrono::steady_clock::now();
  SUPERCONV_CHECK(data.train && data.test, ValidationError, "train: missing dataset");
  const Dataset& train_set = *data.train;
  const Dataset& test_set = *data.test;
  const Eigen::Index n = train_set.size();
  SUPERCONV_CHECK(n >= 1, InsufficientDataError, "train: empty training set");
  if (cfg.batch_size > n) {
    throw ValidationError("train: batch size " + std::to_string(cfg.batch_size) +
                          " exceeds training set size " + std::to_string(n));
  }
  cfg.optimizer.validate();

  const std::int64_t ipe = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total = cfg.epochs ? *cfg.epochs * ipe : cfg.iterations.value_or(0);

  // Everything is validated before the first update.
  Model model(build_model_spec(cfg, train_set.dim(), train_set.n_classes));
  if (cfg.init_checkpoint) {
    Model loaded = load_checkpoint(*cfg.init_checkpoint);
    if (loaded.param_count() != model.param_count() ||
        loaded.spec().layers.size() != model.spec().layers.size()) {
      throw ConsistencyError("train: checkpoint '" + cfg.init_checkpoint->string() +
                             "' does not match the configured model");
    }
    model = std::move(loaded);
  }
  std::optional<ScheduleSpec> schedule;
  std::optional<MomentumSpec> momentum;
  if (total > 0) {
    ScheduleParams sp = cfg.schedule;
    sp.total_iters = total;
    sp.iters_per_epoch = ipe;
    schedule.emplace(sp);
    MomentumParams mp = cfg.momentum;
    mp.iters_per_epoch = ipe;
    mp.single_cycle = sp.kind == ScheduleKind::one_cycle;
    momentum.emplace(mp);
  }
  std::optional<LrEstimator> estimator;
  if (cfg.estimator.enabled) estimator.emplace(cfg.estimator.config);

  EpochSampler sampler(n, cfg.batch_size, shuffle_seed(cfg.seed));
  OptimizerState opt_state;
  const std::int64_t eval_interval = cfg.eval_every > 0 ? cfg.eval_every : ipe;

  TrainingLog log;
  auto& summary = log.summary;
  summary.name = cfg.name;
  summary.data_provenance = train_set.provenance;
  summary.seed = cfg.seed;
  summary.total_iters = total;
  summary.iters_per_epoch = ipe;

  Matrix inputs;
  std::vector<int> labels;
  for (std::int64_t t = 0; t < total; ++t) {
    LogRecord rec;
    rec.iteration = t;
    rec.epoch = t / ipe;
    if (t % eval_interval == 0) {
      const EvalResult ev = evaluate(model, test_set);
      rec.test_loss = ev.loss;
      rec.test_accuracy = ev.accuracy;
    }
    const double lr = schedule->lr_at(t);
    const double m = momentum->momentum_at(t);
    rec.lr = lr;
    rec.momentum = m;

    gather_batch(train_set, sampler.next(), inputs, labels);
    try {
      const ForwardTrace trace = model.forward({inputs, labels}, Mode::train);
      rec.train_loss = trace.loss;
      std::int64_t correct = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) correct += trace.predictions[i] == labels[i];
      rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
      if (trace.loss > kDivergenceLoss) throw NumericError("loss above divergence threshold");
      const Vector grad = model.backward(trace);
      if (estimator) {
        if (auto est = estimator->observe(t, model.params(), lr)) {
          rec.lr_estimate_raw = est->raw;
          rec.lr_estimate_smoothed = est->smoothed;
        }
      }
      apply_update_in_place(cfg.optimizer, opt_state, model.params(), grad, lr, m);
    } catch (const NumericError&) {
      if (!rec.train_loss) rec.train_loss = std::numeric_limits<double>::quiet_NaN();
      summary.diverged = true;
      summary.diverged_at = t;
      log.records.push_back(rec);
      break;
    }
    log.records.push_back(rec);
  }

  if (!summary.diverged) {
    LogRecord last;
    last.iteration = total;
    last.epoch = total / ipe;
    try {
      const EvalResult ev = evaluate(model, test_set);
      last.test_loss = ev.loss;
      last.test_accuracy = ev.accuracy;
      summary.final_test_accuracy = ev.accuracy;
      summary.final_test_loss = ev.loss;
      if (cfg.final_train_eval) {
        summary.final_train_accuracy = evaluate(model, train_set).accuracy;
        summary.generalization_gap = *summary.final_train_accuracy - ev.accuracy;
      }
    } catch (const NumericError&) {
      summary.diverged = true;
      summary.diverged_at = total;
    }
    log.records.push_back(last);
  }

  for (const auto& r : log.records) {
    if (r.test_accuracy && (!summary.best_test_accuracy || *r.test_accuracy > *summary.best_test_accuracy)) {
      summary.best_test_accuracy = r.test_accuracy;
    }
  }
  summary.iterations_to_threshold = threshold_hits(log.records, cfg.thresholds);
  if (schedule) {
    std::int64_t peak = 0;
    for (std::int64_t t = 1; t < total; ++t) {
      if (schedule->lr_at(t) > schedule->lr_at(peak)) peak = t;
    }
    summary.noise_scale_at_peak =
        noise_scale(schedule->lr_at(peak), n, cfg.batch_size, momentum->momentum_at(peak));
  }
  if (trained != nullptr) *trained = model;
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return log;
}

TrainingLog train(const ExperimentConfig& cfg) { return train(cfg, load_data(cfg.data)); }

CompareReport compare(const ExperimentConfig& cfg_a, const ExperimentConfig& cfg_b, int trials,
                      const DataBundle& data, const RunSinks& sinks) {
  SUPERCONV_CHECK(trials >= 1, ValidationError, "compare: trials must be >= 1");
  if (cfg_a.layers.size() != cfg_b.layers.size()) {
    throw ValidationError("compare: configs must share the model shape");
  }
  CompareReport report;
  report.a = summarize_arm(cfg_a.name, run_trials(cfg_a, trials, data, sinks), cfg_a.thresholds);
  report.b = summarize_arm(cfg_b.name, run_trials(cfg_b, trials, data, sinks), cfg_b.thresholds);
  if (report.a.mean_accuracy && report.b.mean_accuracy) {
    report.gap = *report.a.mean_accuracy - *report.b.mean_accuracy;
  }
  return report;
}

SweepReport run_limited_data_sweep(const ExperimentConfig& base, const std::vector<int>& sizes,
                                   int trials, const DataBundle& full, const RunSinks& sinks) {
  SUPERCONV_CHECK(!sizes.empty(), ValidationError, "sweep: no sizes given");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    SUPERCONV_CHECK(sizes[i] < sizes[i - 1], ValidationError, "sweep: sizes must be descending");
  }
  const ExperimentConfig baseline = apply_baseline(base);
  SweepReport report;
  SUPERCONV_CHECK(full.train && full.test, ValidationError, "sweep: missing dataset");
  for (int size : sizes) {
    DataBundle bundle{std::make_shared<const Dataset>(subset(*full.train, size, base.data.subset_seed)),
                      full.test};
    ExperimentConfig a = base;
    ExperimentConfig b = baseline;
    a.name += ".pc" + std::to_string(size);
    b.name += ".pc" + std::to_string(size);
    report.entries.push_back({size, compare(a, b, trials, bundle, sinks)});
    report.gaps.push_back(report.entries.back().report.gap);
  }
  bool all = std::all_of(report.gaps.begin(), report.gaps.end(), [](const auto& g) { return g.has_value(); });
  report.gaps_non_decreasing = all;
  for (std::size_t i = 1; all && i < report.gaps.size(); ++i) {
    if (*report.gaps[i] < *report.gaps[i - 1]) report.gaps_non_decreasing = false;
  }
  report.smallest_beats_largest =
      all && report.gaps.size() >= 2 && *report.gaps.back() > *report.gaps.front();
  return report;
}

RangeTestReport range_test(const ExperimentConfig& cfg, const DataBundle& data) {
  SUPERCONV_CHECK(data.train && data.test, ValidationError, "range test: missing dataset");
  Model model(build_model_spec(cfg, data.train->dim(), data.train->n_classes));
  RangeTestReport report = run_range_test(model, cfg.optimizer, *data.train, data.test.get(),
                                          cfg.batch_size, shuffle_seed(cfg.seed), cfg.range_test);
  if (cfg.peak_mode == PeakMode::loss_valley && report.samples.size() >= 3) {
    report.suggested = suggest_bounds(report, cfg.range_test.divisor, PeakMode::loss_valley);
  }
  return report;
}

void write_log_csv(const TrainingLog& log, std::ostream& out) {
  out << "iteration,epoch,lr,momentum,train_loss,train_accuracy,test_loss,test_accuracy,"
         "lr_estimate_raw,lr_estimate_smoothed\n";
  for (const auto& r : log.records) {
    out << r.iteration << ',' << r.epoch << ',' << format_optional(r.lr) << ','
        << format_optional(r.momentum) << ',' << format_optional(r.train_loss) << ','
        << format_optional(r.train_accuracy) << ',' << format_optional(r.test_loss) << ','
        << format_optional(r.test_accuracy) << ',' << format_optional(r.lr_estimate_raw) << ','
        << format_optional(r.lr_estimate_smoothed) << '\n';
  }
}

std::string summary_json(const TrainingSummary& s) {
  json j = {{"name", s.name},
            {"data", s.data_provenance},
            {"seed", s.seed},
            {"total_iters", s.total_iters},
            {"iters_per_epoch", s.iters_per_epoch},
            {"final_test_accuracy", opt(s.final_test_accuracy)},
            {"final_test_loss", opt(s.final_test_loss)},
            {"best_test_accuracy", opt(s.best_test_accuracy)},
            {"final_train_accuracy", opt(s.final_train_accuracy)},
            {"generalization_gap", opt(s.generalization_gap)},
            {"iterations_to_threshold", thresholds_json(s.iterations_to_threshold)},
            {"noise_scale_at_peak", opt(s.noise_scale_at_peak)},
            {"diverged", s.diverged},
            {"diverged_at", s.diverged_at ? json(*s.diverged_at) : json(nullptr)},
            {"wall_seconds", s.wall_seconds}};
  return j.dump(2) + "\n";
}

std::string compare_json(const CompareReport& report) { return compare_to_json(report).dump(2) + "\n"; }

std::string sweep_json(const SweepReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"per_class", e.per_class}, {"comparison", compare_to_json(e.report)}});
  }
  json gaps = json::array();
  for (const auto& g : report.gaps) gaps.push_back(opt(g));
  json j = {{"entries", entries},
            {"gaps", gaps},
            {"gaps_non_decreasing", report.gaps_non_decreasing},
            {"smallest_beats_largest", report.smallest_beats_largest}};
  return j.dump(2) + "\n";
}

std::string bounds_json(const RangeTestReport& report) {
  json j = {{"stopped_early", report.stopped_early},
            {"stop_lr", opt(report.stop_lr)},
            {"samples", report.samples.size()}};
  if (report.suggested) {
    j["min_lr"] = report.suggested->min_lr;
    j["max_lr"] = report.suggested->max_lr;
    j["peak_bracketed"] = report.suggested->peak_bracketed;
    j["plateau"] = {report.suggested->plateau_low, report.suggested->plateau_high};
  } else {
    j["min_lr"] = nullptr;
    j["max_lr"] = nullptr;
  }
  return j.dump() + "\n";
}

}  // namespace superconv
