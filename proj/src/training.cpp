#include "cavq/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "cavq/errors.hpp"
#include "cavq/log.hpp"
#include "cavq/metrics.hpp"

namespace cavq {

namespace {

// Sub-stream tags for derive_seed; one master seed drives every stream.
enum StreamTag : std::uint64_t { kInitStream = 11, kShuffleStream = 12, kGateStream = 13, kParaphraseStream = 14 };

}  // namespace

std::string to_string(MetricKind kind) { return kind == MetricKind::Cider ? "cider" : "accuracy"; }

MetricKind parse_metric_kind(const std::string& name) {
  if (name == "accuracy") return MetricKind::Accuracy;
  if (name == "cider") return MetricKind::Cider;
  throw ValidationError("unknown metric '" + name + "' (expected accuracy or cider)");
}

void TrainConfig::validate() const {
  if (!(optimizer.learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
  if (batch_size == 0) throw ValidationError("train: batch_size must be positive");
  if (max_epochs == 0) throw ValidationError("train: max_epochs must be positive");
  if (patience == 0) throw ValidationError("train: patience must be positive");
  if (patience > max_epochs) throw ValidationError("train: patience must not exceed max_epochs");
  if (seeds.empty()) throw ValidationError("train: need at least one seed");
  Schedule s = schedule;
  if (s.horizon == 0) s.horizon = 1;
  s.validate();
}

Schedule TrainConfig::resolved_schedule(std::size_t steps_per_epoch) const {
  Schedule s = schedule;
  if (s.horizon == 0) {
    s.horizon = s.updates_per_step() ? max_epochs * steps_per_epoch : max_epochs;
  }
  s.validate();
  return s;
}

std::string run_label(const TrainConfig& config) { return config.may_augment() ? "B+Aug" : "B"; }

bool EarlyStopping::observe(double metric) {
  ++epochs_seen_;
  if (metric > best_) {
    best_ = metric;
    best_epoch_ = epochs_seen_;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

double evaluate(const ModelParams& params, std::span<const SampleRecord> split, const ModelDims& dims,
                MetricKind metric, std::span<const std::string> answer_vocab) {
  if (split.empty()) throw ContractError("evaluate: empty split");
  const std::vector<std::size_t> predicted = predict_classes(params, dims, split);
  if (metric == MetricKind::Accuracy) {
    std::vector<std::size_t> labels;
    labels.reserve(split.size());
    for (const SampleRecord& r : split) labels.push_back(r.answer_id);
    return accuracy(predicted, labels);
  }
  if (answer_vocab.size() != dims.num_classes) {
    throw ContractError("evaluate: CIDEr needs an answer vocabulary of " + std::to_string(dims.num_classes) +
                        " entries");
  }
  std::vector<std::string> candidates;
  std::vector<std::vector<std::string>> references;
  candidates.reserve(split.size());
  references.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    candidates.push_back(answer_vocab[predicted[i]]);
    references.push_back(split_references(split[i].answer_text));
  }
  return cider(candidates, references);
}

namespace {

struct Group {
  std::vector<std::size_t> rows;  // record indices
  std::vector<std::vector<std::size_t>> paraphrase_idx;
};

Tensor stack_rows(const std::vector<SampleRecord>& records, const std::vector<std::size_t>& rows,
                  std::size_t width, const std::vector<double> SampleRecord::*field) {
  Tensor t(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& v = records[rows[r]].*field;
    std::copy(v.begin(), v.end(), t.data().begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  return t;
}

// Mean cross-entropy of one branch group, scaled by its share of the batch.
Var group_loss(Tape& tape, const ParamVars& p, const std::vector<SampleRecord>& records, const Group& g,
               std::size_t slots, const ModelDims& dims, double share) {
  const Var images = tape.constant(stack_rows(records, g.rows, dims.d_img, &SampleRecord::image_embed));
  const Var questions = tape.constant(stack_rows(records, g.rows, dims.d_text, &SampleRecord::question_embed));
  std::vector<Var> slot_vars;
  for (std::size_t s = 0; s < slots; ++s) {
    Tensor slot(g.rows.size(), dims.d_text);
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      const auto& v = records[g.rows[r]].paraphrase_pool[g.paraphrase_idx[r][s]];
      std::copy(v.begin(), v.end(), slot.data().begin() + static_cast<std::ptrdiff_t>(r * dims.d_text));
    }
    slot_vars.push_back(tape.constant(std::move(slot)));
  }
  std::vector<std::size_t> labels;
  labels.reserve(g.rows.size());
  for (std::size_t i : g.rows) labels.push_back(records[i].answer_id);
  const Var logits = forward_rows(tape, p, images, questions, slot_vars);
  return tape.scale(tape.softmax_cross_entropy(logits, labels), share);
}

std::string diag(std::size_t epoch, std::size_t batch) {
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
}

}  // namespace

TrainOutput train_one(const DatasetSplits& data, const ModelDims& dims, const TrainConfig& config,
                      std::uint64_t seed, const TrainHooks& hooks) {
  dims.validate();
  config.validate();
  const auto& train = data.train;
  if (train.empty()) throw ContractError("train_one: empty train split");
  if (data.dev.empty() && !hooks.dev_metric) throw ContractError("train_one: empty dev split");
  validate_records(data.header, train);
  if (data.header.d_img != dims.d_img || data.header.d_text != dims.d_text ||
      data.header.num_classes != dims.num_classes) {
    throw DimensionError("train_one: dataset dims (d_img=" + std::to_string(data.header.d_img) +
                         ", d_text=" + std::to_string(data.header.d_text) +
                         ", C=" + std::to_string(data.header.num_classes) + ") do not match model dims");
  }
  if (config.may_augment()) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train[i].paraphrase_pool.size() < config.n_paraphrases) {
        throw PoolExhaustedError("record " + train[i].id + " has " +
                                 std::to_string(train[i].paraphrase_pool.size()) + " paraphrases, " +
                                 std::to_string(config.n_paraphrases) + " requested");
      }
    }
  }

  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const Schedule schedule = config.resolved_schedule(steps_per_epoch);

  ModelParams params = init_params(dims, derive_seed(seed, kInitStream));
  const std::uint64_t shuffle_seed = derive_seed(seed, kShuffleStream);
  Rng gate_rng(derive_seed(seed, kGateStream));
  Rng paraphrase_rng(derive_seed(seed, kParaphraseStream));
  AdamW optimizer(config.optimizer);
  EarlyStopping stopper(config.patience);

  std::vector<std::string> names(ModelParams::kNames, ModelParams::kNames + ModelParams::kCount);
  TrainOutput out;
  out.result.seed = seed;
  out.best_params = params;
  round_to_f32(out.best_params);

  std::uint64_t step = 0;
  for (std::size_t e = 0; e < config.max_epochs; ++e) {
    const std::size_t epoch = e + 1;
    const auto started = std::chrono::steady_clock::now();
    const auto batches = batch_iter(train.size(), config.batch_size, e, shuffle_seed);

    double loss_total = 0.0;
    double threshold_weighted = 0.0;
    std::size_t augmented = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      const double t = threshold_at(schedule, e, step);
      threshold_weighted += t * static_cast<double>(batch.size());

      Group aug, raw;
      for (std::size_t idx : batch) {
        // One gate draw per sample, even when the threshold is 0 or 1.
        const GateDecision d = gate(t, gate_rng);
        if (d.branch == Branch::Augmented && config.n_paraphrases > 0) {
          aug.rows.push_back(idx);
          aug.paraphrase_idx.push_back(
              sample_paraphrase_indices(train[idx].paraphrase_pool.size(), config.n_paraphrases, paraphrase_rng));
        } else {
          raw.rows.push_back(idx);
        }
      }
      augmented += aug.rows.size();

      Tape tape;
      const ParamVars p = bind_params(tape, params, true);
      const double m = static_cast<double>(batch.size());
      std::vector<Var> parts;
      if (!aug.rows.empty()) {
        parts.push_back(group_loss(tape, p, train, aug, config.n_paraphrases, dims,
                                   static_cast<double>(aug.rows.size()) / m));
      }
      if (!raw.rows.empty()) {
        parts.push_back(group_loss(tape, p, train, raw, 0, dims, static_cast<double>(raw.rows.size()) / m));
      }
      const Var loss = parts.size() == 2 ? tape.add(parts[0], parts[1]) : parts[0];
      const double loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) {
        throw TrainingError("non-finite loss at " + diag(epoch, b + 1) + " (seed " + std::to_string(seed) + ")");
      }
      tape.backward(loss);

      std::array<Tensor*, ModelParams::kCount> targets{};
      std::array<const Tensor*, ModelParams::kCount> grads{};
      for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
        targets[i] = &params.at(i);
        grads[i] = &tape.grad(p.at(i));
      }
      try {
        optimizer.step(targets, grads, names);
      } catch (const TrainingError& err) {
        throw TrainingError(std::string(err.what()) + " at " + diag(epoch, b + 1) + " (seed " +
                            std::to_string(seed) + ")");
      }
      loss_total += loss_value * m;
      ++step;
    }

    ModelParams snapshot = params;
    round_to_f32(snapshot);
    const double dev = hooks.dev_metric
                           ? hooks.dev_metric(snapshot, epoch)
                           : evaluate(snapshot, data.dev, dims, config.metric, data.header.answer_vocab);

    EpochLog log;
    log.epoch = epoch;
    log.t_thresh = schedule.updates_per_step() ? threshold_weighted / static_cast<double>(train.size())
                                               : threshold_at(schedule, e, 0);
    log.expected_augmented = schedule.updates_per_step() ? threshold_weighted
                                                         : log.t_thresh * static_cast<double>(train.size());
    log.train_loss = loss_total / static_cast<double>(train.size());
    log.dev_metric = dev;
    log.augmented_count = augmented;
    log.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started)
                      .count();
    out.result.epochs.push_back(log);
    log::debug("seed " + std::to_string(seed) + " epoch " + std::to_string(epoch) +
               ": loss=" + std::to_string(log.train_loss) + " dev=" + std::to_string(dev) +
               " t=" + std::to_string(log.t_thresh) + " aug=" + std::to_string(augmented));

    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, snapshot);
    if (stopper.observe(dev)) out.best_params = std::move(snapshot);
    if (stopper.should_stop()) break;
  }

  out.result.best_epoch = stopper.best_epoch();
  out.result.best_dev_metric = stopper.best();
  out.result.test_metric = data.test.empty()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : evaluate(out.best_params, data.test, dims, config.metric, data.header.answer_vocab);
  return out;
}

void RunResult::aggregate() {
  std::vector<double> values;
  failures = 0;
  for (const SeedResult& s : seeds) {
    if (s.ok) {
      values.push_back(s.test_metric);
    } else {
      ++failures;
    }
  }
  if (values.empty()) {
    mean = stddev = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  stddev = std::sqrt(sq / static_cast<double>(values.size()));
}

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", mean, stddev);
  return buf;
}

std::string RunResult::summary() const { return format_mean_std(mean, stddev); }

RunResult run_experiment(const DatasetSplits& data, const ModelDims& dims, const TrainConfig& config,
                         std::size_t jobs, const SeedCallback& on_seed) {
  config.validate();
  RunResult run;
  run.seeds.resize(config.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      const std::uint64_t seed = config.seeds[i];
      try {
        TrainOutput trained = train_one(data, dims, config, seed);
        run.seeds[i] = trained.result;
        log::info("seed " + std::to_string(seed) + ": best epoch " + std::to_string(trained.result.best_epoch) +
                  ", test " + to_string(config.metric) + " " + std::to_string(trained.result.test_metric));
        if (on_seed) {
          std::lock_guard lock(callback_mutex);
          on_seed(trained);
        }
      } catch (const std::exception& e) {
        run.seeds[i].seed = seed;
        run.seeds[i].ok = false;
        run.seeds[i].error = e.what();
        log::error("seed " + std::to_string(seed) + " failed: " + e.what());
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, config.seeds.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  run.aggregate();
  return run;
}

}  // namespace cavq
