#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cavq/curriculum.hpp"
#include "cavq/dataset.hpp"
#include "cavq/model.hpp"
#include "cavq/optim.hpp"

namespace cavq {

enum class MetricKind { Accuracy, Cider };

std::string to_string(MetricKind kind);
MetricKind parse_metric_kind(const std::string& name);

struct TrainConfig {
  AdamWConfig optimizer;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 40;
  std::size_t patience = 5;
  std::size_t n_paraphrases = 2;
  /// A horizon of 0 means "whole run": max_epochs for per-epoch schedules and
  /// max_epochs * steps_per_epoch for the cosine schedule.
  Schedule schedule{ScheduleKind::LinearPerEpoch, 0.8, 0.4, 0};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  MetricKind metric = MetricKind::Accuracy;

  void validate() const;
  /// True when the schedule can ever select the augmented branch.
  bool may_augment() const noexcept { return n_paraphrases > 0 && schedule.t_max > 0.0; }
  /// Schedule with its horizon filled in for a given epoch length.
  Schedule resolved_schedule(std::size_t steps_per_epoch) const;
};

/// "B" for plain baseline training, "B+Aug" when augmentation can occur.
std::string run_label(const TrainConfig& config);

/// Patience-based stopping on a metric to be maximized. A tie with the best
/// value does not count as improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records one epoch's metric; returns true if it is a new best.
  bool observe(double metric);
  bool should_stop() const noexcept { return epochs_seen_ > 0 && bad_epochs_ >= patience_; }

  double best() const noexcept { return best_; }
  /// 1-based epoch of the best value, 0 before any observation.
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  std::size_t epochs_seen() const noexcept { return epochs_seen_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epochs_seen_ = 0;
  std::size_t bad_epochs_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double t_thresh = 0.0;
  double expected_augmented = 0.0;
  double train_loss = 0.0;
  double dev_metric = 0.0;
  std::size_t augmented_count = 0;
  std::int64_t wall_ms = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_dev_metric = 0.0;
  double test_metric = 0.0;
  bool ok = true;
  std::string error;
};

struct TrainOutput {
  /// Parameters from the best dev epoch, rounded to f32 as in checkpoints.
  ModelParams best_params;
  SeedResult result;
};

/// Test seams for the training loop.
struct TrainHooks {
  /// Replaces dev-split evaluation; receives the 1-based epoch.
  std::function<double(const ModelParams&, std::size_t epoch)> dev_metric;
  /// Called after each epoch with the (f32-rounded) parameters evaluated.
  std::function<void(std::size_t epoch, const ModelParams&)> on_epoch_end;
};

/// Evaluates on the raw branch only.
double evaluate(const ModelParams& params, std::span<const SampleRecord> split, const ModelDims& dims,
                MetricKind metric, std::span<const std::string> answer_vocab);

/// One seeded training run. The outcome is a deterministic function of
/// (data, dims, config, seed). Throws PoolExhaustedError before the first
/// epoch and TrainingError on a non-finite loss or gradient.
TrainOutput train_one(const DatasetSplits& data, const ModelDims& dims, const TrainConfig& config,
                      std::uint64_t seed, const TrainHooks& hooks = {});

struct RunResult {
  std::vector<SeedResult> seeds;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t failures = 0;

  /// Recomputes mean and population std of the test metric over successful
  /// seeds. Values are summed in sorted order, so seed order never matters.
  void aggregate();
  /// "0.5554 ± 0.0043"
  std::string summary() const;
};

std::string format_mean_std(double mean, double stddev);

/// Called once per finished seed, serialized by the runner.
using SeedCallback = std::function<void(const TrainOutput&)>;

/// Runs every seed, up to `jobs` in parallel. A failing seed is recorded in
/// its SeedResult and does not stop the others.
RunResult run_experiment(const DatasetSplits& data, const ModelDims& dims, const TrainConfig& config,
                         std::size_t jobs = 1, const SeedCallback& on_seed = {});

}  // namespace cavq
