#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cavq/rng.hpp"

namespace cavq {

enum class ScheduleKind { Fixed, LinearPerEpoch, CosinePerStep };

std::string to_string(ScheduleKind kind);
/// Accepts "fixed", "linear" and "cosine".
ScheduleKind parse_schedule_kind(const std::string& name);

/// Threshold policy for the easy/hard gate. The horizon is counted in epochs
/// for Fixed and LinearPerEpoch, and in optimization steps for CosinePerStep.
struct Schedule {
  ScheduleKind kind = ScheduleKind::Fixed;
  double t_max = 0.0;
  double t_min = 0.0;
  std::uint64_t horizon = 1;

  static Schedule fixed(double t, std::uint64_t horizon = 1) { return {ScheduleKind::Fixed, t, t, horizon}; }
  static Schedule linear(double t_max, double t_min, std::uint64_t epochs) {
    return {ScheduleKind::LinearPerEpoch, t_max, t_min, epochs};
  }
  static Schedule cosine(double t_max, double t_min, std::uint64_t steps) {
    return {ScheduleKind::CosinePerStep, t_max, t_min, steps};
  }

  bool updates_per_step() const noexcept { return kind == ScheduleKind::CosinePerStep; }
  void validate() const;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// Gate threshold. `epoch` counts completed epochs from 0; `step` counts
/// completed optimization steps from 0. Linear ignores `step`, cosine
/// ignores `epoch`.
///
///   linear: max(t_max - ((t_max - t_min) / T) * epoch, t_min), exactly t_min for epoch >= T
///   cosine: t_min + (t_max - t_min) * (1 + cos(pi * step / horizon)) / 2
double threshold_at(const Schedule& schedule, std::uint64_t epoch, std::uint64_t step);

enum class Branch { Raw, Augmented };

struct GateDecision {
  Branch branch = Branch::Raw;
  double draw = 0.0;
};

/// Draws x ~ U[0, 1) from exactly one rng value; Augmented iff x < t_thresh.
GateDecision gate(double t_thresh, Rng& rng);

struct TraceRow {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double t_thresh = 0.0;
  double expected_augmented = 0.0;
};

/// One row per update point. Per-epoch schedules emit epochs 0..horizon, with
/// the expected augmented count for a whole epoch. The cosine schedule emits
/// steps 0..horizon with the expected count for that step's samples.
std::vector<TraceRow> schedule_trace(const Schedule& schedule, std::uint64_t steps_per_epoch,
                                     double samples_per_epoch);

/// Per-epoch totals of expected augmented samples, summed from a trace.
std::vector<double> expected_per_epoch(const std::vector<TraceRow>& trace, const Schedule& schedule,
                                       std::uint64_t steps_per_epoch);

/// CSV with header epoch,step,t_thresh,expected_augmented.
std::string trace_to_csv(const std::vector<TraceRow>& trace);

}  // namespace cavq
