#include "cavq/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cavq/errors.hpp"

namespace cavq {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Fixed: return "fixed";
    case ScheduleKind::LinearPerEpoch: return "linear";
    case ScheduleKind::CosinePerStep: return "cosine";
  }
  return "fixed";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "fixed") return ScheduleKind::Fixed;
  if (name == "linear") return ScheduleKind::LinearPerEpoch;
  if (name == "cosine") return ScheduleKind::CosinePerStep;
  throw ValidationError("unknown schedule kind '" + name + "' (expected fixed, linear or cosine)");
}

void Schedule::validate() const {
  if (!(t_min >= 0.0 && t_max <= 1.0 && t_min <= t_max)) {
    throw ValidationError("schedule: need 0 <= t_min <= t_max <= 1 (got t_max=" + std::to_string(t_max) +
                          ", t_min=" + std::to_string(t_min) + ")");
  }
  if (horizon < 1) throw ValidationError("schedule: horizon must be at least 1");
  if (kind == ScheduleKind::Fixed && t_max != t_min) {
    throw ValidationError("schedule: fixed schedule needs t_max == t_min");
  }
}

double threshold_at(const Schedule& s, std::uint64_t epoch, std::uint64_t step) {
  switch (s.kind) {
    case ScheduleKind::Fixed:
      return s.t_max;
    case ScheduleKind::LinearPerEpoch: {
      if (epoch >= s.horizon) return s.t_min;
      const double decrement = (s.t_max - s.t_min) / static_cast<double>(s.horizon);
      return std::max(s.t_max - decrement * static_cast<double>(epoch), s.t_min);
    }
    case ScheduleKind::CosinePerStep: {
      if (step == 0) return s.t_max;
      if (step >= s.horizon) return s.t_min;
      const double progress = static_cast<double>(step) / static_cast<double>(s.horizon);
      const double t = s.t_min + 0.5 * (s.t_max - s.t_min) * (1.0 + std::cos(std::numbers::pi * progress));
      return std::clamp(t, s.t_min, s.t_max);
    }
  }
  return s.t_min;
}

GateDecision gate(double t_thresh, Rng& rng) {
  GateDecision d;
  d.draw = rng.uniform();
  d.branch = d.draw < t_thresh ? Branch::Augmented : Branch::Raw;
  return d;
}

std::vector<TraceRow> schedule_trace(const Schedule& schedule, std::uint64_t steps_per_epoch,
                                     double samples_per_epoch) {
  schedule.validate();
  if (steps_per_epoch == 0) throw ContractError("schedule_trace: steps_per_epoch must be positive");
  std::vector<TraceRow> rows;
  if (schedule.updates_per_step()) {
    const double per_step = samples_per_epoch / static_cast<double>(steps_per_epoch);
    rows.reserve(schedule.horizon + 1);
    for (std::uint64_t step = 0; step <= schedule.horizon; ++step) {
      const double t = threshold_at(schedule, 0, step);
      rows.push_back({step / steps_per_epoch, step, t, t * per_step});
    }
  } else {
    rows.reserve(schedule.horizon + 1);
    for (std::uint64_t epoch = 0; epoch <= schedule.horizon; ++epoch) {
      const double t = threshold_at(schedule, epoch, 0);
      rows.push_back({epoch, epoch * steps_per_epoch, t, t * samples_per_epoch});
    }
  }
  return rows;
}

std::vector<double> expected_per_epoch(const std::vector<TraceRow>& trace, const Schedule& schedule,
                                       std::uint64_t steps_per_epoch) {
  std::vector<double> totals;
  if (!schedule.updates_per_step()) {
    for (const TraceRow& r : trace) totals.push_back(r.expected_augmented);
    return totals;
  }
  // The final row marks the end of training and trains no samples.
  for (const TraceRow& r : trace) {
    if (r.step >= schedule.horizon) break;
    const std::uint64_t epoch = r.step / steps_per_epoch;
    if (totals.size() <= epoch) totals.resize(epoch + 1, 0.0);
    totals[epoch] += r.expected_augmented;
  }
  return totals;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "epoch,step,t_thresh,expected_augmented\n";
  for (const TraceRow& r : trace) {
    // Shortest round-trip formatting keeps the CSV lossless and locale-free.
    out << r.epoch << ',' << r.step << ',' << nlohmann::json(r.t_thresh).dump() << ','
        << nlohmann::json(r.expected_augmented).dump() << '\n';
  }
  return out.str();
}

}  // namespace cavq
