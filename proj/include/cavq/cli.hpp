#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cavq/training.hpp"

namespace cavq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the `cavq` tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

enum class SweepKind { FixedThreshold, NParaphrases, Schedule };

SweepKind parse_sweep_kind(const std::string& name);
std::string to_string(SweepKind kind);

struct SweepPoint {
  std::string setting;
  TrainConfig config;
};

/// Sweep rows built from a base configuration: six fixed thresholds, n in
/// 0..3, or nine linear plus five cosine t_max/t_min pairs.
std::vector<SweepPoint> sweep_points(SweepKind kind, const TrainConfig& base);

}  // namespace cavq::cli
