#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "cavq/dataset.hpp"
#include "cavq/model.hpp"
#include "cavq/training.hpp"

namespace cavq {

/// On-disk experiment description. TOML sections: [synthetic], [dims],
/// [train], [schedule], [paths]. Every key is optional; missing keys keep
/// the defaults below.
struct ExperimentConfig {
  SyntheticSpec synthetic;
  std::uint64_t generation_seed = 0;
  /// Hidden size; d_img, d_text and C come from the dataset header.
  std::size_t hidden = 512;
  TrainConfig train;
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "runs";

  /// Model dims for a dataset with the given header.
  ModelDims dims_for(const DatasetHeader& header) const;
};

/// Parses a TOML file. Relative paths resolve against the file's directory.
/// Throws ConfigError naming the offending key.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});

}  // namespace cavq
