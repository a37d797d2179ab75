#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavq/model.hpp"

namespace cavq {

// Layout (little-endian):
//   "CAVCKPT" | u16 version | dims: u32 d, d_img, d_text, d_k, C
//   | u32 length + UTF-8 JSON metadata
//   | per matrix: u32 name length, name, u32 rows, u32 cols, rows*cols f32
//   | u64 count of all preceding bytes
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  ModelDims dims;
  nlohmann::json metadata = nlohmann::json::object();
};

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params, const ModelDims& dims,
                                            const nlohmann::json& metadata);
/// Validates magic, version and the length trailer before parsing anything.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic: the file either keeps its previous content or holds the new one.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const ModelDims& dims,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cavq
