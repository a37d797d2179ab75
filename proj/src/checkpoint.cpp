#include "cavq/checkpoint.hpp"

#include <array>

#include "cavq/binary_io.hpp"
#include "cavq/errors.hpp"

namespace cavq {

namespace {
constexpr std::string_view kMagic = "CAVCKPT";
}

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params, const ModelDims& dims,
                                            const nlohmann::json& metadata) {
  params.check_shapes(dims);
  io::ByteWriter w;
  w.raw(kMagic);
  w.u16(kCheckpointVersion);
  for (std::size_t v : {dims.d, dims.d_img, dims.d_text, dims.d_k, dims.num_classes}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.str(metadata.dump());
  for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
    const Tensor& t = params.at(i);
    w.str(ModelParams::kNames[i]);
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    w.f32_array(t.data());
  }
  w.u64(w.size());
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kPreamble = 7 + 2;
  if (bytes.size() < kPreamble) throw FormatError("checkpoint: file too short for magic and version");
  io::ByteReader rd(bytes);
  if (rd.raw(kMagic.size()) != kMagic) throw FormatError("checkpoint: bad magic bytes");
  const std::uint16_t version = rd.u16();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  if (bytes.size() < kPreamble + 8) throw IntegrityError("checkpoint: missing length trailer");
  const std::size_t payload = bytes.size() - 8;
  io::ByteReader trailer(bytes.subspan(payload));
  const std::uint64_t recorded = trailer.u64();
  if (recorded != payload) {
    throw IntegrityError("checkpoint: length trailer says " + std::to_string(recorded) + " bytes, found " +
                         std::to_string(payload));
  }

  io::ByteReader body(bytes.first(payload));
  body.raw(kPreamble);
  Checkpoint ck;
  try {
    ck.dims.d = body.u32();
    ck.dims.d_img = body.u32();
    ck.dims.d_text = body.u32();
    ck.dims.d_k = body.u32();
    ck.dims.num_classes = body.u32();
    ck.metadata = nlohmann::json::parse(body.str());

    std::array<bool, ModelParams::kCount> seen{};
    while (!body.at_end()) {
      const std::string name = body.str();
      const std::size_t rows = body.u32();
      const std::size_t cols = body.u32();
      Tensor t(rows, cols);
      body.f32_array(t.data());
      std::size_t slot = ModelParams::kCount;
      for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
        if (ModelParams::kNames[i] == name) slot = i;
      }
      if (slot == ModelParams::kCount) throw FormatError("checkpoint: unknown matrix '" + name + "'");
      if (seen[slot]) throw FormatError("checkpoint: duplicate matrix '" + name + "'");
      seen[slot] = true;
      ck.params.at(slot) = std::move(t);
    }
    for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
      if (!seen[i]) throw FormatError("checkpoint: missing matrix '" + std::string(ModelParams::kNames[i]) + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  ck.dims.validate();
  ck.params.check_shapes(ck.dims);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const ModelDims& dims,
                     const nlohmann::json& metadata) {
  io::write_file_atomic(path, encode_checkpoint(params, dims, metadata));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace cavq
