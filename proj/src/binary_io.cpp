#include "cavq/binary_io.hpp"

#include <fstream>
#include <system_error>

namespace cavq::io {

namespace {
PreRenameHook& pre_rename_hook() {
  static PreRenameHook hook;
  return hook;
}
}  // namespace

void set_pre_rename_hook(PreRenameHook hook) { pre_rename_hook() = std::move(hook); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

void ByteWriter::f32_array(std::span<const double> values) {
  for (double v : values) f32(static_cast<float>(v));
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw IntegrityError("unexpected end of data at byte " + std::to_string(pos_) + " (need " +
                         std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
  }
}

std::string ByteReader::raw(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string ByteReader::str() { return raw(u32()); }

void ByteReader::f32_array(std::span<double> out) {
  need(out.size() * 4);
  for (double& v : out) v = static_cast<double>(f32());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw ParseError("short read from " + path.string());
  }
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot open " + tmp.string() + " for writing");
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      out.flush();
      if (!out) throw Error("write failed for " + tmp.string());
    }
    if (pre_rename_hook()) pre_rename_hook()(tmp);
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace cavq::io
