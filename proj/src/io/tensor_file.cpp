// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dmla/data_io.hpp"

namespace dmla {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string encode_tensor(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("refusing to write a non-finite tensor");
  }
  std::string out = "DMLT";
  put_u32(out, kTensorFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  out.reserve(out.size() + 8 * t.numel());
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Tensor decode_tensor(const std::string& bytes) {
  if (bytes.size() < 4) throw FormatError("truncated tensor header", bytes.size());
  if (bytes.compare(0, 4, "DMLT") != 0) throw FormatError("bad magic", 0);
  if (bytes.size() < 8) throw FormatError("truncated tensor header", bytes.size());
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported tensor format version " + std::to_string(version), 4);
  }
  if (bytes.size() < 12) throw FormatError("truncated tensor header", bytes.size());
  const auto rank = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (rank == 0) throw FormatError("tensor rank must be positive", 8);
  std::size_t offset = 12;
  if (bytes.size() < offset + 4ull * rank) throw FormatError("truncated extents", bytes.size());
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i, offset += 4) {
    const auto e = static_cast<std::size_t>(get_le(bytes, offset, 4));
    if (e == 0) throw FormatError("zero extent", offset);
    shape.push_back(e);
  }
  const std::size_t n = shape_numel(shape);
  if (bytes.size() < offset + 8 * n) throw FormatError("truncated tensor data", bytes.size());
  if (bytes.size() > offset + 8 * n) throw FormatError("trailing bytes after tensor data", offset + 8 * n);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i, offset += 8) data[i] = std::bit_cast<double>(get_le(bytes, offset, 8));
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const fs::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor read_tensor(const fs::path& path) {
  try {
    return decode_tensor(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace dmla
