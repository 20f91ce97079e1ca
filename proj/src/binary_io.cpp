#include "cvrank/binary_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvrank/error.hpp"

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

namespace cvrank {

namespace io {

namespace {

template <typename T>
void append_raw(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

}  // namespace

void ByteWriter::put_bytes(std::string_view bytes) { buf_.append(bytes); }
void ByteWriter::put_u8(std::uint8_t v) { append_raw(buf_, v); }
void ByteWriter::put_u32(std::uint32_t v) { append_raw(buf_, v); }
void ByteWriter::put_u64(std::uint64_t v) { append_raw(buf_, v); }
void ByteWriter::put_f32(float v) { append_raw(buf_, v); }
void ByteWriter::put_f64(double v) { append_raw(buf_, v); }

void ByteWriter::put_f32s(std::span<const float> values) {
  buf_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

void ByteReader::need(std::size_t n) {
  if (remaining() < n) {
    throw FormatError(what_ + ": truncated payload (needed " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", " + std::to_string(remaining()) + " available)");
  }
}

std::string_view ByteReader::get_bytes(std::size_t n) {
  need(n);
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

namespace {

template <typename T>
T read_raw(ByteReader& r) {
  T v;
  std::memcpy(&v, r.get_bytes(sizeof(T)).data(), sizeof(T));
  return v;
}

}  // namespace

std::uint8_t ByteReader::get_u8() { return read_raw<std::uint8_t>(*this); }
std::uint32_t ByteReader::get_u32() { return read_raw<std::uint32_t>(*this); }
std::uint64_t ByteReader::get_u64() { return read_raw<std::uint64_t>(*this); }
float ByteReader::get_f32() { return read_raw<float>(*this); }
double ByteReader::get_f64() { return read_raw<double>(*this); }

void ByteReader::get_f32s(std::span<float> out) {
  auto bytes = get_bytes(out.size_bytes());
  std::memcpy(out.data(), bytes.data(), bytes.size());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path + "'");
  return std::move(ss).str();
}

void write_file(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + target.parent_path().string() + "': " + ec.message());
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace io
}  // namespace cvrank
