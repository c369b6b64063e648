#include "dts/binary_io.hpp"

#include <fstream>
#include <iterator>

#include "dts/error.hpp"

namespace dts {

void ByteWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
  if (!out) fail(ErrorKind::io, "short write to " + path.string());
}

ByteReader ByteReader::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ByteReader(std::move(bytes), path.string());
}

void ByteReader::raw(void* dst, std::size_t n) {
  if (n > bytes_.size() - pos_) fail(ErrorKind::io, name_ + ": truncated");
  std::memcpy(dst, bytes_.data() + pos_, n);
  pos_ += n;
}

void ByteReader::skip(std::size_t n) {
  if (n > bytes_.size() - pos_) fail(ErrorKind::io, name_ + ": truncated");
  pos_ += n;
}

std::uint32_t ByteReader::u32() {
  std::uint8_t b[4];
  raw(b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t ByteReader::u64() {
  std::uint64_t lo = u32();
  std::uint64_t hi = u32();
  return lo | (hi << 32);
}

std::string ByteReader::str() {
  std::uint32_t n = u32();
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

void ByteReader::expect_end() const {
  if (pos_ != bytes_.size()) fail(ErrorKind::io, name_ + ": trailing bytes");
}

}  // namespace dts
