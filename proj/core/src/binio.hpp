#pragma once

// Little-endian binary framing shared by the embedding cache, tensor dumps
// and factor dumps: 8-byte magic, u32 version, u64 entry count, then entries
// each followed by a CRC32 of their payload bytes.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <zlib.h>

#include "matu/errors.hpp"

namespace matu::binio {

// Accumulates one entry's bytes so the CRC covers exactly what was written.
class EntryWriter {
public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(const void* p, std::size_t n) { raw(p, n); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  void finish(std::ostream& out) {
    const auto crc = static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()),
                static_cast<uInt>(buf_.size())));
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    buf_.clear();
  }

private:
  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

// Reads one entry while accumulating bytes for CRC verification.
class EntryReader {
public:
  explicit EntryReader(std::istream& in) : in_(in) {
    start_ = static_cast<std::uint64_t>(in.tellg());
  }

  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  float f32() { return scalar<float>(); }
  double f64() { return scalar<double>(); }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw CorruptCacheFile(offset(), "truncated entry");
    buf_.insert(buf_.end(), static_cast<char*>(p),
                static_cast<char*>(p) + n);
  }

  std::string str(std::size_t max_len = 1 << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) throw CorruptCacheFile(offset(), "string length too large");
    std::string s(n, '\0');
    if (n > 0) bytes(s.data(), n);
    return s;
  }

  // Verifies the trailing CRC32 against everything read by this reader.
  void verify_crc() {
    std::uint32_t stored = 0;
    in_.read(reinterpret_cast<char*>(&stored), sizeof stored);
    if (!in_) throw CorruptCacheFile(offset(), "missing entry checksum");
    const auto computed = static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()),
                static_cast<uInt>(buf_.size())));
    if (stored != computed)
      throw CorruptCacheFile(start_, "entry checksum mismatch");
  }

  std::uint64_t offset() const {
    return start_ + static_cast<std::uint64_t>(buf_.size());
  }

private:
  template <typename T>
  T scalar() {
    T v{};
    bytes(&v, sizeof v);
    return v;
  }

  std::istream& in_;
  std::uint64_t start_ = 0;
  std::vector<char> buf_;
};

inline void write_header(std::ostream& out, const char magic[8],
                         std::uint32_t version, std::uint64_t count) {
  out.write(magic, 8);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
}

inline std::uint64_t read_header(std::istream& in, const char magic[8],
                                 std::uint32_t expected_version) {
  char got[8] = {};
  in.read(got, 8);
  if (!in || std::memcmp(got, magic, 8) != 0)
    throw CorruptCacheFile(0, "bad magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != expected_version)
    throw CorruptCacheFile(8, "unsupported version");
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in) throw CorruptCacheFile(12, "truncated header");
  return count;
}

}  // namespace matu::binio
