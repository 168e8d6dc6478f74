#pragma once

#include "tacrefine/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace tacrefine::io {

static_assert(std::endian::native == std::endian::little,
              "binary containers are written little-endian");

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large buffers.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

/// 64-bit FNV-1a. Used for config and parameter fingerprints.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }

  void put_bytes(std::span<const std::uint8_t> bytes) {
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
  }

  void put_doubles(std::span<const double> values) {
    for (double v : values) put(v);
  }

  std::size_t size() const { return buf_.size(); }
  std::string_view view() const {
    return {reinterpret_cast<const char*>(buf_.data()), buf_.size()};
  }

  /// Appends the CRC32 of everything written so far and writes the file.
  void finish(const std::filesystem::path& path) {
    const std::uint32_t crc = crc32_of(buf_);
    put(crc);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
  }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader over a whole file. The constructor verifies the
/// trailing CRC32 before any field is decoded.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open for reading: " + path_);
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (buf_.size() < sizeof(std::uint32_t)) {
      throw Error(ErrorCode::truncated,
                  path_ + ": truncated at offset " + std::to_string(buf_.size()) +
                      " (file shorter than checksum trailer)");
    }
    end_ = buf_.size() - sizeof(std::uint32_t);
    std::uint32_t stored = 0;
    std::memcpy(&stored, buf_.data() + end_, sizeof stored);
    const std::uint32_t actual =
        crc32_of(std::span<const std::uint8_t>(buf_.data(), end_));
    if (stored != actual) {
      throw Error(ErrorCode::checksum,
                  path_ + ": checksum mismatch over bytes [0, " + std::to_string(end_) +
                      "), trailer at offset " + std::to_string(end_));
    }
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void get_bytes(std::span<std::uint8_t> out) {
    require(out.size());
    std::memcpy(out.data(), buf_.data() + pos_, out.size());
    pos_ += out.size();
  }

  void get_doubles(std::span<double> out) {
    for (double& v : out) v = get<double>();
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return end_ - pos_; }
  const std::string& path() const { return path_; }

  void expect_end() const {
    if (pos_ != end_) {
      throw Error(ErrorCode::format, path_ + ": " + std::to_string(end_ - pos_) +
                                         " unexpected trailing bytes at offset " +
                                         std::to_string(pos_));
    }
  }

  [[noreturn]] void fail(ErrorCode code, const std::string& what, std::size_t at) const {
    throw Error(code, path_ + ": " + what + " at offset " + std::to_string(at));
  }

 private:
  void require(std::size_t n) const {
    if (pos_ + n > end_) {
      throw Error(ErrorCode::truncated, path_ + ": truncated at offset " + std::to_string(pos_) +
                                            " (need " + std::to_string(n) + " bytes)");
    }
  }

  std::string path_;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

}  // namespace tacrefine::io
