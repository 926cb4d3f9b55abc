#pragma once

// Little-endian primitive encoding shared by the feature-file and snapshot
// formats. Independent of host byte order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nonpsa/error.hpp"

namespace nonpsa::detail {

class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(std::byte{v}); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
  void put_bytes(std::string_view s) {
    for (char c : s) buf_.push_back(static_cast<std::byte>(c));
  }
  void reserve(std::size_t n) { buf_.reserve(n); }

  [[nodiscard]] std::vector<std::byte>& bytes() noexcept { return buf_; }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
  }
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(get_le(1, what)); }
  std::uint16_t u16(std::string_view what) { return static_cast<std::uint16_t>(get_le(2, what)); }
  std::uint32_t u32(std::string_view what) { return static_cast<std::uint32_t>(get_le(4, what)); }
  std::uint64_t u64(std::string_view what) { return get_le(8, what); }
  float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
  std::string str(std::size_t n, std::string_view what) {
    need(n, what);
    std::string out(n, '\0');
    std::memcpy(out.data(), bytes_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  void need(std::size_t n, std::string_view what) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::TruncatedFile, "truncated while reading " + std::string(what) +
                                         " at byte offset " + std::to_string(pos_) + " (need " +
                                         std::to_string(n) + ", have " +
                                         std::to_string(bytes_.size() - pos_) + ")");
    }
  }

  [[nodiscard]] std::size_t offset() const noexcept { return pos_; }
  [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::uint64_t get_le(int width, std::string_view what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// see either the old or the new contents, never a torn file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace nonpsa::detail
