#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "rtopt/error.hpp"

namespace rtopt {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written with memcpy");

/// Appends little-endian scalars and arrays to a byte buffer.
class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto old = buf_.size();
    buf_.resize(old + sizeof(T));
    std::memcpy(buf_.data() + old, &value, sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    const auto old = buf_.size();
    buf_.resize(old + values.size_bytes());
    if (!values.empty()) std::memcpy(buf_.data() + old, values.data(), values.size_bytes());
  }

  void put_bytes(std::span<const std::uint8_t> bytes) { put_array(bytes); }
  void put_string(std::string_view s) {
    put_bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }

  /// Overwrites a previously written u32/u64 slot, e.g. a length prefix.
  template <typename T>
  void patch(std::size_t offset, T value) {
    std::memcpy(buf_.data() + offset, &value, sizeof(T));
  }

  std::size_t size() const noexcept { return buf_.size(); }
  std::vector<std::uint8_t>& bytes() noexcept { return buf_; }
  std::vector<std::uint8_t> release() noexcept { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked cursor over a byte span. Truncation throws ParseError with the offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes, std::size_t base_offset = 0)
      : bytes_(bytes), base_(base_offset) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  std::vector<T> get_array(std::uint64_t count) {
    if (count > remaining() / sizeof(T)) fail("array of " + std::to_string(count) + " elements");
    std::vector<T> out(count);
    if (count != 0) std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(T));
    pos_ += count * sizeof(T);
    return out;
  }

  std::span<const std::uint8_t> get_bytes(std::size_t count) {
    require(count);
    auto out = bytes_.subspan(pos_, count);
    pos_ += count;
    return out;
  }

  std::string get_string(std::size_t count) {
    auto b = get_bytes(count);
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
  }

  std::size_t position() const noexcept { return base_ + pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::ParseError,
                "byte offset " + std::to_string(position()) + ": truncated or invalid " + what);
  }

 private:
  void require(std::size_t n) const {
    if (n > remaining()) fail(std::to_string(n) + "-byte field");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

}  // namespace rtopt
