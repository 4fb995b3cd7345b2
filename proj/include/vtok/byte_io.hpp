#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "vtok/error.hpp"

namespace vtok {

/// Little-endian appender.
class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
    if constexpr (std::is_same_v<T, float>) {
      std::uint32_t bits;
      std::memcpy(&bits, &value, sizeof bits);
      put(bits);
    } else {
      using U = std::make_unsigned_t<T>;
      U u = static_cast<U>(value);
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
      }
    }
  }

  void put_bytes(std::span<const std::uint8_t> bytes) {
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }

 private:
  std::vector<std::uint8_t>& out_;
};

/// Little-endian cursor over a byte span. Running off the end throws
/// FormatError naming the field being read.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* field) {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
    if constexpr (std::is_same_v<T, float>) {
      const auto bits = get<std::uint32_t>(field);
      float f;
      std::memcpy(&f, &bits, sizeof f);
      return f;
    } else {
      need(sizeof(T), field);
      using U = std::make_unsigned_t<T>;
      U u = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        u |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
      }
      pos_ += sizeof(T);
      return static_cast<T>(u);
    }
  }

  std::span<const std::uint8_t> get_bytes(std::size_t n, const char* field) {
    need(n, field);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated while reading ") + field +
                        " at byte " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace vtok
