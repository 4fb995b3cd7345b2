#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vtok/tensor.hpp"

namespace vtok {

// ---------------------------------------------------------------------------
// Escape-byte encoding. A value i is written as floor(i / 255) escape bytes
// (255) followed by the remainder byte i mod 255. Every value below 255 takes
// one byte, [255, 510) takes two.

inline constexpr std::uint8_t kEscapeByte = 255;
inline constexpr int kEscapeBits = 8;

void escape_append(std::uint32_t value, std::vector<std::uint8_t>& out);
std::vector<std::uint8_t> escape_encode(std::span<const Token> tokens);
/// Throws InputError on a negative value.
std::vector<std::uint8_t> escape_encode(std::span<const std::int64_t> values);
/// Encoded length without materializing the bytes.
std::size_t escaped_size(std::span<const Token> tokens);

/// Incremental inverse of escape_append.
class EscapeDecoder {
 public:
  /// Feeds one byte; returns a value once its terminating byte arrives.
  std::optional<std::uint32_t> push(std::uint8_t byte) {
    if (byte == kEscapeByte) {
      acc_ += kEscapeByte;
      return std::nullopt;
    }
    const std::uint32_t v = acc_ + byte;
    acc_ = 0;
    return v;
  }
  bool mid_escape() const { return acc_ != 0; }

 private:
  std::uint32_t acc_ = 0;
};

/// Throws TruncationError when the stream ends inside an escape run and
/// CorruptionError for a value beyond the 16-bit token range.
std::vector<Token> escape_decode(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Entropy

/// Shannon entropy in bits of the normalized counts. Throws InputError when
/// every count is zero.
double entropy(std::span<const std::uint64_t> counts);

// ---------------------------------------------------------------------------
// Canonical Huffman over the 256 byte symbols. Codes are assigned in
// (length, symbol) order and written most-significant-bit first.

inline constexpr int kMaxCodeLength = 32;

class HuffmanTable {
 public:
  using Lengths = std::array<std::uint8_t, 256>;

  HuffmanTable() = default;
  /// Throws FormatError if a length exceeds kMaxCodeLength or the lengths
  /// violate the Kraft inequality.
  static HuffmanTable from_lengths(const Lengths& lengths);

  const Lengths& lengths() const { return lengths_; }
  std::uint8_t length(std::uint8_t symbol) const { return lengths_[symbol]; }
  std::uint32_t code(std::uint8_t symbol) const { return codes_[symbol]; }
  bool empty() const { return symbols_.empty(); }

  /// Weighted length sum(count * length) in bits.
  std::uint64_t weighted_length(std::span<const std::uint64_t> counts) const;

  friend bool operator==(const HuffmanTable& a, const HuffmanTable& b) {
    return a.lengths_ == b.lengths_;
  }

 private:
  friend class HuffmanDecoder;

  Lengths lengths_{};
  std::array<std::uint32_t, 256> codes_{};
  std::array<std::uint16_t, kMaxCodeLength + 1> count_per_length_{};
  int max_length_ = 0;
  std::vector<std::uint8_t> symbols_;  // sorted by (length, symbol)
};

/// Optimal code lengths for the counts (single-symbol alphabets get length
/// 1). Throws InputError when all counts are zero.
HuffmanTable huffman_build(std::span<const std::uint64_t, 256> counts);

struct BitStream {
  std::vector<std::uint8_t> bytes;  // zero-padded final byte
  std::uint64_t bit_length = 0;
};

/// Throws TableMismatchError for a symbol without a code.
BitStream huffman_encode(std::span<const std::uint8_t> bytes,
                         const HuffmanTable& table);
/// Throws TruncationError if the stream ends before expected_len symbols and
/// CorruptionError on a bit pattern that is not a code.
std::vector<std::uint8_t> huffman_decode(std::span<const std::uint8_t> bits,
                                         const HuffmanTable& table,
                                         std::size_t expected_len);

/// MSB-first symbol reader over one byte-aligned bitstream.
class HuffmanDecoder {
 public:
  HuffmanDecoder(std::span<const std::uint8_t> bits, const HuffmanTable& table)
      : bits_(bits), table_(&table) {}

  std::uint8_t next();
  std::uint64_t bits_consumed() const { return pos_; }
  std::uint64_t bits_available() const { return bits_.size() * 8; }
  /// True if every unread bit is zero.
  bool rest_is_zero() const;

 private:
  int bit() {
    if (pos_ >= bits_.size() * 8) return -1;
    const int b = (bits_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1;
    ++pos_;
    return b;
  }

  std::span<const std::uint8_t> bits_;
  const HuffmanTable* table_;
  std::uint64_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Records: escape stage then Huffman stage, one independent bitstream per
// image.

struct EncodedRecord {
  std::vector<std::uint8_t> payload;
  std::size_t escaped_length = 0;
};

EncodedRecord encode_image(std::span<const Token> tokens,
                           const HuffmanTable& table);
/// Decodes exactly token_count tokens. Anything other than < 8 zero padding
/// bits after the last token is a CorruptionError.
std::vector<Token> decode_image(std::span<const std::uint8_t> payload,
                                const HuffmanTable& table,
                                std::size_t token_count);
/// Escape-only variant for archives written without the Huffman stage.
std::vector<Token> decode_escaped_image(std::span<const std::uint8_t> payload,
                                        std::size_t token_count);

}  // namespace vtok
