#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "vtok/codebook.hpp"
#include "vtok/codec.hpp"
#include "vtok/tensor.hpp"

namespace vtok {

// Version-1 layout, all integers little-endian:
//
//   "STOK" | version u16 | M u8 | flags u8 | V u16 | d_c u16 | n u16 |
//   reserved u16 | N u64                                   (24-byte header)
//   codebook      f32 x d_c*V, column-major by code (original code order)
//   permutation   u16 x V            (flag kHasPermutation; original -> rank)
//   huffman       u8 x 256           (code lengths; all zero if unused)
//   labels        u16 x N            (flag kHasLabels)
//   offsets       u64 x (N+1)        (relative to payload start)
//   payload

inline constexpr char kArchiveMagic[4] = {'S', 'T', 'O', 'K'};
inline constexpr std::uint16_t kArchiveVersion = 1;
inline constexpr std::size_t kHeaderSize = 24;

enum ArchiveFlags : std::uint8_t {
  kHuffman = 1u << 0,
  kHasLabels = 1u << 1,
  kHasPermutation = 1u << 2,
};

struct ArchiveHeader {
  std::uint16_t version = kArchiveVersion;
  std::uint8_t escape_bits = kEscapeBits;
  std::uint8_t flags = 0;
  std::uint16_t vocab = 0;
  std::uint16_t dim = 0;
  std::uint16_t side = 0;
  std::uint64_t records = 0;

  bool huffman() const { return flags & kHuffman; }
  bool has_labels() const { return flags & kHasLabels; }
  bool has_permutation() const { return flags & kHasPermutation; }
  std::size_t tokens_per_record() const {
    return std::size_t{side} * side;
  }
};

/// Storage accounting across encodings. Per-record values are means in bytes.
struct StorageReport {
  std::uint64_t n_records = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t index_bytes = 0;
  double bytes_per_record_uint16 = 0;
  double bytes_per_record_escape = 0;
  double bytes_per_record_huffman = 0;
  /// n^2 log2(V) / 8: uniform-population optimum.
  double bytes_per_record_optimal = 0;
  /// n^2 H(p) / 8 with p the empirical token distribution.
  double bytes_per_record_entropy = 0;
  double entropy_bits = 0;
  double escape_byte_entropy_bits = 0;

  /// Line-delimited key=value.
  void write_kv(std::ostream& os) const;
};

struct WriteOptions {
  bool remap = true;
  bool huffman = true;
  /// Grid side recorded for an empty archive.
  std::uint16_t empty_side = 32;
};

struct PackedArchive {
  std::vector<std::uint8_t> bytes;
  StorageReport report;
};

/// Two passes: popularity and byte statistics, then remapped, escape-coded,
/// Huffman-compressed records. Throws InputError on ragged grids, tokens
/// >= V, or a label count that differs from the record count.
PackedArchive pack_archive(std::span<const TokenGrid> records,
                           const Codebook& cb,
                           std::optional<std::span<const std::uint16_t>> labels,
                           const WriteOptions& opts = {});

/// pack_archive to a file. Throws IoError on write failure.
StorageReport write_archive(const std::filesystem::path& path,
                            std::span<const TokenGrid> records,
                            const Codebook& cb,
                            std::optional<std::span<const std::uint16_t>> labels,
                            const WriteOptions& opts = {});

/// Random-access bytes. Implementations must allow concurrent read() calls.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::uint64_t size() const = 0;
  /// Fills out from [offset, offset + out.size()); throws FormatError if the
  /// range is past the end and IoError on a read failure.
  virtual void read(std::uint64_t offset, std::span<std::uint8_t> out) const = 0;
};

std::shared_ptr<const ByteSource> file_source(const std::filesystem::path& path);
std::shared_ptr<const ByteSource> memory_source(std::vector<std::uint8_t> bytes);

enum class IndexSpace { kRanked, kOriginal };

struct ArchiveRecord {
  TokenGrid grid;
  std::optional<std::uint16_t> label;
};

/// Immutable after open; read_image may be called from many threads.
class TokenArchive {
 public:
  /// Throws FormatError naming the offending field for a bad magic, version,
  /// header field, truncated section, or inconsistent offset index.
  static TokenArchive open(std::shared_ptr<const ByteSource> source);

  const ArchiveHeader& header() const { return header_; }
  std::uint64_t size() const { return header_.records; }
  std::uint16_t side() const { return header_.side; }

  /// Codebook in original code order, as stored.
  const Codebook& codebook() const { return codebook_; }
  /// Codebook reordered so column r is the code with rank r.
  const Codebook& ranked_codebook() const { return ranked_codebook_; }
  /// original -> rank (identity when the archive was not remapped).
  const std::vector<Token>& permutation() const { return perm_; }
  const HuffmanTable& huffman() const { return huffman_; }
  std::span<const std::uint64_t> offsets() const { return offsets_; }
  const std::vector<std::uint16_t>& labels() const { return labels_; }
  std::uint64_t payload_start() const { return payload_start_; }
  std::uint64_t file_size() const { return source_->size(); }

  /// Decodes only bytes [offset[i], offset[i+1]) of the payload. Throws
  /// IndexError for i >= size() and CorruptionError if the record is bad.
  TokenGrid read_image(std::uint64_t i,
                       IndexSpace space = IndexSpace::kRanked) const;
  ArchiveRecord read(std::uint64_t i,
                     IndexSpace space = IndexSpace::kRanked) const;
  std::optional<std::uint16_t> label(std::uint64_t i) const;

 private:
  TokenArchive() = default;

  std::shared_ptr<const ByteSource> source_;
  ArchiveHeader header_;
  Codebook codebook_;
  Codebook ranked_codebook_;
  std::vector<Token> perm_;
  std::vector<Token> inverse_perm_;
  HuffmanTable huffman_;
  std::vector<std::uint16_t> labels_;
  std::vector<std::uint64_t> offsets_;
  std::uint64_t payload_start_ = 0;
};

TokenArchive open_archive(const std::filesystem::path& path);

/// Full-scan accounting of an archive.
StorageReport stats(const TokenArchive& archive);

}  // namespace vtok
