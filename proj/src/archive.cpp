#include "vtok/archive.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>

#include "vtok/byte_io.hpp"
#include "vtok/error.hpp"

namespace vtok {

void StorageReport::write_kv(std::ostream& os) const {
  const auto old_precision = os.precision(10);
  os << "n_records=" << n_records << '\n'
     << "total_bytes=" << total_bytes << '\n'
     << "index_bytes=" << index_bytes << '\n'
     << "bytes_per_record_uint16=" << bytes_per_record_uint16 << '\n'
     << "bytes_per_record_escape=" << bytes_per_record_escape << '\n'
     << "bytes_per_record_huffman=" << bytes_per_record_huffman << '\n'
     << "bytes_per_record_optimal=" << bytes_per_record_optimal << '\n'
     << "bytes_per_record_entropy=" << bytes_per_record_entropy << '\n'
     << "entropy_bits=" << entropy_bits << '\n'
     << "escape_byte_entropy_bits=" << escape_byte_entropy_bits << '\n';
  os.precision(old_precision);
}

namespace {

StorageReport make_report(std::uint64_t n_records, std::uint16_t side,
                          std::uint16_t vocab, std::uint64_t total_bytes,
                          std::uint64_t escape_bytes,
                          std::uint64_t payload_bytes,
                          const std::vector<std::uint64_t>& token_counts,
                          std::span<const std::uint64_t> byte_counts) {
  StorageReport r;
  const double tokens = double(side) * side;
  r.n_records = n_records;
  r.total_bytes = total_bytes;
  r.index_bytes = 8 * (n_records + 1);
  r.bytes_per_record_uint16 = 2.0 * tokens;
  r.bytes_per_record_optimal = tokens * std::log2(double(vocab)) / 8.0;
  if (n_records > 0) {
    r.bytes_per_record_escape = double(escape_bytes) / n_records;
    r.bytes_per_record_huffman = double(payload_bytes) / n_records;
    r.entropy_bits = entropy(token_counts);
    r.escape_byte_entropy_bits = entropy(byte_counts);
    r.bytes_per_record_entropy = tokens * r.entropy_bits / 8.0;
  }
  return r;
}

void validate_grid(const TokenGrid& g, std::size_t index, std::uint16_t side,
                   std::size_t vocab) {
  if (g.rows() != side || g.cols() != side) {
    throw InputError("record " + std::to_string(index) + " has shape " +
                     std::to_string(g.rows()) + "x" + std::to_string(g.cols()) +
                     ", expected " + std::to_string(side) + "x" +
                     std::to_string(side));
  }
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    if (g.data()[k] >= vocab) {
      throw InputError("record " + std::to_string(index) + " holds token " +
                       std::to_string(g.data()[k]) + " >= V=" +
                       std::to_string(vocab));
    }
  }
}

std::span<const Token> tokens_of(const TokenGrid& g) {
  return {g.data(), static_cast<std::size_t>(g.size())};
}

}  // namespace

PackedArchive pack_archive(std::span<const TokenGrid> records,
                           const Codebook& cb,
                           std::optional<std::span<const std::uint16_t>> labels,
                           const WriteOptions& opts) {
  if (cb.size() > 65535 || cb.dim() > 65535) {
    throw InputError("codebook shape does not fit the 16-bit header fields");
  }
  const auto vocab = static_cast<std::uint16_t>(cb.size());
  const std::uint16_t side =
      records.empty() ? opts.empty_side
                      : static_cast<std::uint16_t>(records.front().rows());
  if (side == 0) throw InputError("grid side must be positive");
  if (labels && labels->size() != records.size()) {
    throw InputError("label count " + std::to_string(labels->size()) +
                     " does not match record count " +
                     std::to_string(records.size()));
  }

  // Pass 1: popularity.
  TokenCounter counter(vocab);
  for (std::size_t i = 0; i < records.size(); ++i) {
    validate_grid(records[i], i, side, vocab);
    counter.add(tokens_of(records[i]));
  }
  PopularityPermutation pop = rank_by_popularity(counter.counts());
  if (!opts.remap) std::iota(pop.perm.begin(), pop.perm.end(), Token{0});

  // Remapped escape streams and their byte histogram.
  std::vector<std::vector<std::uint8_t>> escaped(records.size());
  std::array<std::uint64_t, 256> byte_counts{};
  std::vector<Token> remapped;
  std::uint64_t escape_total = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto src = tokens_of(records[i]);
    remapped.resize(src.size());
    for (std::size_t k = 0; k < src.size(); ++k) remapped[k] = pop.perm[src[k]];
    escaped[i] = escape_encode(remapped);
    for (std::uint8_t b : escaped[i]) ++byte_counts[b];
    escape_total += escaped[i].size();
  }

  HuffmanTable table;
  const bool huffman = opts.huffman && escape_total > 0;
  if (huffman) table = huffman_build(byte_counts);

  // Pass 2: records and offsets.
  std::vector<std::uint8_t> payload;
  std::vector<std::uint64_t> offsets{0};
  offsets.reserve(records.size() + 1);
  for (const auto& esc : escaped) {
    if (huffman) {
      const auto bits = huffman_encode(esc, table);
      payload.insert(payload.end(), bits.bytes.begin(), bits.bytes.end());
    } else {
      payload.insert(payload.end(), esc.begin(), esc.end());
    }
    offsets.push_back(payload.size());
  }

  ArchiveHeader h;
  h.flags = (huffman ? kHuffman : 0) | (labels ? kHasLabels : 0) |
            (opts.remap ? kHasPermutation : 0);
  h.vocab = vocab;
  h.dim = static_cast<std::uint16_t>(cb.dim());
  h.side = side;
  h.records = records.size();

  PackedArchive out;
  auto& bytes = out.bytes;
  ByteWriter w(bytes);
  for (char c : kArchiveMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(h.version);
  w.put(h.escape_bits);
  w.put(h.flags);
  w.put(h.vocab);
  w.put(h.dim);
  w.put(h.side);
  w.put(std::uint16_t{0});
  w.put(h.records);
  for (Eigen::Index k = 0; k < cb.size(); ++k) {
    for (Eigen::Index d = 0; d < cb.dim(); ++d) w.put(cb.vectors()(d, k));
  }
  if (opts.remap) {
    for (Token p : pop.perm) w.put(p);
  }
  w.put_bytes(table.lengths());
  if (labels) {
    for (std::uint16_t l : *labels) w.put(l);
  }
  for (std::uint64_t o : offsets) w.put(o);
  w.put_bytes(payload);

  std::vector<std::uint64_t> ranked_counts(vocab);
  for (std::size_t k = 0; k < vocab; ++k) {
    ranked_counts[pop.perm[k]] = counter.counts()[k];
  }
  out.report = make_report(records.size(), side, vocab, bytes.size(),
                           escape_total, payload.size(), ranked_counts,
                           byte_counts);
  return out;
}

StorageReport write_archive(const std::filesystem::path& path,
                            std::span<const TokenGrid> records,
                            const Codebook& cb,
                            std::optional<std::span<const std::uint16_t>> labels,
                            const WriteOptions& opts) {
  auto packed = pack_archive(records, cb, labels, opts);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(packed.bytes.data()),
           static_cast<std::streamsize>(packed.bytes.size()));
  if (!os) {
    throw IoError("write failed on " + path.string() + " near byte " +
                  std::to_string(static_cast<long long>(os.tellp())));
  }
  return packed.report;
}

// ---------------------------------------------------------------------------

namespace {

class FileSource final : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) {
      throw IoError("cannot open " + path.string() + ": " +
                    std::strerror(errno));
    }
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
      ::close(fd_);
      throw IoError("cannot stat " + path.string());
    }
    size_ = static_cast<std::uint64_t>(st.st_size);
  }
  ~FileSource() override { ::close(fd_); }
  FileSource(const FileSource&) = delete;
  FileSource& operator=(const FileSource&) = delete;

  std::uint64_t size() const override { return size_; }

  void read(std::uint64_t offset, std::span<std::uint8_t> out) const override {
    if (offset > size_ || out.size() > size_ - offset) {
      throw FormatError("read of " + std::to_string(out.size()) +
                        " bytes at " + std::to_string(offset) +
                        " runs past the end of " + path_.string());
    }
    std::size_t done = 0;
    while (done < out.size()) {
      const ssize_t got = ::pread(fd_, out.data() + done, out.size() - done,
                                  static_cast<off_t>(offset + done));
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) {
        throw IoError("read failed on " + path_.string() + " at byte " +
                      std::to_string(offset + done));
      }
      done += static_cast<std::size_t>(got);
    }
  }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t size_ = 0;
};

class MemorySource final : public ByteSource {
 public:
  explicit MemorySource(std::vector<std::uint8_t> bytes)
      : bytes_(std::move(bytes)) {}
  std::uint64_t size() const override { return bytes_.size(); }
  void read(std::uint64_t offset, std::span<std::uint8_t> out) const override {
    if (offset > bytes_.size() || out.size() > bytes_.size() - offset) {
      throw FormatError("read past the end of the archive at byte " +
                        std::to_string(offset));
    }
    std::memcpy(out.data(), bytes_.data() + offset, out.size());
  }

 private:
  std::vector<std::uint8_t> bytes_;
};

}  // namespace

std::shared_ptr<const ByteSource> file_source(const std::filesystem::path& path) {
  return std::make_shared<FileSource>(path);
}

std::shared_ptr<const ByteSource> memory_source(std::vector<std::uint8_t> bytes) {
  return std::make_shared<MemorySource>(std::move(bytes));
}

TokenArchive TokenArchive::open(std::shared_ptr<const ByteSource> source) {
  const std::uint64_t file_size = source->size();
  if (file_size < kHeaderSize) {
    throw FormatError("file of " + std::to_string(file_size) +
                      " bytes is too short for the archive header");
  }
  std::vector<std::uint8_t> head(kHeaderSize);
  source->read(0, head);
  ByteReader hr(head);

  TokenArchive a;
  auto& h = a.header_;
  for (char c : kArchiveMagic) {
    if (hr.get<std::uint8_t>("magic") != static_cast<std::uint8_t>(c)) {
      throw FormatError("bad magic: not a token archive");
    }
  }
  h.version = hr.get<std::uint16_t>("version");
  if (h.version != kArchiveVersion) {
    throw FormatError("unsupported version " + std::to_string(h.version));
  }
  h.escape_bits = hr.get<std::uint8_t>("M");
  if (h.escape_bits != kEscapeBits) {
    throw FormatError("unsupported M " + std::to_string(h.escape_bits));
  }
  h.flags = hr.get<std::uint8_t>("flags");
  if (h.flags & ~(kHuffman | kHasLabels | kHasPermutation)) {
    throw FormatError("unknown flag bits " + std::to_string(h.flags));
  }
  h.vocab = hr.get<std::uint16_t>("V");
  h.dim = hr.get<std::uint16_t>("d_c");
  h.side = hr.get<std::uint16_t>("n");
  hr.get<std::uint16_t>("reserved");
  h.records = hr.get<std::uint64_t>("N");
  if (h.vocab == 0) throw FormatError("V must be positive");
  if (h.dim == 0) throw FormatError("d_c must be positive");
  if (h.side == 0) throw FormatError("n must be positive");

  // Everything but the payload, sized before allocating.
  const std::uint64_t fixed = std::uint64_t{4} * h.dim * h.vocab +
                              (h.has_permutation() ? 2ull * h.vocab : 0) + 256;
  const std::uint64_t room = file_size - kHeaderSize;
  const std::uint64_t per_record = 8 + (h.has_labels() ? 2 : 0);
  if (fixed + 8 > room || h.records > (room - fixed - 8) / per_record) {
    throw FormatError("truncated: N=" + std::to_string(h.records) +
                      " does not fit in " + std::to_string(file_size) +
                      " bytes");
  }
  const std::uint64_t meta_size = fixed + 8 + per_record * h.records;
  std::vector<std::uint8_t> meta(meta_size);
  source->read(kHeaderSize, meta);
  ByteReader r(meta);

  Eigen::MatrixXf vectors(h.dim, h.vocab);
  for (Eigen::Index k = 0; k < h.vocab; ++k) {
    for (Eigen::Index d = 0; d < h.dim; ++d) {
      vectors(d, k) = r.get<float>("codebook");
    }
  }
  try {
    a.codebook_ = Codebook(std::move(vectors));
  } catch (const InputError& e) {
    throw FormatError(std::string("codebook: ") + e.what());
  }

  a.perm_.resize(h.vocab);
  if (h.has_permutation()) {
    std::vector<bool> seen(h.vocab, false);
    for (auto& p : a.perm_) {
      p = r.get<std::uint16_t>("permutation");
      if (p >= h.vocab || seen[p]) {
        throw FormatError("permutation is not a bijection on [0, V)");
      }
      seen[p] = true;
    }
  } else {
    std::iota(a.perm_.begin(), a.perm_.end(), Token{0});
  }
  a.inverse_perm_.resize(h.vocab);
  for (std::size_t k = 0; k < h.vocab; ++k) a.inverse_perm_[a.perm_[k]] = k;
  a.ranked_codebook_ = a.codebook_.permuted(a.perm_);

  HuffmanTable::Lengths lengths;
  const auto lbytes = r.get_bytes(256, "huffman lengths");
  std::copy(lbytes.begin(), lbytes.end(), lengths.begin());
  a.huffman_ = HuffmanTable::from_lengths(lengths);
  if (h.huffman() && h.records > 0 && a.huffman_.empty()) {
    throw FormatError("huffman flag set but code lengths are all zero");
  }

  if (h.has_labels()) {
    a.labels_.resize(h.records);
    for (auto& l : a.labels_) l = r.get<std::uint16_t>("labels");
  }

  a.offsets_.resize(h.records + 1);
  for (auto& o : a.offsets_) o = r.get<std::uint64_t>("offsets");
  a.payload_start_ = kHeaderSize + meta_size;
  const std::uint64_t payload_size = file_size - a.payload_start_;
  if (a.offsets_.front() != 0) throw FormatError("offsets[0] is not 0");
  for (std::size_t i = 1; i < a.offsets_.size(); ++i) {
    if (a.offsets_[i] < a.offsets_[i - 1]) {
      throw FormatError("offsets decrease at entry " + std::to_string(i));
    }
  }
  if (a.offsets_.back() != payload_size) {
    throw FormatError("offsets[N]=" + std::to_string(a.offsets_.back()) +
                      " does not match payload length " +
                      std::to_string(payload_size));
  }
  a.source_ = std::move(source);
  return a;
}

TokenArchive open_archive(const std::filesystem::path& path) {
  return TokenArchive::open(file_source(path));
}

TokenGrid TokenArchive::read_image(std::uint64_t i, IndexSpace space) const {
  if (i >= header_.records) {
    throw IndexError("record " + std::to_string(i) + " out of range [0, " +
                     std::to_string(header_.records) + ")");
  }
  std::vector<std::uint8_t> bytes(offsets_[i + 1] - offsets_[i]);
  source_->read(payload_start_ + offsets_[i], bytes);

  const std::size_t count = header_.tokens_per_record();
  std::vector<Token> tokens;
  try {
    tokens = header_.huffman() ? decode_image(bytes, huffman_, count)
                               : decode_escaped_image(bytes, count);
  } catch (const TruncationError& e) {
    throw CorruptionError("record " + std::to_string(i) + ": " + e.what());
  } catch (const CorruptionError& e) {
    throw CorruptionError("record " + std::to_string(i) + ": " + e.what());
  }

  TokenGrid grid(header_.side, header_.side);
  for (std::size_t k = 0; k < count; ++k) {
    const Token t = tokens[k];
    if (t >= header_.vocab) {
      throw CorruptionError("record " + std::to_string(i) + " holds token " +
                            std::to_string(t) + " >= V");
    }
    grid.data()[k] = space == IndexSpace::kRanked ? t : inverse_perm_[t];
  }
  return grid;
}

std::optional<std::uint16_t> TokenArchive::label(std::uint64_t i) const {
  if (i >= header_.records) {
    throw IndexError("record " + std::to_string(i) + " out of range");
  }
  if (!header_.has_labels()) return std::nullopt;
  return labels_[i];
}

ArchiveRecord TokenArchive::read(std::uint64_t i, IndexSpace space) const {
  return {read_image(i, space), label(i)};
}

StorageReport stats(const TokenArchive& archive) {
  const auto& h = archive.header();
  std::vector<std::uint64_t> token_counts(h.vocab, 0);
  std::array<std::uint64_t, 256> byte_counts{};
  std::uint64_t escape_total = 0;
  std::vector<std::uint8_t> esc;
  for (std::uint64_t i = 0; i < archive.size(); ++i) {
    const TokenGrid g = archive.read_image(i);
    esc.clear();
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      ++token_counts[g.data()[k]];
      escape_append(g.data()[k], esc);
    }
    for (std::uint8_t b : esc) ++byte_counts[b];
    escape_total += esc.size();
  }
  return make_report(archive.size(), h.side, h.vocab, archive.file_size(),
                     escape_total, archive.offsets().back(), token_counts,
                     byte_counts);
}

}  // namespace vtok
