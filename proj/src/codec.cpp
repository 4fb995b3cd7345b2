#include "vtok/codec.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "vtok/error.hpp"

namespace vtok {

void escape_append(std::uint32_t value, std::vector<std::uint8_t>& out) {
  while (value >= kEscapeByte) {
    out.push_back(kEscapeByte);
    value -= kEscapeByte;
  }
  out.push_back(static_cast<std::uint8_t>(value));
}

std::vector<std::uint8_t> escape_encode(std::span<const Token> tokens) {
  std::vector<std::uint8_t> out;
  out.reserve(escaped_size(tokens));
  for (Token t : tokens) escape_append(t, out);
  return out;
}

std::vector<std::uint8_t> escape_encode(std::span<const std::int64_t> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size());
  for (std::int64_t v : values) {
    if (v < 0) {
      throw InputError("cannot escape-encode negative index " +
                       std::to_string(v));
    }
    if (v > 0xFFFFFFFFll) throw InputError("index exceeds 32 bits");
    escape_append(static_cast<std::uint32_t>(v), out);
  }
  return out;
}

std::size_t escaped_size(std::span<const Token> tokens) {
  std::size_t n = 0;
  for (Token t : tokens) n += 1 + t / kEscapeByte;
  return n;
}

std::vector<Token> escape_decode(std::span<const std::uint8_t> bytes) {
  std::vector<Token> out;
  out.reserve(bytes.size());
  EscapeDecoder dec;
  for (std::uint8_t b : bytes) {
    if (auto v = dec.push(b)) {
      if (*v > 0xFFFF) {
        throw CorruptionError("escaped value " + std::to_string(*v) +
                              " exceeds the token range");
      }
      out.push_back(static_cast<Token>(*v));
    }
  }
  if (dec.mid_escape()) {
    throw TruncationError("escape stream ends on a dangling escape byte");
  }
  return out;
}

double entropy(std::span<const std::uint64_t> counts) {
  long double total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw InputError("entropy of an all-zero count vector");
  long double h = 0;
  for (auto c : counts) {
    if (c == 0) continue;
    const long double p = c / total;
    h -= p * std::log2(p);
  }
  return static_cast<double>(h);
}

// ---------------------------------------------------------------------------

HuffmanTable HuffmanTable::from_lengths(const Lengths& lengths) {
  HuffmanTable t;
  t.lengths_ = lengths;
  // Kraft sum scaled by 2^kMaxCodeLength.
  std::uint64_t kraft = 0;
  for (int s = 0; s < 256; ++s) {
    const int len = lengths[s];
    if (len == 0) continue;
    if (len > kMaxCodeLength) {
      throw FormatError("Huffman code length " + std::to_string(len) +
                        " for symbol " + std::to_string(s) + " exceeds " +
                        std::to_string(kMaxCodeLength));
    }
    ++t.count_per_length_[len];
    t.max_length_ = std::max(t.max_length_, len);
    kraft += std::uint64_t{1} << (kMaxCodeLength - len);
  }
  if (kraft > (std::uint64_t{1} << kMaxCodeLength)) {
    throw FormatError("Huffman code lengths violate the Kraft inequality");
  }
  for (int len = 1; len <= kMaxCodeLength; ++len) {
    for (int s = 0; s < 256; ++s) {
      if (lengths[s] == len) t.symbols_.push_back(static_cast<std::uint8_t>(s));
    }
  }
  std::uint32_t code = 0;
  int prev_len = 0;
  for (std::uint8_t s : t.symbols_) {
    const int len = lengths[s];
    code <<= (len - prev_len);
    t.codes_[s] = code++;
    prev_len = len;
  }
  return t;
}

std::uint64_t HuffmanTable::weighted_length(
    std::span<const std::uint64_t> counts) const {
  std::uint64_t bits = 0;
  for (std::size_t s = 0; s < counts.size() && s < 256; ++s) {
    bits += counts[s] * lengths_[s];
  }
  return bits;
}

namespace {

// Unconstrained Huffman code lengths. Returns the maximum length.
int huffman_lengths(std::span<const std::uint64_t, 256> counts,
                    HuffmanTable::Lengths& lengths) {
  struct Node {
    std::uint64_t weight;
    int id;
  };
  // Ties resolved by node id, so the tree is deterministic.
  auto heavier = [](const Node& a, const Node& b) {
    return a.weight != b.weight ? a.weight > b.weight : a.id > b.id;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(heavier)> heap(heavier);
  std::vector<int> parent(512, -1);
  int next_id = 256;
  for (int s = 0; s < 256; ++s) {
    if (counts[s] > 0) heap.push({counts[s], s});
  }
  lengths.fill(0);
  if (heap.size() == 1) {
    lengths[heap.top().id] = 1;
    return 1;
  }
  while (heap.size() > 1) {
    const Node a = heap.top();
    heap.pop();
    const Node b = heap.top();
    heap.pop();
    const int id = next_id++;
    parent[a.id] = id;
    parent[b.id] = id;
    heap.push({a.weight + b.weight, id});
  }
  int max_len = 0;
  for (int s = 0; s < 256; ++s) {
    if (counts[s] == 0) continue;
    int depth = 0;
    for (int p = parent[s]; p != -1; p = parent[p]) ++depth;
    lengths[s] = static_cast<std::uint8_t>(std::min(depth, 255));
    max_len = std::max(max_len, depth);
  }
  return max_len;
}

}  // namespace

HuffmanTable huffman_build(std::span<const std::uint64_t, 256> counts) {
  if (std::all_of(counts.begin(), counts.end(),
                  [](std::uint64_t c) { return c == 0; })) {
    throw InputError("cannot build a Huffman table from all-zero counts");
  }
  std::array<std::uint64_t, 256> work;
  std::copy(counts.begin(), counts.end(), work.begin());
  HuffmanTable::Lengths lengths;
  // Flatten overly skewed distributions until the depth fits.
  while (huffman_lengths(work, lengths) > kMaxCodeLength) {
    for (auto& c : work) {
      if (c > 0) c = 1 + c / 2;
    }
  }
  return HuffmanTable::from_lengths(lengths);
}

BitStream huffman_encode(std::span<const std::uint8_t> bytes,
                         const HuffmanTable& table) {
  BitStream out;
  std::uint64_t acc = 0;
  int fill = 0;
  for (std::uint8_t b : bytes) {
    const int len = table.length(b);
    if (len == 0) {
      throw TableMismatchError("symbol " + std::to_string(b) +
                               " has no Huffman code");
    }
    acc = (acc << len) | table.code(b);
    fill += len;
    out.bit_length += len;
    while (fill >= 8) {
      fill -= 8;
      out.bytes.push_back(static_cast<std::uint8_t>(acc >> fill));
    }
    acc &= (std::uint64_t{1} << fill) - 1;
  }
  if (fill > 0) {
    out.bytes.push_back(static_cast<std::uint8_t>(acc << (8 - fill)));
  }
  return out;
}

std::uint8_t HuffmanDecoder::next() {
  const auto& t = *table_;
  std::uint32_t code = 0;
  std::uint32_t first = 0;
  std::uint32_t index = 0;
  for (int len = 1; len <= t.max_length_; ++len) {
    const int b = bit();
    if (b < 0) throw TruncationError("Huffman bitstream exhausted");
    code |= static_cast<std::uint32_t>(b);
    const std::uint32_t count = t.count_per_length_[len];
    if (code - first < count) return t.symbols_[index + (code - first)];
    index += count;
    first = (first + count) << 1;
    code <<= 1;
  }
  throw CorruptionError("invalid Huffman code in bitstream");
}

bool HuffmanDecoder::rest_is_zero() const {
  for (std::uint64_t p = pos_; p < bits_.size() * 8; ++p) {
    if ((bits_[p >> 3] >> (7 - (p & 7))) & 1) return false;
  }
  return true;
}

std::vector<std::uint8_t> huffman_decode(std::span<const std::uint8_t> bits,
                                         const HuffmanTable& table,
                                         std::size_t expected_len) {
  std::vector<std::uint8_t> out;
  out.reserve(expected_len);
  HuffmanDecoder dec(bits, table);
  while (out.size() < expected_len) out.push_back(dec.next());
  return out;
}

EncodedRecord encode_image(std::span<const Token> tokens,
                           const HuffmanTable& table) {
  const auto escaped = escape_encode(tokens);
  EncodedRecord rec;
  rec.escaped_length = escaped.size();
  rec.payload = huffman_encode(escaped, table).bytes;
  return rec;
}

std::vector<Token> decode_image(std::span<const std::uint8_t> payload,
                                const HuffmanTable& table,
                                std::size_t token_count) {
  std::vector<Token> out;
  out.reserve(token_count);
  HuffmanDecoder dec(payload, table);
  EscapeDecoder esc;
  while (out.size() < token_count) {
    if (auto v = esc.push(dec.next())) {
      if (*v > 0xFFFF) throw CorruptionError("decoded token exceeds 16 bits");
      out.push_back(static_cast<Token>(*v));
    }
  }
  if (dec.bits_available() - dec.bits_consumed() >= 8 || !dec.rest_is_zero()) {
    throw CorruptionError("trailing data after the last token of a record");
  }
  return out;
}

std::vector<Token> decode_escaped_image(std::span<const std::uint8_t> payload,
                                        std::size_t token_count) {
  auto out = escape_decode(payload);
  if (out.size() != token_count) {
    throw CorruptionError("record decodes to " + std::to_string(out.size()) +
                          " tokens, expected " + std::to_string(token_count));
  }
  return out;
}

}  // namespace vtok
