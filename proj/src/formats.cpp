#include "vtok/formats.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "vtok/byte_io.hpp"
#include "vtok/error.hpp"

namespace vtok {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (is.bad()) throw IoError("read failed on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed on " + path.string());
}

void append_tensor(std::vector<std::uint8_t>& out,
                   const std::array<std::uint32_t, 4>& shape,
                   std::span<const float> data) {
  const std::size_t n = std::size_t{shape[0]} * shape[1] * shape[2] * shape[3];
  if (n != data.size()) {
    throw InputError("tensor data size does not match its shape");
  }
  ByteWriter w(out);
  for (auto s : shape) w.put(s);
  out.reserve(out.size() + 4 * n);
  for (float f : data) w.put(f);
}

void append_tensor(std::vector<std::uint8_t>& out, const EmbeddingTensor& t) {
  append_tensor(out,
                {1, static_cast<std::uint32_t>(t.channels()),
                 static_cast<std::uint32_t>(t.height),
                 static_cast<std::uint32_t>(t.width)},
                {t.data.data(), static_cast<std::size_t>(t.data.size())});
}

std::vector<TensorRecord> parse_tensors(std::span<const std::uint8_t> bytes) {
  std::vector<TensorRecord> out;
  ByteReader r(bytes);
  while (r.remaining() > 0) {
    TensorRecord rec;
    for (auto& s : rec.shape) s = r.get<std::uint32_t>("tensor shape");
    const std::size_t n = rec.elements();
    if (n > r.remaining() / 4) {
      throw FormatError("tensor record claims more data than the file holds");
    }
    rec.data.resize(n);
    for (auto& f : rec.data) f = r.get<float>("tensor data");
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::uint8_t> serialize_adapter(const StemAdapter<float>& a) {
  const auto k = static_cast<std::uint32_t>(a.kernel());
  const auto dv = static_cast<std::uint32_t>(a.out_channels);
  const auto dc = static_cast<std::uint32_t>(a.in_channels);
  // Row-major (o, c, ky, kx) order.
  std::vector<float> w;
  w.reserve(a.weights.size());
  for (Eigen::Index o = 0; o < a.weights.rows(); ++o) {
    for (Eigen::Index j = 0; j < a.weights.cols(); ++j) {
      w.push_back(a.weights(o, j));
    }
  }
  std::vector<std::uint8_t> out;
  append_tensor(out, {dv, dc, k, k}, w);
  append_tensor(out, {dv, 1, 1, 1},
                {a.bias.data(), static_cast<std::size_t>(a.bias.size())});
  return out;
}

StemAdapter<float> parse_adapter(std::span<const std::uint8_t> bytes) {
  const auto recs = parse_tensors(bytes);
  if (recs.size() != 2) {
    throw FormatError("adapter file must hold a weight and a bias record");
  }
  const auto& ws = recs[0].shape;
  const auto& bs = recs[1].shape;
  if (ws[2] != ws[3] || bs[0] != ws[0] || bs[1] != 1 || bs[2] != 1 ||
      bs[3] != 1) {
    throw FormatError("adapter records have inconsistent shapes");
  }
  StemAdapter<float> a;
  switch (ws[2]) {
    case 4: a.variant = StemVariant::kConv4; break;
    case 2: a.variant = StemVariant::kConv2; break;
    case 1: a.variant = StemVariant::kPointwise; break;
    default:
      throw FormatError("unsupported adapter kernel " + std::to_string(ws[2]));
  }
  a.out_channels = ws[0];
  a.in_channels = ws[1];
  const Eigen::Index taps = Eigen::Index{ws[1]} * ws[2] * ws[3];
  a.weights.resize(ws[0], taps);
  for (Eigen::Index o = 0; o < a.weights.rows(); ++o) {
    for (Eigen::Index j = 0; j < taps; ++j) {
      a.weights(o, j) = recs[0].data[o * taps + j];
    }
  }
  a.bias = Eigen::Map<const Eigen::VectorXf>(recs[1].data.data(), ws[0]);
  return a;
}

std::vector<std::uint8_t> serialize_raw_tokens(const RawTokens& raw) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(static_cast<std::uint64_t>(raw.grids.size()));
  w.put(raw.side);
  w.put(raw.vocab);
  for (const auto& g : raw.grids) {
    if (g.rows() != raw.side || g.cols() != raw.side) {
      throw InputError("grid shape does not match the declared side");
    }
    for (Eigen::Index k = 0; k < g.size(); ++k) w.put(g.data()[k]);
  }
  return out;
}

RawTokens parse_raw_tokens(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  RawTokens raw;
  const auto n = r.get<std::uint64_t>("record count");
  raw.side = r.get<std::uint16_t>("grid side");
  raw.vocab = r.get<std::uint16_t>("vocabulary size");
  if (raw.side == 0 || raw.vocab == 0) {
    throw FormatError("raw token header has a zero side or vocabulary");
  }
  const std::uint64_t per = 2ull * raw.side * raw.side;
  if (r.remaining() % per != 0 || r.remaining() / per != n) {
    throw FormatError("raw token payload of " + std::to_string(r.remaining()) +
                      " bytes does not hold " + std::to_string(n) + " grids");
  }
  raw.grids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    TokenGrid g(raw.side, raw.side);
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      const auto t = r.get<std::uint16_t>("tokens");
      if (t >= raw.vocab) {
        throw FormatError("grid " + std::to_string(i) + " holds token " +
                          std::to_string(t) + " >= V");
      }
      g.data()[k] = t;
    }
    raw.grids.push_back(std::move(g));
  }
  return raw;
}

std::vector<std::uint8_t> serialize_codebook(const Codebook& cb) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(static_cast<std::uint32_t>(cb.dim()));
  w.put(static_cast<std::uint32_t>(cb.size()));
  for (Eigen::Index k = 0; k < cb.size(); ++k) {
    for (Eigen::Index d = 0; d < cb.dim(); ++d) w.put(cb.vectors()(d, k));
  }
  return out;
}

Codebook parse_codebook(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto dim = r.get<std::uint32_t>("codebook d_c");
  const auto vocab = r.get<std::uint32_t>("codebook V");
  if (std::uint64_t{dim} * vocab * 4 != r.remaining()) {
    throw FormatError("codebook payload size does not match d_c x V");
  }
  Eigen::MatrixXf v(dim, vocab);
  for (Eigen::Index k = 0; k < v.cols(); ++k) {
    for (Eigen::Index d = 0; d < v.rows(); ++d) {
      v(d, k) = r.get<float>("codebook vectors");
    }
  }
  try {
    return Codebook(std::move(v));
  } catch (const InputError& e) {
    throw FormatError(std::string("codebook file: ") + e.what());
  }
}

std::vector<std::uint8_t> serialize_labels(std::span<const std::uint16_t> labels) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  for (auto l : labels) w.put(l);
  return out;
}

std::vector<std::uint16_t> parse_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 2 != 0) throw FormatError("labels file has odd length");
  ByteReader r(bytes);
  std::vector<std::uint16_t> out(bytes.size() / 2);
  for (auto& l : out) l = r.get<std::uint16_t>("labels");
  return out;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace vtok
