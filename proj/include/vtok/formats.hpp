#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vtok/adapter.hpp"
#include "vtok/codebook.hpp"
#include "vtok/tensor.hpp"

namespace vtok {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);

// --- Tensor dump -------------------------------------------------------------
// A dump is a sequence of records: u32 shape[4] | f32 x prod(shape), all
// little-endian.

struct TensorRecord {
  std::array<std::uint32_t, 4> shape{};
  std::vector<float> data;

  std::size_t elements() const {
    return std::size_t{shape[0]} * shape[1] * shape[2] * shape[3];
  }
};

void append_tensor(std::vector<std::uint8_t>& out,
                   const std::array<std::uint32_t, 4>& shape,
                   std::span<const float> data);
/// Single tensor as [1, C, H, W].
void append_tensor(std::vector<std::uint8_t>& out, const EmbeddingTensor& t);
/// Throws FormatError on a truncated or inconsistent record.
std::vector<TensorRecord> parse_tensors(std::span<const std::uint8_t> bytes);

// --- Adapter weights -------------------------------------------------------------
// Weight record [d_V, d_c, kernel, kernel] then bias record [d_V, 1, 1, 1].

std::vector<std::uint8_t> serialize_adapter(const StemAdapter<float>& a);
StemAdapter<float> parse_adapter(std::span<const std::uint8_t> bytes);

// --- Raw token corpus ------------------------------------------------------------
// u64 N | u16 n | u16 V | N*n*n u16 tokens, row-major per grid.

struct RawTokens {
  std::uint16_t side = 0;
  std::uint16_t vocab = 0;
  std::vector<TokenGrid> grids;
};

std::vector<std::uint8_t> serialize_raw_tokens(const RawTokens& raw);
/// Throws FormatError on size mismatches or tokens >= V.
RawTokens parse_raw_tokens(std::span<const std::uint8_t> bytes);

// --- Codebook file ----------------------------------------------------------------
// u32 d_c | u32 V | f32 x d_c*V, column-major by code.

std::vector<std::uint8_t> serialize_codebook(const Codebook& cb);
Codebook parse_codebook(std::span<const std::uint8_t> bytes);

// --- Labels file -------------------------------------------------------------------
// N x u16, no header.

std::vector<std::uint8_t> serialize_labels(std::span<const std::uint16_t> labels);
std::vector<std::uint16_t> parse_labels(std::span<const std::uint8_t> bytes);

/// 64-bit FNV-1a, for reproducibility checks.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

}  // namespace vtok
