#pragma once

#include <cstdint>
#include <vector>

#include "vtok/codebook.hpp"
#include "vtok/tensor.hpp"

namespace vtok {

enum class TokenDistribution { kUniform, kZipf };

struct SyntheticSpec {
  TokenDistribution dist = TokenDistribution::kUniform;
  double zipf_s = 1.0;
  std::uint64_t n_images = 1000;
  std::uint16_t side = 32;
  std::uint16_t vocab = 391;
  std::uint64_t seed = 0;
};

/// Reproducible token corpus. Zipf ranks are scattered over code ids by a
/// seeded permutation so popularity remapping has work to do.
std::vector<TokenGrid> generate_corpus(const SyntheticSpec& spec);

/// Standard-normal codebook of the given shape.
Codebook synthetic_codebook(Eigen::Index dim, Eigen::Index vocab,
                            std::uint64_t seed);

std::vector<std::uint16_t> synthetic_labels(std::uint64_t n,
                                            std::uint16_t classes,
                                            std::uint64_t seed);

}  // namespace vtok
