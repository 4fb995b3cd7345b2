#include "vtok/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vtok/error.hpp"
#include "vtok/rng.hpp"

namespace vtok {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

}  // namespace

std::vector<TokenGrid> generate_corpus(const SyntheticSpec& spec) {
  if (spec.side == 0 || spec.vocab == 0) {
    throw InputError("synthetic corpus needs a positive side and vocabulary");
  }
  if (spec.dist == TokenDistribution::kZipf && !(spec.zipf_s >= 0.0)) {
    throw InputError("zipf exponent must be >= 0");
  }
  Rng rng(spec.seed);

  std::vector<double> cdf;
  std::vector<Token> rank_to_code(spec.vocab);
  std::iota(rank_to_code.begin(), rank_to_code.end(), Token{0});
  if (spec.dist == TokenDistribution::kZipf) {
    cdf.resize(spec.vocab);
    double acc = 0.0;
    for (std::size_t k = 0; k < spec.vocab; ++k) {
      // s = 1 avoids pow(), whose last-bit rounding varies across libms.
      acc += spec.zipf_s == 1.0 ? 1.0 / double(k + 1)
                                : 1.0 / std::pow(double(k + 1), spec.zipf_s);
      cdf[k] = acc;
    }
    for (auto& c : cdf) c /= acc;
    cdf.back() = 1.0;
    shuffle(rank_to_code, rng);
  }

  std::vector<TokenGrid> out;
  out.reserve(spec.n_images);
  for (std::uint64_t i = 0; i < spec.n_images; ++i) {
    TokenGrid g(spec.side, spec.side);
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      if (spec.dist == TokenDistribution::kUniform) {
        g.data()[k] = static_cast<Token>(rng.below(spec.vocab));
      } else {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const auto rank = std::min<std::size_t>(it - cdf.begin(), spec.vocab - 1);
        g.data()[k] = rank_to_code[rank];
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

Codebook synthetic_codebook(Eigen::Index dim, Eigen::Index vocab,
                            std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXf v(dim, vocab);
  for (Eigen::Index k = 0; k < vocab; ++k) {
    for (Eigen::Index d = 0; d < dim; ++d) {
      v(d, k) = static_cast<float>(rng.normal());
    }
  }
  return Codebook(std::move(v));
}

std::vector<std::uint16_t> synthetic_labels(std::uint64_t n,
                                            std::uint16_t classes,
                                            std::uint64_t seed) {
  if (classes == 0) throw InputError("label classes must be positive");
  Rng rng(seed);
  std::vector<std::uint16_t> out(n);
  for (auto& l : out) l = static_cast<std::uint16_t>(rng.below(classes));
  return out;
}

}  // namespace vtok
