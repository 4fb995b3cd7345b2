#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>

#include <Eigen/Core>

#include "vtok/codebook.hpp"
#include "vtok/error.hpp"
#include "vtok/rng.hpp"
#include "vtok/tensor.hpp"

namespace vtok {

// Token-space augmentations, applied in this order:
//   synonym replacement, square swap   (TokenGrid)
//   one_hot, random resized crop       (OneHotGrid)
//   embed                              (OneHotGrid -> EmbeddingTensor)
//   cutmix, embedding noise            (EmbeddingTensor)

struct AugmentConfig {
  double sr_prob = 0.25;
  double rs_prob = 0.25;
  std::size_t synonyms = 5;
  std::array<double, 2> rrc_scale{0.08, 1.0};
  std::array<double, 2> rrc_ratio{3.0 / 4.0, 4.0 / 3.0};
  Eigen::Index out_side = 28;
  double cutmix_alpha = 1.0;
  double cutmix_prob = 1.0;
  double noise_prob = 0.5;
  /// Unset means 0.1 x Codebook::mean_channel_stddev().
  std::optional<double> sigma_channel;
  std::optional<double> sigma_full;
  /// Divide interpolated weights by their channel sum before mixing.
  bool renormalize = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  /// Copy with default noise scales filled in from the codebook.
  AugmentConfig resolved(const Codebook& cb) const;
};

/// Running totals, for pipeline instrumentation.
struct AugmentCounters {
  std::uint64_t sr_replaced = 0;
  std::uint64_t rs_applied = 0;
  std::uint64_t rs_skipped = 0;
  std::uint64_t cutmix_applied = 0;
  std::uint64_t noise_applied = 0;

  AugmentCounters& operator+=(const AugmentCounters& o);
};

// --- Token-EDA --------------------------------------------------------------

/// Each position independently, with probability p, becomes a uniformly
/// chosen synonym. Positions whose synonym list is empty are left alone.
TokenGrid token_eda_sr(const TokenGrid& grid, const SynonymTable& syn,
                       double p, Rng& rng, AugmentCounters* counters = nullptr);

struct SquareSwap {
  Eigen::Index size = 0;
  Eigen::Index a_row = 0, a_col = 0;
  Eigen::Index b_row = 0, b_col = 0;
};

/// Side ~ U[1, n/2]; two non-overlapping corners by rejection, at most 100
/// attempts. nullopt when every attempt overlapped or n < 2.
std::optional<SquareSwap> sample_square_swap(Eigen::Index side, Rng& rng);
void apply_square_swap(TokenGrid& grid, const SquareSwap& swap);

/// With probability p swaps two equal squares. Preserves the token multiset.
TokenGrid token_eda_rs(const TokenGrid& grid, double p, Rng& rng,
                       AugmentCounters* counters = nullptr);

// --- One-hot and resized crop -------------------------------------------------

/// Throws InputError for a token >= vocab.
OneHotGrid one_hot(const TokenGrid& grid, Eigen::Index vocab);

/// Channel-wise argmax (lowest channel on ties).
TokenGrid argmax(const OneHotGrid& weights);

struct CropBox {
  Eigen::Index top = 0, left = 0, height = 0, width = 0;
};

/// Random-resized-crop box: area fraction ~ U(scale), log aspect ~
/// U(log ratio); ten tries, then the largest centered crop within ratio.
CropBox sample_rrc_box(Eigen::Index height, Eigen::Index width,
                       const std::array<double, 2>& scale,
                       const std::array<double, 2>& ratio, Rng& rng);

/// out x in bicubic interpolation matrix (Keys, a = -0.5, half-pixel
/// centers, mirrored edges). Rows sum to one.
Eigen::MatrixXd bicubic_matrix(Eigen::Index in, Eigen::Index out);

/// Crops every channel and resizes it to out_side x out_side. Interpolated
/// weights are kept raw (negative lobes included) unless renormalize is set.
OneHotGrid crop_resize(const OneHotGrid& src, const CropBox& box,
                       Eigen::Index out_side, bool renormalize = false);

OneHotGrid token_rrc(const OneHotGrid& src, const AugmentConfig& cfg,
                     Rng& rng);

// --- Embedding ------------------------------------------------------------------

/// e[:, y, x] = sum_c w[c, y, x] * cb.vectors[:, c].
template <typename Scalar>
ChannelGrid<Scalar> embed(const ChannelGrid<Scalar>& weights,
                          const Codebook& cb) {
  if (weights.channels() != cb.size()) {
    throw InputError("embed: weight channels (" +
                     std::to_string(weights.channels()) +
                     ") != codebook size (" + std::to_string(cb.size()) + ")");
  }
  return ChannelGrid<Scalar>(cb.vectors().template cast<Scalar>() * weights.data,
                             weights.height, weights.width);
}

// --- CutMix -----------------------------------------------------------------------

struct CutBox {
  Eigen::Index top = 0, left = 0, height = 0, width = 0;
  Eigen::Index area() const { return height * width; }
};

/// lambda0 ~ Beta(alpha, alpha); sides floor(side * sqrt(1 - lambda0));
/// uniform center; clipped to the grid.
CutBox sample_cutmix_box(Eigen::Index side, double alpha, Rng& rng);

/// Copies all channels of box from b into a. Returns 1 - area / (h * w).
double apply_cutmix(EmbeddingTensor& a, const EmbeddingTensor& b,
                    const CutBox& box);

/// Returns the mixed tensor and the area-corrected lambda; the caller mixes
/// labels as lambda * y_a + (1 - lambda) * y_b.
std::pair<EmbeddingTensor, double> token_cutmix(const EmbeddingTensor& a,
                                                const EmbeddingTensor& b,
                                                double alpha, Rng& rng);

// --- Embedding noise ------------------------------------------------------------------

/// With probability prob: per-channel offset ~ N(0, sigma_channel^2) added to
/// every position of that channel, then iid N(0, sigma_full^2) everywhere.
EmbeddingTensor emb_noise(const EmbeddingTensor& e, double sigma_channel,
                          double sigma_full, double prob, Rng& rng,
                          AugmentCounters* counters = nullptr);

}  // namespace vtok
