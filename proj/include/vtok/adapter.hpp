#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "vtok/error.hpp"
#include "vtok/rng.hpp"
#include "vtok/tensor.hpp"

namespace vtok {

// Stem-Adapter: one strided convolution from d_c x m x m embeddings to the
// d_V x k x k layout a ViT sees after its patch stem.

enum class StemVariant {
  kConv4,      // kernel 4, stride 2, pad 1: 28 -> 14
  kConv2,      // kernel 2, stride 2, pad 0: 28 -> 14
  kPointwise,  // kernel 1, stride 1, pad 0: m -> m
};

struct StemGeometry {
  Eigen::Index kernel;
  Eigen::Index stride;
  Eigen::Index pad;
};

constexpr StemGeometry geometry(StemVariant v) {
  switch (v) {
    case StemVariant::kConv4: return {4, 2, 1};
    case StemVariant::kConv2: return {2, 2, 0};
    case StemVariant::kPointwise: return {1, 1, 0};
  }
  return {1, 1, 0};
}

inline const char* variant_name(StemVariant v) {
  switch (v) {
    case StemVariant::kConv4: return "conv4";
    case StemVariant::kConv2: return "conv2";
    case StemVariant::kPointwise: return "pointwise";
  }
  return "?";
}

inline StemVariant parse_variant(const std::string& s) {
  if (s == "conv4") return StemVariant::kConv4;
  if (s == "conv2") return StemVariant::kConv2;
  if (s == "pointwise" || s == "linear") return StemVariant::kPointwise;
  throw ConfigError("unknown stem variant '" + s + "'");
}

/// k = (m + 2 pad - kernel) / stride + 1. Throws ConfigError unless the
/// division is exact and k >= 1.
inline Eigen::Index stem_output_side(StemVariant v, Eigen::Index m) {
  const auto g = geometry(v);
  const Eigen::Index span = m + 2 * g.pad - g.kernel;
  if (m < 1 || span < 0 || span % g.stride != 0) {
    throw ConfigError(std::string(variant_name(v)) +
                      " does not tile an input of side " + std::to_string(m));
  }
  return span / g.stride + 1;
}

template <typename Scalar>
struct StemAdapter {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  StemVariant variant = StemVariant::kConv4;
  Eigen::Index in_channels = 0;
  Eigen::Index out_channels = 0;
  /// d_V x (d_c * kernel * kernel); column (c * kernel + ky) * kernel + kx.
  Matrix weights;
  Vector bias;

  Eigen::Index kernel() const { return geometry(variant).kernel; }

  Scalar& weight(Eigen::Index o, Eigen::Index c, Eigen::Index ky,
                 Eigen::Index kx) {
    return weights(o, (c * kernel() + ky) * kernel() + kx);
  }

  template <typename Other>
  StemAdapter<Other> cast() const {
    return {variant, in_channels, out_channels,
            weights.template cast<Other>(), bias.template cast<Other>()};
  }
};

/// Weights ~ normal truncated at two standard deviations and rescaled so
/// the realized standard deviation is 0.02; zero bias.
template <typename Scalar = float>
StemAdapter<Scalar> init_adapter(StemVariant variant, Eigen::Index d_c,
                                 Eigen::Index d_v, std::uint64_t seed) {
  if (d_c < 1 || d_v < 1) throw ConfigError("adapter channels must be >= 1");
  // Std of a standard normal truncated to [-2, 2].
  constexpr double kTruncatedStd = 0.87962566103423978;
  constexpr double kTargetStd = 0.02;
  const Eigen::Index k = geometry(variant).kernel;
  StemAdapter<Scalar> a;
  a.variant = variant;
  a.in_channels = d_c;
  a.out_channels = d_v;
  a.weights.resize(d_v, d_c * k * k);
  a.bias = StemAdapter<Scalar>::Vector::Zero(d_v);
  Rng rng(seed);
  for (Eigen::Index o = 0; o < d_v; ++o) {
    for (Eigen::Index j = 0; j < a.weights.cols(); ++j) {
      double z;
      do {
        z = rng.normal();
      } while (std::abs(z) > 2.0);
      a.weights(o, j) = static_cast<Scalar>(z * kTargetStd / kTruncatedStd);
    }
  }
  return a;
}

namespace detail {

template <typename Scalar>
void check_input(const ChannelGrid<Scalar>& x, const StemAdapter<Scalar>& a) {
  if (x.channels() != a.in_channels) {
    throw InputError("adapter expects " + std::to_string(a.in_channels) +
                     " channels, got " + std::to_string(x.channels()));
  }
  if (x.height != x.width) throw InputError("adapter input must be square");
  const Eigen::Index taps = a.in_channels * a.kernel() * a.kernel();
  if (a.weights.rows() != a.out_channels || a.weights.cols() != taps ||
      a.bias.size() != a.out_channels) {
    throw InputError("adapter weight shape is inconsistent");
  }
}

/// (d_c * kernel^2) x (k^2) patch matrix; zero outside the input.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> im2col(
    const ChannelGrid<Scalar>& x, const StemGeometry& g, Eigen::Index k) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix cols = Matrix::Zero(x.channels() * g.kernel * g.kernel, k * k);
  for (Eigen::Index c = 0; c < x.channels(); ++c) {
    for (Eigen::Index ky = 0; ky < g.kernel; ++ky) {
      for (Eigen::Index kx = 0; kx < g.kernel; ++kx) {
        const Eigen::Index row = (c * g.kernel + ky) * g.kernel + kx;
        for (Eigen::Index oy = 0; oy < k; ++oy) {
          const Eigen::Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= x.height) continue;
          for (Eigen::Index ox = 0; ox < k; ++ox) {
            const Eigen::Index ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= x.width) continue;
            cols(row, oy * k + ox) = x(c, iy, ix);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatter-adds patch gradients back onto the input.
template <typename Scalar>
ChannelGrid<Scalar> col2im(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cols,
    Eigen::Index channels, Eigen::Index side, const StemGeometry& g,
    Eigen::Index k) {
  ChannelGrid<Scalar> x(channels, side, side);
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (Eigen::Index ky = 0; ky < g.kernel; ++ky) {
      for (Eigen::Index kx = 0; kx < g.kernel; ++kx) {
        const Eigen::Index row = (c * g.kernel + ky) * g.kernel + kx;
        for (Eigen::Index oy = 0; oy < k; ++oy) {
          const Eigen::Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= side) continue;
          for (Eigen::Index ox = 0; ox < k; ++ox) {
            const Eigen::Index ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= side) continue;
            x(c, iy, ix) += cols(row, oy * k + ox);
          }
        }
      }
    }
  }
  return x;
}

}  // namespace detail

/// Cross-correlation with the adapter's kernel, stride and padding, plus
/// bias. Throws InputError on a shape mismatch and ConfigError when the
/// variant does not tile the input side.
template <typename Scalar>
ChannelGrid<Scalar> stem_forward(const ChannelGrid<Scalar>& x,
                                 const StemAdapter<Scalar>& a) {
  detail::check_input(x, a);
  const auto g = geometry(a.variant);
  const Eigen::Index k = stem_output_side(a.variant, x.height);
  const auto cols = detail::im2col(x, g, k);
  ChannelGrid<Scalar> y(a.out_channels, k, k);
  y.data.noalias() = a.weights * cols;
  y.data.colwise() += a.bias;
  return y;
}

template <typename Scalar>
struct StemGradients {
  ChannelGrid<Scalar> input;
  typename StemAdapter<Scalar>::Matrix weights;
  typename StemAdapter<Scalar>::Vector bias;
};

template <typename Scalar>
StemGradients<Scalar> stem_backward(const ChannelGrid<Scalar>& x,
                                    const StemAdapter<Scalar>& a,
                                    const ChannelGrid<Scalar>& grad_out) {
  detail::check_input(x, a);
  const auto g = geometry(a.variant);
  const Eigen::Index k = stem_output_side(a.variant, x.height);
  if (grad_out.channels() != a.out_channels || grad_out.height != k ||
      grad_out.width != k) {
    throw InputError("grad_out shape does not match the adapter output");
  }
  using Matrix = typename StemAdapter<Scalar>::Matrix;
  const Matrix cols = detail::im2col(x, g, k);
  const Matrix go = grad_out.data;
  StemGradients<Scalar> out;
  out.weights.noalias() = go * cols.transpose();
  out.bias = go.rowwise().sum();
  const Matrix grad_cols = a.weights.transpose() * go;
  out.input = detail::col2im<Scalar>(grad_cols, x.channels(), x.height, g, k);
  return out;
}

}  // namespace vtok
