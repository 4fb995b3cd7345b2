#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "vtok/adapter.hpp"
#include "vtok/formats.hpp"

using namespace vtok;
using Grid = ChannelGrid<double>;

namespace {

constexpr StemVariant kAll[] = {StemVariant::kConv4, StemVariant::kConv2,
                                StemVariant::kPointwise};

Grid random_grid(Eigen::Index c, Eigen::Index side, Rng& rng) {
  Grid g(c, side, side);
  for (Eigen::Index i = 0; i < g.data.size(); ++i) g.data.data()[i] = rng.normal();
  return g;
}

StemAdapter<double> random_adapter(StemVariant v, Eigen::Index d_c, Eigen::Index d_v,
                                   Rng& rng) {
  auto a = init_adapter<double>(v, d_c, d_v, rng.next_u64());
  for (Eigen::Index o = 0; o < d_v; ++o) a.bias(o) = rng.normal();
  return a;
}

/// Textbook strided, zero-padded cross-correlation.
Grid naive_conv(const Grid& x, StemAdapter<double> a) {
  const auto g = geometry(a.variant);
  const Eigen::Index k = (x.height + 2 * g.pad - g.kernel) / g.stride + 1;
  Grid y(a.out_channels, k, k);
  for (Eigen::Index o = 0; o < a.out_channels; ++o) {
    for (Eigen::Index oy = 0; oy < k; ++oy) {
      for (Eigen::Index ox = 0; ox < k; ++ox) {
        double s = a.bias(o);
        for (Eigen::Index c = 0; c < a.in_channels; ++c) {
          for (Eigen::Index ky = 0; ky < g.kernel; ++ky) {
            for (Eigen::Index kx = 0; kx < g.kernel; ++kx) {
              const Eigen::Index iy = oy * g.stride + ky - g.pad;
              const Eigen::Index ix = ox * g.stride + kx - g.pad;
              if (iy < 0 || ix < 0 || iy >= x.height || ix >= x.width) continue;
              s += a.weight(o, c, ky, kx) * x(c, iy, ix);
            }
          }
        }
        y(o, oy, ox) = s;
      }
    }
  }
  return y;
}

double dot(const Grid& a, const Grid& b) { return (a.data.array() * b.data.array()).sum(); }

}  // namespace

TEST_CASE("output side law") {
  CHECK(stem_output_side(StemVariant::kConv4, 28) == 14);
  CHECK(stem_output_side(StemVariant::kConv2, 28) == 14);
  CHECK(stem_output_side(StemVariant::kPointwise, 28) == 28);
  CHECK(stem_output_side(StemVariant::kConv4, 32) == 16);
  CHECK_THROWS_AS(stem_output_side(StemVariant::kConv2, 27), ConfigError);
  CHECK_THROWS_AS(stem_output_side(StemVariant::kConv4, 27), ConfigError);
  CHECK_THROWS_AS(stem_output_side(StemVariant::kConv4, 1), ConfigError);
  CHECK(parse_variant("linear") == StemVariant::kPointwise);
  CHECK_THROWS_AS(parse_variant("conv3"), ConfigError);
}

TEST_CASE("zero adapter maps to the ViT token layout") {
  auto a = init_adapter<float>(StemVariant::kConv4, 32, 768, 1);
  a.weights.setZero();
  EmbeddingTensor x(32, 28, 28);
  x.data.setOnes();
  const auto y = stem_forward(x, a);
  CHECK(y.channels() == 768);
  CHECK(y.height == 14);
  CHECK(y.width == 14);
  CHECK(y.data.isZero());

  EmbeddingTensor wrong(31, 28, 28);
  CHECK_THROWS_AS(stem_forward(wrong, a), InputError);
  EmbeddingTensor odd(32, 27, 27);
  CHECK_THROWS_AS(stem_forward(odd, a), ConfigError);
}

TEST_CASE("delta kernel subsamples") {
  Rng rng(1);
  auto a = init_adapter<double>(StemVariant::kConv2, 3, 3, 0);
  a.weights.setZero();
  for (Eigen::Index c = 0; c < 3; ++c) a.weight(c, c, 0, 0) = 1.0;
  const Grid x = random_grid(3, 8, rng);
  const auto y = stem_forward(x, a);
  for (Eigen::Index c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) CHECK(y(c, i, j) == x(c, 2 * i, 2 * j));
    }
  }
}

TEST_CASE("forward matches direct convolution") {
  Rng rng(2);
  for (auto v : kAll) {
    for (Eigen::Index side : {2, 6, 10}) {
      const auto a = random_adapter(v, 3, 5, rng);
      const Grid x = random_grid(3, side, rng);
      const auto y = stem_forward(x, a);
      const auto ref = naive_conv(x, a);
      REQUIRE(y.same_shape(ref));
      CHECK((y.data - ref.data).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("forward is affine in the input") {
  Rng rng(3);
  for (auto v : kAll) {
    auto a = random_adapter(v, 4, 6, rng);
    const Grid x1 = random_grid(4, 8, rng), x2 = random_grid(4, 8, rng);
    const double s = rng.normal(), t = rng.normal();
    const Grid mix(Grid::Matrix(s * x1.data + t * x2.data), 8, 8);
    a.bias.setZero();
    const auto lhs = stem_forward(mix, a).data;
    const auto rhs = (s * stem_forward(x1, a).data + t * stem_forward(x2, a).data).eval();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("backward examples") {
  auto a = init_adapter<double>(StemVariant::kPointwise, 2, 3, 0);
  Grid x(2, 2, 2);
  x.data << 1, 2, 3, 4,
            5, 6, 7, 8;
  Grid go(3, 2, 2);
  go.data.setOnes();
  const auto g = stem_backward(x, a, go);
  CHECK(g.bias == Eigen::Vector3d::Constant(4));
  for (int o = 0; o < 3; ++o) {
    CHECK(g.weights(o, 0) == 10);
    CHECK(g.weights(o, 1) == 26);
  }
  // grad_x(c) = sum_o W(o, c) at every position.
  for (int c = 0; c < 2; ++c) {
    const double colsum = a.weights.col(c).sum();
    CHECK((g.input.data.row(c).array() - colsum).abs().maxCoeff() < 1e-15);
  }

  Grid bad(3, 3, 3);
  CHECK_THROWS_AS(stem_backward(x, a, bad), InputError);
}

TEST_CASE("backward matches finite differences") {
  Rng rng(4);
  const double h = 1e-6;
  for (auto v : kAll) {
    const auto a = random_adapter(v, 3, 4, rng);
    const Grid x = random_grid(3, 6, rng);
    const auto y = stem_forward(x, a);
    const Grid go = random_grid(4, y.height, rng);
    const auto g = stem_backward(x, a, go);
    auto loss = [&](const Grid& xx, const StemAdapter<double>& aa) {
      return dot(stem_forward(xx, aa), go);
    };
    // The loss is linear in each parameter, so central differences are
    // exact up to rounding.
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
      Grid xp = x, xm = x;
      const Eigen::Index i = rng.below(x.data.size());
      xp.data.data()[i] += h;
      xm.data.data()[i] -= h;
      const double fd = (loss(xp, a) - loss(xm, a)) / (2 * h);
      worst = std::max(worst, std::fabs(fd - g.input.data.data()[i]));

      auto ap = a, am = a;
      const Eigen::Index j = rng.below(a.weights.size());
      ap.weights.data()[j] += h;
      am.weights.data()[j] -= h;
      const double fw = (loss(x, ap) - loss(x, am)) / (2 * h);
      worst = std::max(worst, std::fabs(fw - g.weights.data()[j]));

      ap = a;
      am = a;
      const Eigen::Index o = rng.below(a.out_channels);
      ap.bias(o) += h;
      am.bias(o) -= h;
      const double fb = (loss(x, ap) - loss(x, am)) / (2 * h);
      worst = std::max(worst, std::fabs(fb - g.bias(o)));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("initialization") {
  const auto a = init_adapter<float>(StemVariant::kConv4, 32, 768, 9);
  const auto b = init_adapter<float>(StemVariant::kConv4, 32, 768, 9);
  const auto c = init_adapter<float>(StemVariant::kConv4, 32, 768, 10);
  CHECK(a.weights == b.weights);
  CHECK(a.weights != c.weights);
  CHECK(a.bias.isZero());
  CHECK(a.weights.rows() == 768);
  CHECK(a.weights.cols() == 32 * 16);
  const auto w = a.weights.cast<double>().array();
  const double mean = w.mean();
  const double sd = std::sqrt((w - mean).square().mean());
  CHECK(std::fabs(mean) < 1e-3);
  CHECK(sd == doctest::Approx(0.02).epsilon(0.1));
  CHECK(w.abs().maxCoeff() <= 2 * 0.02 / 0.87962566103423978 + 1e-6);
  CHECK_THROWS_AS(init_adapter<float>(StemVariant::kConv4, 0, 4, 1), ConfigError);
}

TEST_CASE("adapter file round-trip") {
  auto a = init_adapter<float>(StemVariant::kConv2, 5, 7, 3);
  a.bias.setLinSpaced(-1, 1);
  const auto back = parse_adapter(serialize_adapter(a));
  CHECK(back.variant == a.variant);
  CHECK(back.in_channels == 5);
  CHECK(back.out_channels == 7);
  CHECK(back.weights == a.weights);
  CHECK(back.bias == a.bias);
  auto bytes = serialize_adapter(a);
  bytes.resize(bytes.size() - 1);
  CHECK_THROWS_AS(parse_adapter(bytes), FormatError);
}
