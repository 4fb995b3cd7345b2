#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "vtok/augment.hpp"
#include "vtok/synthetic.hpp"

using namespace vtok;

namespace {

TokenGrid random_grid(Eigen::Index side, Token vocab, Rng& rng) {
  TokenGrid g(side, side);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = Token(rng.below(vocab));
  return g;
}

std::vector<Token> sorted_tokens(const TokenGrid& g) {
  std::vector<Token> v(g.data(), g.data() + g.size());
  std::sort(v.begin(), v.end());
  return v;
}

// Expanded Keys cubic, a = -0.5.
double cubic(double x) {
  x = std::fabs(x);
  if (x <= 1) return 1.5 * x * x * x - 2.5 * x * x + 1;
  if (x < 2) return -0.5 * x * x * x + 2.5 * x * x - 4 * x + 2;
  return 0;
}

Eigen::Index mirror(Eigen::Index j, Eigen::Index n) {
  if (n == 1) return 0;
  while (j < 0 || j >= n) j = j < 0 ? -j : 2 * (n - 1) - j;
  return j;
}

/// Direct 2-D bicubic sample of one plane, no matrices.
double sample_plane(const OneHotGrid& g, Eigen::Index c, const CropBox& b,
                    Eigen::Index out, Eigen::Index oy, Eigen::Index ox) {
  const double sy = (oy + 0.5) * b.height / out - 0.5;
  const double sx = (ox + 0.5) * b.width / out - 0.5;
  double acc = 0;
  for (Eigen::Index ky = (Eigen::Index)std::floor(sy) - 1; ky <= std::floor(sy) + 2; ++ky) {
    for (Eigen::Index kx = (Eigen::Index)std::floor(sx) - 1; kx <= std::floor(sx) + 2; ++kx) {
      acc += cubic(sy - ky) * cubic(sx - kx) *
             g(c, b.top + mirror(ky, b.height), b.left + mirror(kx, b.width));
    }
  }
  return acc;
}

SynonymTable flip_synonyms() { return SynonymTable({{1}, {0}}); }

}  // namespace

TEST_CASE("config validation and defaults") {
  AugmentConfig c;
  CHECK_NOTHROW(c.validate());
  c.sr_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.rrc_scale = {0.9, 0.1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.out_side = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.cutmix_alpha = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.sigma_full = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  const auto cb = synthetic_codebook(8, 100, 3);
  const auto r = AugmentConfig{}.resolved(cb);
  CHECK(*r.sigma_channel == doctest::Approx(0.1 * cb.mean_channel_stddev()));
  CHECK(*r.sigma_full == doctest::Approx(0.1 * cb.mean_channel_stddev()));
  AugmentConfig set;
  set.sigma_channel = 0.0;
  CHECK(*set.resolved(cb).sigma_channel == 0.0);
}

TEST_CASE("synonym replacement") {
  Rng rng(1);
  const TokenGrid g = random_grid(8, 2, rng);
  CHECK(token_eda_sr(g, flip_synonyms(), 0.0, rng) == g);
  const TokenGrid flipped = token_eda_sr(g, flip_synonyms(), 1.0, rng);
  CHECK((flipped.array() + g.array() == Token(1)).all());

  // Empty synonym lists are skipped.
  const SynonymTable none({{}, {}});
  CHECK(token_eda_sr(g, none, 1.0, rng) == g);

  // Replacement count is Binomial(trials * 1024, 0.25).
  const auto cb = synthetic_codebook(4, 391, 1);
  const auto syn = build_synonyms(cb, 5);
  AugmentCounters counters;
  std::uint64_t changed = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const TokenGrid x = random_grid(32, 391, rng);
    const TokenGrid y = token_eda_sr(x, syn, 0.25, rng, &counters);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] != y.data()[i]) {
        ++changed;
        const auto& list = syn[x.data()[i]];
        CHECK(std::find(list.begin(), list.end(), y.data()[i]) != list.end());
      }
    }
  }
  const double n = trials * 1024.0;
  const double mean = n * 0.25, sd = std::sqrt(n * 0.25 * 0.75);
  CHECK(changed == counters.sr_replaced);
  CHECK(std::fabs(double(changed) - mean) < 5 * sd);
}

TEST_CASE("square swap") {
  TokenGrid g(2, 2);
  g << 'a', 'b', 'c', 'd';
  apply_square_swap(g, SquareSwap{1, 0, 0, 1, 1});
  TokenGrid want(2, 2);
  want << 'd', 'b', 'c', 'a';
  CHECK(g == want);

  TokenGrid big = TokenGrid::Zero(6, 6);
  big.block(0, 0, 2, 2).setConstant(1);
  big.block(3, 4, 2, 2).setConstant(2);
  apply_square_swap(big, SquareSwap{2, 0, 0, 3, 4});
  CHECK((big.block(0, 0, 2, 2).array() == 2).all());
  CHECK((big.block(3, 4, 2, 2).array() == 1).all());

  Rng rng(2);
  CHECK_FALSE(sample_square_swap(1, rng).has_value());
  for (int t = 0; t < 2000; ++t) {
    const Eigen::Index n = 2 + rng.below(31);
    const auto s = sample_square_swap(n, rng);
    if (!s) continue;
    CHECK(s->size >= 1);
    CHECK(s->size <= n / 2);
    CHECK(s->a_row + s->size <= n);
    CHECK(s->b_col + s->size <= n);
    const bool apart = s->a_row + s->size <= s->b_row || s->b_row + s->size <= s->a_row ||
                       s->a_col + s->size <= s->b_col || s->b_col + s->size <= s->a_col;
    CHECK(apart);
  }
}

TEST_CASE("token_eda_rs preserves the multiset") {
  Rng rng(3);
  const TokenGrid g = random_grid(32, 391, rng);
  CHECK(token_eda_rs(g, 0.0, rng) == g);
  AugmentCounters c;
  for (int t = 0; t < 200; ++t) {
    const TokenGrid s = token_eda_rs(g, 1.0, rng, &c);
    CHECK(sorted_tokens(s) == sorted_tokens(g));
  }
  CHECK(c.rs_applied + c.rs_skipped == 200);
  CHECK(c.rs_applied > 150);
}

TEST_CASE("one_hot and argmax") {
  TokenGrid g(2, 3);
  g << 0, 4, 2, 4, 1, 0;
  const auto oh = one_hot(g, 5);
  CHECK(oh.channels() == 5);
  CHECK(oh.height == 2);
  CHECK(oh.width == 3);
  CHECK(oh(4, 0, 1) == 1.0f);
  CHECK(oh(2, 0, 1) == 0.0f);
  CHECK(oh.data.sum() == 6.0f);
  CHECK(argmax(oh) == g);
  CHECK_THROWS_AS(one_hot(g, 4), InputError);
}

TEST_CASE("bicubic matrix") {
  CHECK(bicubic_matrix(7, 7).isApprox(Eigen::MatrixXd::Identity(7, 7)));
  for (auto [in, out] : {std::pair{5, 28}, {32, 28}, {1, 4}, {17, 3}}) {
    const auto r = bicubic_matrix(in, out);
    CHECK(r.rows() == out);
    CHECK(r.cols() == in);
    CHECK((r.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("crop_resize matches direct bicubic sampling") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    OneHotGrid g(3, 12, 12);
    for (Eigen::Index i = 0; i < g.data.size(); ++i) {
      g.data.data()[i] = t % 2 ? float(rng.normal()) : float(rng.bernoulli(0.1));
    }
    const Eigen::Index h = 1 + rng.below(12), w = 1 + rng.below(12);
    const CropBox box{Eigen::Index(rng.below(13 - h)), Eigen::Index(rng.below(13 - w)), h, w};
    const Eigen::Index out = 1 + rng.below(16);
    const auto r = crop_resize(g, box, out);
    for (Eigen::Index c = 0; c < 3; ++c) {
      for (Eigen::Index y = 0; y < out; ++y) {
        for (Eigen::Index x = 0; x < out; ++x) {
          CHECK(r(c, y, x) == doctest::Approx(sample_plane(g, c, box, out, y, x)).epsilon(1e-5));
        }
      }
    }
  }
  OneHotGrid g(1, 4, 4);
  CHECK_THROWS_AS(crop_resize(g, CropBox{2, 2, 3, 1}, 4), InputError);
}

TEST_CASE("random resized crop") {
  Rng rng(5);
  const TokenGrid g = random_grid(32, 50, rng);
  const auto oh = one_hot(g, 50);

  AugmentConfig id;
  id.rrc_scale = {1, 1};
  id.rrc_ratio = {1, 1};
  id.out_side = 32;
  CHECK(argmax(token_rrc(oh, id, rng)) == g);
  CHECK(token_rrc(oh, id, rng).data == oh.data);

  // Unreachable ratio falls back to the largest centered crop.
  const auto fb = sample_rrc_box(32, 32, {1, 1}, {2, 2}, rng);
  CHECK(fb.top == 8);
  CHECK(fb.left == 0);
  CHECK(fb.height == 16);
  CHECK(fb.width == 32);

  AugmentConfig cfg;
  for (int t = 0; t < 50; ++t) {
    const auto b = sample_rrc_box(32, 32, cfg.rrc_scale, cfg.rrc_ratio, rng);
    CHECK(b.height >= 1);
    CHECK(b.width >= 1);
    CHECK(b.top + b.height <= 32);
    CHECK(b.left + b.width <= 32);
    const auto r = token_rrc(oh, cfg, rng);
    CHECK(r.height == 28);
    CHECK(r.width == 28);
    const Eigen::RowVectorXf sums = r.data.colwise().sum();
    CHECK((sums.array() - 1.0f).abs().maxCoeff() < 1e-5f);
  }

  // Constant grids are a fixpoint.
  const auto constant = one_hot(TokenGrid::Constant(32, 32, 7), 50);
  for (int t = 0; t < 20; ++t) {
    const auto r = token_rrc(constant, cfg, rng);
    CHECK((r.data.row(7).array() == 1.0f).all());
    CHECK(r.data.sum() == 28.0f * 28.0f);
  }

  AugmentConfig renorm = cfg;
  renorm.renormalize = true;
  const auto rn = token_rrc(oh, renorm, rng);
  const Eigen::RowVectorXf s = rn.data.colwise().sum();
  CHECK((s.array() - 1.0f).abs().maxCoeff() < 1e-6f);
}

TEST_CASE("embed") {
  Eigen::MatrixXf m(3, 4);
  m << 1, 2, 3, 4,
       -1, 0.5f, 0, 7,
       2, 2, -2, 9;
  const Codebook cb(m);
  TokenGrid g(1, 2);
  g << 2, 0;
  const auto e = embed(one_hot(g, 4), cb);
  CHECK(e.channels() == 3);
  for (int d = 0; d < 3; ++d) {
    CHECK(e(d, 0, 0) == m(d, 2));
    CHECK(e(d, 0, 1) == m(d, 0));
  }
  OneHotGrid mid(4, 1, 1);
  mid(1, 0, 0) = 0.5f;
  mid(3, 0, 0) = 0.5f;
  const auto em = embed(mid, cb);
  for (int d = 0; d < 3; ++d) CHECK(em(d, 0, 0) == 0.5f * (m(d, 1) + m(d, 3)));

  CHECK_THROWS_AS(embed(OneHotGrid(3, 1, 1), cb), InputError);

  Rng rng(6);
  const auto big = synthetic_codebook(16, 64, 2);
  for (int t = 0; t < 10; ++t) {
    ChannelGrid<double> a(64, 5, 5), b(64, 5, 5);
    for (Eigen::Index i = 0; i < a.data.size(); ++i) {
      a.data.data()[i] = rng.normal();
      b.data.data()[i] = rng.normal();
    }
    const double alpha = rng.normal(), beta = rng.normal();
    ChannelGrid<double> mix(Eigen::MatrixXd(alpha * a.data + beta * b.data), 5, 5);
    const auto lhs = embed(mix, big).data;
    const auto rhs = (alpha * embed(a, big).data + beta * embed(b, big).data).eval();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("cutmix") {
  Rng rng(7);
  EmbeddingTensor a(4, 28, 28), b(4, 28, 28);
  a.data.setConstant(1.0f);
  b.data.setConstant(2.0f);

  EmbeddingTensor x = a;
  CHECK(apply_cutmix(x, b, CutBox{5, 5, 0, 0}) == 1.0);
  CHECK(x.data == a.data);
  CHECK(apply_cutmix(x, b, CutBox{0, 0, 28, 28}) == 0.0);
  CHECK(x.data == b.data);
  x = a;
  CHECK(apply_cutmix(x, b, CutBox{7, 7, 14, 14}) == 0.75);
  CHECK(x.data.sum() == doctest::Approx(4 * (784 + 196)));
  CHECK(x(2, 7, 7) == 2.0f);
  CHECK(x(2, 6, 7) == 1.0f);

  double mean = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    const auto box = sample_cutmix_box(28, 1.0, rng);
    CHECK(box.top >= 0);
    CHECK(box.left >= 0);
    CHECK(box.top + box.height <= 28);
    CHECK(box.left + box.width <= 28);
    mean += 1.0 - box.area() / 784.0;
  }
  // Unclipped mean would be about 0.5; clipping only raises lambda.
  mean /= trials;
  CHECK(mean > 0.5);
  CHECK(mean < 0.8);

  const auto [mixed, lambda] = token_cutmix(a, b, 1.0, rng);
  const double ones = (mixed.data.array() == 1.0f).count() / 4.0;
  CHECK(lambda == doctest::Approx(ones / 784.0));
}

TEST_CASE("embedding noise") {
  Rng rng(8);
  EmbeddingTensor e(3, 6, 6);
  e.data.setRandom();
  CHECK(emb_noise(e, 0.0, 0.0, 1.0, rng).data == e.data);
  CHECK(emb_noise(e, 1.0, 1.0, 0.0, rng).data == e.data);

  const auto shifted = emb_noise(e, 1.0, 0.0, 1.0, rng);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const Eigen::ArrayXf delta = (shifted.data.row(c) - e.data.row(c)).transpose().array();
    CHECK((delta - delta(0)).abs().maxCoeff() < 1e-6f);
  }

  EmbeddingTensor zero(1, 100, 1000);
  const auto noisy = emb_noise(zero, 0.0, 1.0, 1.0, rng);
  const double m = noisy.data.cast<double>().mean();
  const double var = (noisy.data.cast<double>().array() - m).square().mean();
  CHECK(std::fabs(m) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));

  AugmentCounters c;
  for (int t = 0; t < 2000; ++t) emb_noise(e, 0.1, 0.1, 0.5, rng, &c);
  CHECK(std::fabs(double(c.noise_applied) - 1000.0) < 5 * std::sqrt(500.0));
}
