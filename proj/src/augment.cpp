#include "vtok/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vtok {

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError(std::string(name) + " must be in [0, 1]");
    }
  };
  prob(sr_prob, "sr_prob");
  prob(rs_prob, "rs_prob");
  prob(cutmix_prob, "cutmix_prob");
  prob(noise_prob, "noise_prob");
  if (synonyms == 0) throw ConfigError("synonyms must be >= 1");
  if (!(rrc_scale[0] > 0.0 && rrc_scale[0] <= rrc_scale[1] &&
        rrc_scale[1] <= 1.0)) {
    throw ConfigError("rrc_scale must satisfy 0 < lo <= hi <= 1");
  }
  if (!(rrc_ratio[0] > 0.0 && rrc_ratio[0] <= rrc_ratio[1])) {
    throw ConfigError("rrc_ratio must satisfy 0 < lo <= hi");
  }
  if (out_side < 1) throw ConfigError("out_side must be positive");
  if (!(cutmix_alpha > 0.0)) throw ConfigError("cutmix_alpha must be > 0");
  if (sigma_channel && !(*sigma_channel >= 0.0)) {
    throw ConfigError("sigma_channel must be >= 0");
  }
  if (sigma_full && !(*sigma_full >= 0.0)) {
    throw ConfigError("sigma_full must be >= 0");
  }
}

AugmentConfig AugmentConfig::resolved(const Codebook& cb) const {
  AugmentConfig out = *this;
  const double s = 0.1 * cb.mean_channel_stddev();
  if (!out.sigma_channel) out.sigma_channel = s;
  if (!out.sigma_full) out.sigma_full = s;
  return out;
}

AugmentCounters& AugmentCounters::operator+=(const AugmentCounters& o) {
  sr_replaced += o.sr_replaced;
  rs_applied += o.rs_applied;
  rs_skipped += o.rs_skipped;
  cutmix_applied += o.cutmix_applied;
  noise_applied += o.noise_applied;
  return *this;
}

// ---------------------------------------------------------------------------

TokenGrid token_eda_sr(const TokenGrid& grid, const SynonymTable& syn,
                       double p, Rng& rng, AugmentCounters* counters) {
  TokenGrid out = grid;
  if (p <= 0.0) return out;
  std::uint64_t replaced = 0;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    Token& t = out.data()[k];
    if (t >= syn.size()) {
      throw InputError("token " + std::to_string(t) +
                       " has no synonym entry");
    }
    if (!rng.bernoulli(p)) continue;
    const auto& list = syn[t];
    if (list.empty()) continue;
    t = list[rng.below(list.size())];
    ++replaced;
  }
  if (counters) counters->sr_replaced += replaced;
  return out;
}

std::optional<SquareSwap> sample_square_swap(Eigen::Index side, Rng& rng) {
  if (side < 2) return std::nullopt;
  SquareSwap s;
  s.size = rng.between(1, side / 2);
  const Eigen::Index hi = side - s.size;
  for (int attempt = 0; attempt < 100; ++attempt) {
    s.a_row = rng.between(0, hi);
    s.a_col = rng.between(0, hi);
    s.b_row = rng.between(0, hi);
    s.b_col = rng.between(0, hi);
    const bool apart = s.a_row + s.size <= s.b_row ||
                       s.b_row + s.size <= s.a_row ||
                       s.a_col + s.size <= s.b_col ||
                       s.b_col + s.size <= s.a_col;
    if (apart) return s;
  }
  return std::nullopt;
}

void apply_square_swap(TokenGrid& grid, const SquareSwap& s) {
  auto a = grid.block(s.a_row, s.a_col, s.size, s.size);
  auto b = grid.block(s.b_row, s.b_col, s.size, s.size);
  a.swap(b);
}

TokenGrid token_eda_rs(const TokenGrid& grid, double p, Rng& rng,
                       AugmentCounters* counters) {
  TokenGrid out = grid;
  if (!rng.bernoulli(p)) return out;
  if (auto s = sample_square_swap(std::min(out.rows(), out.cols()), rng)) {
    apply_square_swap(out, *s);
    if (counters) ++counters->rs_applied;
  } else if (counters) {
    ++counters->rs_skipped;
  }
  return out;
}

// ---------------------------------------------------------------------------

OneHotGrid one_hot(const TokenGrid& grid, Eigen::Index vocab) {
  OneHotGrid out(vocab, grid.rows(), grid.cols());
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    const Token t = grid.data()[k];
    if (t >= vocab) {
      throw InputError("token " + std::to_string(t) + " >= V=" +
                       std::to_string(vocab));
    }
    out.data(t, k) = 1.0f;
  }
  return out;
}

TokenGrid argmax(const OneHotGrid& weights) {
  TokenGrid out(weights.height, weights.width);
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    Eigen::Index best;
    weights.data.col(k).maxCoeff(&best);
    out.data()[k] = static_cast<Token>(best);
  }
  return out;
}

CropBox sample_rrc_box(Eigen::Index height, Eigen::Index width,
                       const std::array<double, 2>& scale,
                       const std::array<double, 2>& ratio, Rng& rng) {
  const double area = double(height) * double(width);
  const double log_lo = std::log(ratio[0]);
  const double log_hi = std::log(ratio[1]);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(scale[0], scale[1]);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<Eigen::Index>(std::lround(std::sqrt(target * aspect)));
    const auto h = static_cast<Eigen::Index>(std::lround(std::sqrt(target / aspect)));
    if (w > 0 && w <= width && h > 0 && h <= height) {
      CropBox box{0, 0, h, w};
      box.top = rng.between(0, height - h);
      box.left = rng.between(0, width - w);
      return box;
    }
  }
  const double in_ratio = double(width) / double(height);
  Eigen::Index w = width, h = height;
  if (in_ratio < ratio[0]) {
    h = std::lround(w / ratio[0]);
  } else if (in_ratio > ratio[1]) {
    w = std::lround(h * ratio[1]);
  }
  return CropBox{(height - h) / 2, (width - w) / 2, h, w};
}

namespace {

double keys_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

Eigen::Index reflect(Eigen::Index j, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  j = std::abs(j) % period;
  return j < n ? j : period - j;
}

OneHotGrid resample(const OneHotGrid& src, const CropBox& box,
                    Eigen::Index out_side);

}  // namespace

Eigen::MatrixXd bicubic_matrix(Eigen::Index in, Eigen::Index out) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(out, in);
  const double scale = double(in) / double(out);
  for (Eigen::Index i = 0; i < out; ++i) {
    const double src = (i + 0.5) * scale - 0.5;
    const auto base = static_cast<Eigen::Index>(std::floor(src));
    const double t = src - base;
    for (Eigen::Index tap = -1; tap <= 2; ++tap) {
      r(i, reflect(base + tap, in)) += keys_kernel(t - tap);
    }
  }
  return r;
}

OneHotGrid crop_resize(const OneHotGrid& src, const CropBox& box,
                       Eigen::Index out_side, bool renormalize) {
  if (box.top < 0 || box.left < 0 || box.height < 1 || box.width < 1 ||
      box.top + box.height > src.height || box.left + box.width > src.width) {
    throw InputError("crop box outside the source grid");
  }
  const bool whole = box.height == out_side && box.width == out_side &&
                     src.height == out_side && src.width == out_side;
  OneHotGrid out = whole ? src : resample(src, box, out_side);
  if (renormalize) {
    for (Eigen::Index k = 0; k < out.data.cols(); ++k) {
      const float sum = out.data.col(k).sum();
      if (sum != 0.0f) out.data.col(k) /= sum;
    }
  }
  return out;
}

namespace {

OneHotGrid resample(const OneHotGrid& src, const CropBox& box,
                    Eigen::Index out_side) {
  const Eigen::Index channels = src.channels();
  const Eigen::MatrixXd ry = bicubic_matrix(box.height, out_side);
  const Eigen::MatrixXd rx = bicubic_matrix(box.width, out_side);
  OneHotGrid out(channels, out_side, out_side);
  Eigen::MatrixXd acc(out_side, out_side);
  Eigen::MatrixXd crop(box.height, box.width);

  for (Eigen::Index c = 0; c < channels; ++c) {
    const auto plane = src.plane(c).block(box.top, box.left, box.height,
                                          box.width);
    Eigen::Index nonzero = 0;
    for (Eigen::Index y = 0; y < box.height; ++y) {
      for (Eigen::Index x = 0; x < box.width; ++x) {
        nonzero += plane(y, x) != 0.0f;
      }
    }
    if (nonzero == 0) continue;
    if (4 * nonzero < box.height * box.width) {
      // Sparse plane (the one-hot case): sum of rank-one terms.
      acc.setZero();
      for (Eigen::Index y = 0; y < box.height; ++y) {
        for (Eigen::Index x = 0; x < box.width; ++x) {
          const double v = plane(y, x);
          if (v != 0.0) acc.noalias() += v * ry.col(y) * rx.col(x).transpose();
        }
      }
    } else {
      crop = plane.cast<double>();
      acc.noalias() = ry * crop * rx.transpose();
    }
    out.plane(c) = acc.cast<float>();
  }
  return out;
}

}  // namespace

OneHotGrid token_rrc(const OneHotGrid& src, const AugmentConfig& cfg,
                     Rng& rng) {
  const CropBox box =
      sample_rrc_box(src.height, src.width, cfg.rrc_scale, cfg.rrc_ratio, rng);
  return crop_resize(src, box, cfg.out_side, cfg.renormalize);
}

// ---------------------------------------------------------------------------

CutBox sample_cutmix_box(Eigen::Index side, double alpha, Rng& rng) {
  const double lambda0 = rng.beta(alpha, alpha);
  const double cut_ratio = std::sqrt(1.0 - lambda0);
  const auto cut = static_cast<Eigen::Index>(side * cut_ratio);
  const Eigen::Index cy = rng.between(0, side - 1);
  const Eigen::Index cx = rng.between(0, side - 1);
  const Eigen::Index y1 = std::clamp<Eigen::Index>(cy - cut / 2, 0, side);
  const Eigen::Index y2 = std::clamp<Eigen::Index>(cy + cut / 2, 0, side);
  const Eigen::Index x1 = std::clamp<Eigen::Index>(cx - cut / 2, 0, side);
  const Eigen::Index x2 = std::clamp<Eigen::Index>(cx + cut / 2, 0, side);
  return CutBox{y1, x1, y2 - y1, x2 - x1};
}

double apply_cutmix(EmbeddingTensor& a, const EmbeddingTensor& b,
                    const CutBox& box) {
  if (!a.same_shape(b)) throw InputError("cutmix: tensor shapes differ");
  if (box.top < 0 || box.left < 0 || box.height < 0 || box.width < 0 ||
      box.top + box.height > a.height || box.left + box.width > a.width) {
    throw InputError("cutmix: box outside the grid");
  }
  for (Eigen::Index c = 0; c < a.channels(); ++c) {
    a.plane(c).block(box.top, box.left, box.height, box.width) =
        b.plane(c).block(box.top, box.left, box.height, box.width);
  }
  return 1.0 - double(box.area()) / double(a.height * a.width);
}

std::pair<EmbeddingTensor, double> token_cutmix(const EmbeddingTensor& a,
                                                const EmbeddingTensor& b,
                                                double alpha, Rng& rng) {
  if (!a.same_shape(b)) throw InputError("cutmix: tensor shapes differ");
  if (a.height != a.width) throw InputError("cutmix: grid must be square");
  const CutBox box = sample_cutmix_box(a.height, alpha, rng);
  EmbeddingTensor out = a;
  const double lambda = apply_cutmix(out, b, box);
  return {std::move(out), lambda};
}

// ---------------------------------------------------------------------------

EmbeddingTensor emb_noise(const EmbeddingTensor& e, double sigma_channel,
                          double sigma_full, double prob, Rng& rng,
                          AugmentCounters* counters) {
  if (sigma_channel < 0.0 || sigma_full < 0.0) {
    throw InputError("noise scales must be non-negative");
  }
  EmbeddingTensor out = e;
  if (!rng.bernoulli(prob)) return out;
  if (counters) ++counters->noise_applied;
  if (sigma_channel > 0.0) {
    for (Eigen::Index c = 0; c < out.channels(); ++c) {
      out.data.row(c).array() += static_cast<float>(rng.normal(0.0, sigma_channel));
    }
  }
  if (sigma_full > 0.0) {
    for (Eigen::Index c = 0; c < out.channels(); ++c) {
      for (Eigen::Index k = 0; k < out.data.cols(); ++k) {
        out.data(c, k) += static_cast<float>(rng.normal(0.0, sigma_full));
      }
    }
  }
  return out;
}

}  // namespace vtok
