#include "vtok/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "vtok/error.hpp"

namespace vtok {

Codebook::Codebook(Eigen::MatrixXf vectors,
                   std::optional<std::vector<std::int64_t>> original_ids)
    : vectors_(std::move(vectors)), original_ids_(std::move(original_ids)) {
  if (vectors_.rows() < 1 || vectors_.cols() < 1) {
    throw InputError("codebook must have at least one code of dimension >= 1");
  }
  if (vectors_.cols() > 65536) {
    throw InputError("codebook size " + std::to_string(vectors_.cols()) +
                     " exceeds the 16-bit token range");
  }
  if (!vectors_.allFinite()) {
    throw InputError("codebook contains non-finite entries");
  }
  if (original_ids_) {
    if (static_cast<Eigen::Index>(original_ids_->size()) != vectors_.cols()) {
      throw InputError("original_ids length does not match codebook size");
    }
    std::unordered_set<std::int64_t> seen(original_ids_->begin(),
                                          original_ids_->end());
    if (seen.size() != original_ids_->size()) {
      throw InputError("original_ids contains duplicates");
    }
  }
}

Codebook Codebook::permuted(std::span<const Token> perm) const {
  if (static_cast<Eigen::Index>(perm.size()) != size()) {
    throw InputError("permutation length does not match codebook size");
  }
  Eigen::MatrixXf out(dim(), size());
  std::optional<std::vector<std::int64_t>> ids;
  if (original_ids_) ids.emplace(original_ids_->size());
  for (Eigen::Index k = 0; k < size(); ++k) {
    out.col(perm[k]) = vectors_.col(k);
    if (ids) (*ids)[perm[k]] = (*original_ids_)[k];
  }
  return Codebook(std::move(out), std::move(ids));
}

double Codebook::mean_channel_stddev() const {
  const Eigen::MatrixXd v = vectors_.cast<double>();
  const Eigen::VectorXd mean = v.rowwise().mean();
  const Eigen::VectorXd var =
      (v.colwise() - mean).array().square().rowwise().mean();
  return var.array().sqrt().mean();
}

Token quantize(const Eigen::Ref<const Eigen::VectorXf>& vector,
               const Codebook& cb) {
  if (vector.size() != cb.dim()) {
    throw InputError("vector dimension " + std::to_string(vector.size()) +
                     " does not match code dimension " +
                     std::to_string(cb.dim()));
  }
  if (!vector.allFinite()) throw InputError("vector has non-finite entries");
  const Eigen::VectorXd v = vector.cast<double>();
  Token best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < cb.size(); ++k) {
    const double d = (cb.vectors().col(k).cast<double>() - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<Token>(k);
    }
  }
  return best;
}

std::vector<Token> quantize_all(const Eigen::Ref<const Eigen::MatrixXf>& patches,
                                const Codebook& cb) {
  std::vector<Token> out(patches.cols());
  for (Eigen::Index p = 0; p < patches.cols(); ++p) {
    out[p] = quantize(patches.col(p), cb);
  }
  return out;
}

SynonymTable build_synonyms(const Codebook& cb, std::size_t s) {
  if (s == 0) throw InputError("synonym count must be >= 1");
  const Eigen::Index v = cb.size();
  const std::size_t keep = std::min<std::size_t>(s, v - 1);
  const Eigen::MatrixXd vec = cb.vectors().cast<double>();

  std::vector<std::vector<Token>> lists(v);
  std::vector<std::pair<double, Token>> cand;
  cand.reserve(v);
  for (Eigen::Index k = 0; k < v; ++k) {
    cand.clear();
    for (Eigen::Index j = 0; j < v; ++j) {
      if (j == k) continue;
      cand.emplace_back((vec.col(j) - vec.col(k)).squaredNorm(),
                        static_cast<Token>(j));
    }
    std::partial_sort(cand.begin(), cand.begin() + keep, cand.end());
    lists[k].reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) lists[k].push_back(cand[i].second);
  }
  return SynonymTable(std::move(lists));
}

SynonymTable SynonymTable::permuted(std::span<const Token> perm) const {
  if (perm.size() != lists_.size()) {
    throw InputError("permutation length does not match synonym table size");
  }
  std::vector<std::vector<Token>> out(lists_.size());
  for (std::size_t k = 0; k < lists_.size(); ++k) {
    auto& dst = out[perm[k]];
    dst.reserve(lists_[k].size());
    for (Token t : lists_[k]) dst.push_back(perm[t]);
  }
  return SynonymTable(std::move(out));
}

std::vector<Token> PopularityPermutation::inverse() const {
  std::vector<Token> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    inv[perm[k]] = static_cast<Token>(k);
  }
  return inv;
}

void TokenCounter::add(std::span<const Token> tokens) {
  for (Token t : tokens) {
    if (t >= counts_.size()) {
      throw InputError("token " + std::to_string(t) + " out of range for V=" +
                       std::to_string(counts_.size()));
    }
    ++counts_[t];
  }
}

void TokenCounter::merge(const TokenCounter& other) {
  if (other.counts_.size() != counts_.size()) {
    throw InputError("cannot merge counters over different vocabularies");
  }
  for (std::size_t k = 0; k < counts_.size(); ++k) {
    counts_[k] += other.counts_[k];
  }
}

PopularityPermutation rank_by_popularity(std::vector<std::uint64_t> counts) {
  if (counts.empty() || counts.size() > 65536) {
    throw InputError("vocabulary size must be in [1, 65536]");
  }
  std::vector<Token> order(counts.size());
  std::iota(order.begin(), order.end(), Token{0});
  // Zero counts sort last naturally; stable_sort keeps ascending old index.
  std::stable_sort(order.begin(), order.end(), [&](Token a, Token b) {
    return counts[a] > counts[b];
  });
  PopularityPermutation out;
  out.perm.resize(counts.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.perm[order[r]] = static_cast<Token>(r);
  }
  out.counts = std::move(counts);
  return out;
}

PopularityPermutation rank_by_popularity(std::span<const Token> stream,
                                         std::size_t vocab) {
  TokenCounter counter(vocab);
  counter.add(stream);
  return rank_by_popularity(counter.counts());
}

}  // namespace vtok
