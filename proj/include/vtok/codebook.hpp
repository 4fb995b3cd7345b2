#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vtok/tensor.hpp"

namespace vtok {

/// Frozen tokenizer codebook: one column per code.
class Codebook {
 public:
  Codebook() = default;
  /// Throws InputError on empty shape, non-finite entries, V > 65536, or
  /// original_ids of the wrong length / with duplicates.
  explicit Codebook(Eigen::MatrixXf vectors,
                    std::optional<std::vector<std::int64_t>> original_ids = {});

  Eigen::Index dim() const { return vectors_.rows(); }
  Eigen::Index size() const { return vectors_.cols(); }
  const Eigen::MatrixXf& vectors() const { return vectors_; }
  const std::optional<std::vector<std::int64_t>>& original_ids() const {
    return original_ids_;
  }

  /// Column reorder: result column perm[k] is this column k.
  Codebook permuted(std::span<const Token> perm) const;

  /// Mean over dimensions of the per-dimension standard deviation across
  /// codes. Used to scale default embedding noise.
  double mean_channel_stddev() const;

 private:
  Eigen::MatrixXf vectors_;
  std::optional<std::vector<std::int64_t>> original_ids_;
};

/// Index of the nearest code (squared Euclidean, accumulated in double);
/// ties go to the lowest index.
Token quantize(const Eigen::Ref<const Eigen::VectorXf>& vector,
               const Codebook& cb);

/// Quantizes every column of a d_c x P matrix of patch vectors.
std::vector<Token> quantize_all(const Eigen::Ref<const Eigen::MatrixXf>& patches,
                                const Codebook& cb);

class SynonymTable {
 public:
  SynonymTable() = default;
  explicit SynonymTable(std::vector<std::vector<Token>> lists)
      : lists_(std::move(lists)) {}

  std::size_t size() const { return lists_.size(); }
  const std::vector<Token>& operator[](std::size_t code) const {
    return lists_[code];
  }

  /// Same geometry expressed in the index space given by perm (old -> new).
  SynonymTable permuted(std::span<const Token> perm) const;

  friend bool operator==(const SynonymTable&, const SynonymTable&) = default;

 private:
  std::vector<std::vector<Token>> lists_;
};

/// min(s, V-1) nearest other codes per code, ascending distance, ties by
/// lowest index. Throws InputError if s == 0.
SynonymTable build_synonyms(const Codebook& cb, std::size_t s = 5);

struct PopularityPermutation {
  std::vector<Token> perm;            // old index -> rank
  std::vector<std::uint64_t> counts;  // by old index

  std::vector<Token> inverse() const;
  Token operator()(Token old_index) const { return perm[old_index]; }
};

/// Streaming occurrence counter; merge() is associative so partial counts
/// from several workers can be combined.
class TokenCounter {
 public:
  explicit TokenCounter(std::size_t vocab) : counts_(vocab, 0) {}

  /// Throws InputError on a value >= vocab.
  void add(std::span<const Token> tokens);
  void merge(const TokenCounter& other);

  std::size_t vocab() const { return counts_.size(); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  std::vector<std::uint64_t> counts_;
};

/// Most frequent -> 0; count ties and unseen codes ordered by old index.
PopularityPermutation rank_by_popularity(std::vector<std::uint64_t> counts);
PopularityPermutation rank_by_popularity(std::span<const Token> stream,
                                         std::size_t vocab);

}  // namespace vtok
