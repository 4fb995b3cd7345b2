#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "vtok/adapter.hpp"
#include "vtok/archive.hpp"
#include "vtok/augment.hpp"

namespace vtok {

enum class Mode { kTrain, kEval };

struct PipelineConfig {
  AugmentConfig augment;
  std::size_t batch_size = 64;
  std::uint64_t epoch = 0;
  Mode mode = Mode::kTrain;
  std::uint64_t shuffle_seed = 0;
  bool apply_adapter = false;
  /// 0 means one more than the largest stored label.
  std::size_t num_classes = 0;
  std::size_t workers = 1;
};

struct Batch {
  std::uint64_t epoch = 0;
  std::uint64_t index = 0;
  std::vector<std::uint64_t> records;
  Eigen::Index channels = 0, height = 0, width = 0;
  /// B x (C*H*W), each row a sample in C x H x W order.
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> data;
  /// B x classes; rows sum to one. Zero columns if the archive is unlabeled.
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;

  Eigen::Index size() const { return data.rows(); }
  /// Tensor record [B, C, H, W] followed by label record [B, classes, 1, 1].
  std::vector<std::uint8_t> dump() const;
};

struct PipelineCounters {
  std::uint64_t tokens_decoded = 0;
  double decode_seconds = 0;
  AugmentCounters augment;

  double tokens_per_second() const {
    return decode_seconds > 0 ? tokens_decoded / decode_seconds : 0.0;
  }
};

/// Seekable batch producer. Every sample's randomness is derived from
/// (seed, epoch, position in epoch), so output is independent of worker
/// count and of where iteration started.
class Pipeline {
 public:
  /// Throws ConfigError for invalid settings, a train-mode CutMix run over an
  /// unlabeled archive, labels outside num_classes, or apply_adapter without
  /// an adapter.
  Pipeline(std::shared_ptr<const TokenArchive> archive, PipelineConfig config,
           std::optional<StemAdapter<float>> adapter = std::nullopt);

  /// Next batch of the current epoch, or nullopt once it is exhausted.
  std::optional<Batch> next_batch();
  void seek(std::uint64_t epoch, std::uint64_t batch_index);

  std::uint64_t epoch() const { return epoch_; }
  std::uint64_t batch_index() const { return batch_index_; }
  std::uint64_t batches_per_epoch() const;
  /// Record visiting order for an epoch.
  std::vector<std::uint64_t> epoch_order(std::uint64_t epoch) const;

  const PipelineConfig& config() const { return config_; }
  const AugmentConfig& augment() const { return augment_; }
  const SynonymTable& synonyms() const { return synonyms_; }
  std::size_t num_classes() const { return num_classes_; }
  PipelineCounters counters() const;

  /// Pre-CutMix embedding of one sample (decode, EDA, one-hot, crop, embed).
  EmbeddingTensor prepare_sample(std::uint64_t record, std::uint64_t epoch,
                                 std::uint64_t position,
                                 AugmentCounters* counters = nullptr) const;

 private:
  std::shared_ptr<const TokenArchive> archive_;
  PipelineConfig config_;
  AugmentConfig augment_;
  std::optional<StemAdapter<float>> adapter_;
  SynonymTable synonyms_;
  std::size_t num_classes_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t batch_index_ = 0;
  std::vector<std::uint64_t> order_;
  std::uint64_t order_epoch_ = ~std::uint64_t{0};

  mutable std::atomic<std::uint64_t> tokens_decoded_{0};
  mutable std::atomic<std::uint64_t> decode_nanos_{0};
  AugmentCounters augment_counters_;
};

struct BenchReport {
  std::size_t records = 0;
  double sequential_seconds_per_100 = 0;
  double random_access_seconds_mean = 0;
  double tokens_per_second = 0;
};

/// Decode timing: sequential pass over up to `records` records, then the
/// same number of uniformly random reads.
BenchReport run_bench(const TokenArchive& archive, std::size_t records,
                      std::uint64_t seed);

/// Runs fn(i) for i in [0, n) on up to `workers` threads; the first
/// exception is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          if (failed.load()) return;
          try {
            fn(i);
          } catch (...) {
            if (!failed.exchange(true)) error = std::current_exception();
            return;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace vtok
