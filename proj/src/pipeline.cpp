#include "vtok/pipeline.hpp"

#include <chrono>
#include <numeric>
#include <string>

#include "vtok/formats.hpp"

namespace vtok {

namespace {

// Stream tags for Rng::derive.
enum : std::uint64_t { kStageShuffle = 1, kStagePrepare = 2, kStageMix = 3 };

using Clock = std::chrono::steady_clock;

}  // namespace

std::vector<std::uint8_t> Batch::dump() const {
  std::vector<std::uint8_t> out;
  append_tensor(out,
                {static_cast<std::uint32_t>(data.rows()),
                 static_cast<std::uint32_t>(channels),
                 static_cast<std::uint32_t>(height),
                 static_cast<std::uint32_t>(width)},
                {data.data(), static_cast<std::size_t>(data.size())});
  append_tensor(out,
                {static_cast<std::uint32_t>(labels.rows()),
                 static_cast<std::uint32_t>(labels.cols()), 1, 1},
                {labels.data(), static_cast<std::size_t>(labels.size())});
  return out;
}

Pipeline::Pipeline(std::shared_ptr<const TokenArchive> archive,
                   PipelineConfig config,
                   std::optional<StemAdapter<float>> adapter)
    : archive_(std::move(archive)),
      config_(std::move(config)),
      adapter_(std::move(adapter)) {
  if (!archive_) throw ConfigError("pipeline needs an archive");
  if (config_.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (config_.workers == 0) throw ConfigError("workers must be >= 1");
  config_.augment.validate();

  augment_ = config_.augment.resolved(archive_->ranked_codebook());
  if (config_.mode == Mode::kEval) {
    augment_.sr_prob = 0.0;
    augment_.rs_prob = 0.0;
    augment_.cutmix_prob = 0.0;
    augment_.noise_prob = 0.0;
  }

  const auto& h = archive_->header();
  if (h.has_labels()) {
    std::size_t max_label = 0;
    for (auto l : archive_->labels()) max_label = std::max<std::size_t>(max_label, l);
    num_classes_ = config_.num_classes
                       ? config_.num_classes
                       : (archive_->size() > 0 ? max_label + 1 : 0);
    if (archive_->size() > 0 && max_label >= num_classes_) {
      throw ConfigError("label " + std::to_string(max_label) +
                        " outside num_classes=" + std::to_string(num_classes_));
    }
  } else if (config_.mode == Mode::kTrain && augment_.cutmix_prob > 0.0) {
    throw ConfigError("train-mode CutMix needs a labeled archive");
  }

  if (config_.apply_adapter) {
    if (!adapter_) throw ConfigError("apply_adapter set without an adapter");
    if (adapter_->in_channels != archive_->codebook().dim()) {
      throw ConfigError("adapter input channels do not match the codebook");
    }
    stem_output_side(adapter_->variant, augment_.out_side);
  }

  synonyms_ = build_synonyms(archive_->codebook(), augment_.synonyms)
                  .permuted(archive_->permutation());
  seek(config_.epoch, 0);
}

std::uint64_t Pipeline::batches_per_epoch() const {
  const std::uint64_t n = archive_->size();
  const std::uint64_t b = config_.batch_size;
  return config_.mode == Mode::kTrain ? n / b : (n + b - 1) / b;
}

std::vector<std::uint64_t> Pipeline::epoch_order(std::uint64_t epoch) const {
  std::vector<std::uint64_t> order(archive_->size());
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  if (config_.mode == Mode::kTrain) {
    Rng rng = Rng::derive(config_.shuffle_seed, epoch, 0, kStageShuffle);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
  }
  return order;
}

void Pipeline::seek(std::uint64_t epoch, std::uint64_t batch_index) {
  epoch_ = epoch;
  batch_index_ = batch_index;
  if (order_epoch_ != epoch) {
    order_ = epoch_order(epoch);
    order_epoch_ = epoch;
  }
}

EmbeddingTensor Pipeline::prepare_sample(std::uint64_t record,
                                         std::uint64_t epoch,
                                         std::uint64_t position,
                                         AugmentCounters* counters) const {
  Rng rng = Rng::derive(augment_.seed, epoch, position, kStagePrepare);

  const auto t0 = Clock::now();
  TokenGrid grid = archive_->read_image(record);
  const auto t1 = Clock::now();
  tokens_decoded_ += static_cast<std::uint64_t>(grid.size());
  decode_nanos_ += static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());

  if (config_.mode == Mode::kTrain) {
    grid = token_eda_sr(grid, synonyms_, augment_.sr_prob, rng, counters);
    grid = token_eda_rs(grid, augment_.rs_prob, rng, counters);
  }
  const OneHotGrid oh = one_hot(grid, archive_->header().vocab);
  const OneHotGrid cropped =
      config_.mode == Mode::kTrain
          ? token_rrc(oh, augment_, rng)
          : crop_resize(oh, CropBox{0, 0, oh.height, oh.width},
                        augment_.out_side, augment_.renormalize);
  return embed(cropped, archive_->ranked_codebook());
}

std::optional<Batch> Pipeline::next_batch() {
  if (batch_index_ >= batches_per_epoch()) return std::nullopt;
  const std::uint64_t first = batch_index_ * config_.batch_size;
  const std::uint64_t last =
      std::min<std::uint64_t>(first + config_.batch_size, archive_->size());
  const std::size_t count = last - first;

  Batch batch;
  batch.epoch = epoch_;
  batch.index = batch_index_;
  batch.records.assign(order_.begin() + first, order_.begin() + last);

  std::vector<EmbeddingTensor> pre(count);
  std::vector<AugmentCounters> sample_counters(count);
  parallel_for(count, config_.workers, [&](std::size_t i) {
    pre[i] = prepare_sample(batch.records[i], epoch_, first + i,
                            &sample_counters[i]);
  });

  std::vector<ChannelGrid<float>> out(count);
  std::vector<std::size_t> partner(count);
  std::vector<double> lambda(count, 1.0);
  parallel_for(count, config_.workers, [&](std::size_t i) {
    Rng rng = Rng::derive(augment_.seed, epoch_, first + i, kStageMix);
    EmbeddingTensor e = pre[i];
    partner[i] = i;
    if (rng.bernoulli(augment_.cutmix_prob)) {
      std::size_t j = rng.below(count);
      if (j == i) j = rng.below(count);
      const CutBox box = sample_cutmix_box(e.height, augment_.cutmix_alpha, rng);
      lambda[i] = apply_cutmix(e, pre[j], box);
      partner[i] = j;
      ++sample_counters[i].cutmix_applied;
    }
    e = emb_noise(e, *augment_.sigma_channel, *augment_.sigma_full,
                  augment_.noise_prob, rng, &sample_counters[i]);
    out[i] = config_.apply_adapter ? stem_forward(e, *adapter_) : std::move(e);
  });

  const auto& shape = out.front();
  batch.channels = shape.channels();
  batch.height = shape.height;
  batch.width = shape.width;
  batch.data.resize(count, shape.data.size());
  batch.labels = decltype(batch.labels)::Zero(count, num_classes_);
  for (std::size_t i = 0; i < count; ++i) {
    batch.data.row(i) = Eigen::Map<const Eigen::RowVectorXf>(
        out[i].data.data(), out[i].data.size());
    if (num_classes_ > 0) {
      const auto la = *archive_->label(batch.records[i]);
      const auto lb = *archive_->label(batch.records[partner[i]]);
      batch.labels(i, la) += static_cast<float>(lambda[i]);
      batch.labels(i, lb) += static_cast<float>(1.0 - lambda[i]);
    }
    augment_counters_ += sample_counters[i];
  }
  ++batch_index_;
  return batch;
}

PipelineCounters Pipeline::counters() const {
  PipelineCounters c;
  c.tokens_decoded = tokens_decoded_.load();
  c.decode_seconds = decode_nanos_.load() * 1e-9;
  c.augment = augment_counters_;
  return c;
}

BenchReport run_bench(const TokenArchive& archive, std::size_t records,
                      std::uint64_t seed) {
  BenchReport r;
  r.records = std::min<std::size_t>(records, archive.size());
  if (r.records == 0) return r;
  std::uint64_t tokens = 0;

  auto t0 = Clock::now();
  for (std::size_t i = 0; i < r.records; ++i) {
    tokens += archive.read_image(i).size();
  }
  const double seq = std::chrono::duration<double>(Clock::now() - t0).count();
  r.sequential_seconds_per_100 = seq / r.records * 100.0;
  r.tokens_per_second = seq > 0 ? tokens / seq : 0.0;

  Rng rng(seed);
  t0 = Clock::now();
  for (std::size_t i = 0; i < r.records; ++i) {
    archive.read_image(rng.below(archive.size()));
  }
  const double rnd = std::chrono::duration<double>(Clock::now() - t0).count();
  r.random_access_seconds_mean = rnd / r.records;
  return r;
}

}  // namespace vtok
