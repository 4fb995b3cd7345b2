// vtok: pack, inspect, benchmark and dump visual-token archives.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vtok/adapter.hpp"
#include "vtok/archive.hpp"
#include "vtok/error.hpp"
#include "vtok/formats.hpp"
#include "vtok/pipeline.hpp"
#include "vtok/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kUsageExit = 2;

struct PackArgs {
  std::string tokens, codebook, labels, out;
  bool no_remap = false;
  bool no_huffman = false;
};

struct UnpackArgs {
  std::string archive, out, labels_out, codebook_out;
  bool ranked = false;
};

struct BenchArgs {
  std::string archive;
  std::size_t records = 100;
  std::uint64_t seed = 0;
};

struct DumpArgs {
  std::string archive, out_dir, adapter_file, adapter_variant = "conv4";
  std::string mode = "train";
  std::uint64_t seed = 0, shuffle_seed = 0, epoch = 0, adapter_seed = 0;
  std::size_t batch_size = 8, batches = 1, workers = 1, num_classes = 0;
  std::size_t adapter_dim = 768;
  bool adapter = false;
  vtok::AugmentConfig aug;
  double sigma_channel = -1, sigma_full = -1;
};

struct GenArgs {
  std::string dist = "uniform", out, labels_out, codebook_out;
  double s = 1.0;
  std::uint64_t n_images = 1000, seed = 0;
  std::uint16_t side = 32, vocab = 391, classes = 1000, dim = 32;
};

void run_pack(const PackArgs& a) {
  const auto raw = vtok::parse_raw_tokens(vtok::read_file(a.tokens));
  const auto cb = vtok::parse_codebook(vtok::read_file(a.codebook));
  if (cb.size() != raw.vocab) {
    throw vtok::FormatError("codebook has " + std::to_string(cb.size()) +
                            " codes but the token file declares V=" +
                            std::to_string(raw.vocab));
  }
  std::optional<std::vector<std::uint16_t>> labels;
  if (!a.labels.empty()) labels = vtok::parse_labels(vtok::read_file(a.labels));
  vtok::WriteOptions opts;
  opts.remap = !a.no_remap;
  opts.huffman = !a.no_huffman;
  opts.empty_side = raw.side;
  std::optional<std::span<const std::uint16_t>> label_span;
  if (labels) label_span = *labels;
  const auto report =
      vtok::write_archive(a.out, raw.grids, cb, label_span, opts);
  report.write_kv(std::cout);
}

void run_unpack(const UnpackArgs& a) {
  const auto ar = vtok::open_archive(a.archive);
  vtok::RawTokens raw;
  raw.side = ar.side();
  raw.vocab = ar.header().vocab;
  raw.grids.reserve(ar.size());
  const auto space =
      a.ranked ? vtok::IndexSpace::kRanked : vtok::IndexSpace::kOriginal;
  for (std::uint64_t i = 0; i < ar.size(); ++i) {
    raw.grids.push_back(ar.read_image(i, space));
  }
  vtok::write_file(a.out, vtok::serialize_raw_tokens(raw));
  if (!a.labels_out.empty()) {
    if (!ar.header().has_labels()) {
      throw vtok::InputError("archive has no labels to unpack");
    }
    vtok::write_file(a.labels_out, vtok::serialize_labels(ar.labels()));
  }
  if (!a.codebook_out.empty()) {
    vtok::write_file(a.codebook_out, vtok::serialize_codebook(ar.codebook()));
  }
  std::cout << "n_records=" << ar.size() << '\n';
}

void run_stats(const std::string& path) {
  vtok::stats(vtok::open_archive(path)).write_kv(std::cout);
}

void run_bench(const BenchArgs& a) {
  const auto ar = vtok::open_archive(a.archive);
  const auto r = vtok::run_bench(ar, a.records, a.seed);
  std::cout << "records=" << r.records << '\n'
            << "decode_seconds_per_100=" << r.sequential_seconds_per_100 << '\n'
            << "random_access_seconds_mean=" << r.random_access_seconds_mean
            << '\n'
            << "tokens_per_second=" << r.tokens_per_second << '\n';
}

void run_dump(DumpArgs a) {
  auto ar = std::make_shared<const vtok::TokenArchive>(
      vtok::open_archive(a.archive));
  vtok::PipelineConfig cfg;
  cfg.augment = a.aug;
  cfg.augment.seed = a.seed;
  if (a.sigma_channel >= 0) cfg.augment.sigma_channel = a.sigma_channel;
  if (a.sigma_full >= 0) cfg.augment.sigma_full = a.sigma_full;
  cfg.batch_size = a.batch_size;
  cfg.epoch = a.epoch;
  if (a.mode == "train") {
    cfg.mode = vtok::Mode::kTrain;
  } else if (a.mode == "eval") {
    cfg.mode = vtok::Mode::kEval;
  } else {
    throw vtok::ConfigError("mode must be train or eval");
  }
  cfg.shuffle_seed = a.shuffle_seed;
  cfg.workers = a.workers;
  cfg.num_classes = a.num_classes;

  std::optional<vtok::StemAdapter<float>> adapter;
  if (!a.adapter_file.empty()) {
    adapter = vtok::parse_adapter(vtok::read_file(a.adapter_file));
  } else if (a.adapter) {
    adapter = vtok::init_adapter<float>(vtok::parse_variant(a.adapter_variant),
                                        ar->codebook().dim(), a.adapter_dim,
                                        a.adapter_seed);
  }
  cfg.apply_adapter = adapter.has_value();

  vtok::Pipeline pipe(ar, cfg, adapter);
  fs::create_directories(a.out_dir);
  std::size_t written = 0;
  for (std::size_t b = 0; b < a.batches; ++b) {
    auto batch = pipe.next_batch();
    if (!batch) break;
    char name[32];
    std::snprintf(name, sizeof name, "batch_%05zu.bin", b);
    vtok::write_file(fs::path(a.out_dir) / name, batch->dump());
    ++written;
  }
  const auto c = pipe.counters();
  std::cout << "batches_written=" << written << '\n'
            << "tokens_decoded=" << c.tokens_decoded << '\n'
            << "tokens_per_second=" << c.tokens_per_second() << '\n'
            << "sr_replaced=" << c.augment.sr_replaced << '\n'
            << "rs_applied=" << c.augment.rs_applied << '\n'
            << "rs_skipped=" << c.augment.rs_skipped << '\n'
            << "cutmix_applied=" << c.augment.cutmix_applied << '\n'
            << "noise_applied=" << c.augment.noise_applied << '\n';
}

void run_gen(const GenArgs& a) {
  vtok::SyntheticSpec spec;
  if (a.dist == "uniform") {
    spec.dist = vtok::TokenDistribution::kUniform;
  } else if (a.dist == "zipf") {
    spec.dist = vtok::TokenDistribution::kZipf;
  } else {
    throw vtok::ConfigError("dist must be uniform or zipf");
  }
  spec.zipf_s = a.s;
  spec.n_images = a.n_images;
  spec.side = a.side;
  spec.vocab = a.vocab;
  spec.seed = a.seed;
  vtok::RawTokens raw{a.side, a.vocab, vtok::generate_corpus(spec)};
  const auto bytes = vtok::serialize_raw_tokens(raw);
  vtok::write_file(a.out, bytes);
  std::cout << "n_records=" << raw.grids.size() << '\n'
            << "tokens_fnv1a=" << std::hex << vtok::fnv1a(bytes) << std::dec
            << '\n';
  if (!a.labels_out.empty()) {
    const auto labels =
        vtok::synthetic_labels(a.n_images, a.classes, a.seed ^ 0x6C61626Cull);
    vtok::write_file(a.labels_out, vtok::serialize_labels(labels));
  }
  if (!a.codebook_out.empty()) {
    const auto cb =
        vtok::synthetic_codebook(a.dim, a.vocab, a.seed ^ 0x636F6465ull);
    vtok::write_file(a.codebook_out, vtok::serialize_codebook(cb));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-token archive toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  PackArgs pack;
  auto* pack_cmd = app.add_subcommand("pack", "Pack a raw token corpus");
  pack_cmd->add_option("--tokens", pack.tokens, "Raw token file")->required();
  pack_cmd->add_option("--codebook", pack.codebook, "Codebook file")->required();
  pack_cmd->add_option("--labels", pack.labels, "Labels file (u16 per record)");
  pack_cmd->add_option("--out", pack.out, "Archive to write")->required();
  pack_cmd->add_flag("--no-remap", pack.no_remap, "Skip popularity remapping");
  pack_cmd->add_flag("--no-huffman", pack.no_huffman, "Store escape bytes only");

  UnpackArgs unpack;
  auto* unpack_cmd = app.add_subcommand("unpack", "Archive back to raw tokens");
  unpack_cmd->add_option("--archive", unpack.archive)->required();
  unpack_cmd->add_option("--out", unpack.out, "Raw token file")->required();
  unpack_cmd->add_option("--labels-out", unpack.labels_out);
  unpack_cmd->add_option("--codebook-out", unpack.codebook_out);
  unpack_cmd->add_flag("--ranked", unpack.ranked,
                       "Write popularity-ranked ids instead of original ids");

  std::string stats_path;
  auto* stats_cmd = app.add_subcommand("stats", "Storage report (key=value)");
  stats_cmd->add_option("--archive", stats_path)->required();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Decode latency");
  bench_cmd->add_option("--archive", bench.archive)->required();
  bench_cmd->add_option("--records", bench.records, "Records to decode");
  bench_cmd->add_option("--seed", bench.seed);

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-batch", "Write pipeline batches");
  dump_cmd->add_option("--archive", dump.archive)->required();
  dump_cmd->add_option("--out-dir", dump.out_dir)->required();
  dump_cmd->add_option("--seed", dump.seed, "Augmentation seed");
  dump_cmd->add_option("--shuffle-seed", dump.shuffle_seed);
  dump_cmd->add_option("--epoch", dump.epoch);
  dump_cmd->add_option("--batch-size", dump.batch_size);
  dump_cmd->add_option("--batches", dump.batches, "Batches to write");
  dump_cmd->add_option("--workers", dump.workers);
  dump_cmd->add_option("--mode", dump.mode, "train or eval");
  dump_cmd->add_option("--num-classes", dump.num_classes,
                       "0 means largest label + 1");
  dump_cmd->add_option("--sr-prob", dump.aug.sr_prob);
  dump_cmd->add_option("--rs-prob", dump.aug.rs_prob);
  dump_cmd->add_option("--cutmix-prob", dump.aug.cutmix_prob);
  dump_cmd->add_option("--cutmix-alpha", dump.aug.cutmix_alpha);
  dump_cmd->add_option("--noise-prob", dump.aug.noise_prob);
  dump_cmd->add_option("--sigma-channel", dump.sigma_channel,
                       "Negative means 0.1 x codebook channel spread");
  dump_cmd->add_option("--sigma-full", dump.sigma_full,
                       "Negative means 0.1 x codebook channel spread");
  dump_cmd->add_option("--out-side", dump.aug.out_side);
  dump_cmd->add_flag("--renormalize", dump.aug.renormalize);
  dump_cmd->add_flag("--adapter", dump.adapter, "Apply a freshly initialized adapter");
  dump_cmd->add_option("--adapter-file", dump.adapter_file, "Adapter weights");
  dump_cmd->add_option("--adapter-variant", dump.adapter_variant,
                       "conv4, conv2 or pointwise");
  dump_cmd->add_option("--adapter-dim", dump.adapter_dim);
  dump_cmd->add_option("--adapter-seed", dump.adapter_seed);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Synthetic token corpus");
  gen_cmd->add_option("--dist", gen.dist, "uniform or zipf");
  gen_cmd->add_option("--s", gen.s, "Zipf exponent");
  gen_cmd->add_option("--n-images", gen.n_images);
  gen_cmd->add_option("--side", gen.side);
  gen_cmd->add_option("--vocab", gen.vocab);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out, "Raw token file")->required();
  gen_cmd->add_option("--labels-out", gen.labels_out);
  gen_cmd->add_option("--classes", gen.classes);
  gen_cmd->add_option("--codebook-out", gen.codebook_out);
  gen_cmd->add_option("--dim", gen.dim, "Codebook dimension");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageExit;
  }

  try {
    if (*pack_cmd) run_pack(pack);
    if (*unpack_cmd) run_unpack(unpack);
    if (*stats_cmd) run_stats(stats_path);
    if (*bench_cmd) run_bench(bench);
    if (*dump_cmd) run_dump(dump);
    if (*gen_cmd) run_gen(gen);
  } catch (const vtok::Error& e) {
    std::cerr << "error (" << vtok::category_name(e.category())
              << "): " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
