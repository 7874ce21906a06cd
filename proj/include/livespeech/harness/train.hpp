#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "livespeech/codec/code_grid.hpp"
#include "livespeech/codec/rvq.hpp"
#include "livespeech/harness/checkpoint.hpp"
#include "livespeech/harness/config.hpp"
#include "livespeech/harness/dataset.hpp"

namespace livespeech::harness {

// Sub-seed streams of RunConfig::seed.
inline constexpr std::uint64_t kSeedCodec = 1;
inline constexpr std::uint64_t kSeedInit = 2;
inline constexpr std::uint64_t kSeedOrder = 3;

/// k-means codec on the training speakers' features.
codec::Codebooks train_codec(const Dataset& ds, const CodecConfig& cfg, std::uint64_t seed);

/// One Q x T grid per utterance, in utterance order.
std::vector<codec::CodeGrid> tokenize(const Dataset& ds, const codec::Codebooks& cb);

// "TOKS", u32 count, then one GRID record per utterance.
void save_tokens(const std::filesystem::path& path, const std::vector<codec::CodeGrid>& grids);
std::vector<codec::CodeGrid> load_tokens(const std::filesystem::path& path);

/// Linear warmup to lr, then cosine decay to lr * min_lr_ratio at the last
/// step. `step` is 1-based.
double lr_at(const TrainConfig& cfg, std::size_t step);

/// Utterances the optimizer may see and the held-out validation ones, both
/// from training speakers only.
struct TrainSplit {
  std::vector<std::size_t> pool;
  std::vector<std::size_t> val;
};
TrainSplit split_training(const Dataset& ds, const TrainConfig& cfg);

/// Batch of the given step, a pure function of (seed, step).
std::vector<std::size_t> batch_for_step(std::uint64_t seed, std::size_t step, const std::vector<std::size_t>& pool,
                                        std::size_t batch);

/// LIVESPEECH_THREADS, default 1, at least 1.
std::size_t worker_lanes();

struct MetricsRow {
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean batch loss since the previous row
  double val_loss = 0.0;
  double val_ser = 0.0;
  double val_sim = 0.0;
  std::vector<double> val_acc;  // per codebook
  double w_mean = 0.0;
  double w_min = 0.0;
  double w_max = 0.0;
  double masked_frac = 0.0;  // p_max-masked share of non-PAD targets
};

std::string metrics_header(std::size_t Q);
std::string metrics_line(const MetricsRow& row);

struct TrainOptions {
  /// Empty = keep everything in memory. Otherwise metrics.csv, last.lspc,
  /// best.lspc and weights_final.csv are written here.
  std::filesystem::path out_dir;
  std::optional<Checkpoint> resume;
  /// Stop once this many steps are done (0 = train.steps). The schedule is
  /// still the full one, so a stopped run can be resumed.
  std::size_t stop_after = 0;
  std::size_t lanes = 0;  // 0 = worker_lanes()
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  Checkpoint last;
  std::optional<Checkpoint> best;  // lowest validation symbol error
  std::vector<double> step_losses;  // steps run in this call
  std::vector<MetricsRow> metrics;
  std::string metrics_csv;
};

/// Adam on weighted_ce_loss over delayed grids, conditioned on the text and
/// a different utterance of the same speaker. A non-finite loss or gradient
/// throws RuntimeFailure with the step, utterance and per-codebook CE.
TrainResult train_lm(const RunConfig& cfg, const Dataset& ds, const std::vector<codec::CodeGrid>& tokens,
                     const codec::Codebooks& cb, const TrainOptions& options = {});

}  // namespace livespeech::harness
