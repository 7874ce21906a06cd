#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "livespeech/harness/config.hpp"
#include "livespeech/harness/eval.hpp"
#include "livespeech/harness/train.hpp"

namespace livespeech::harness {

/// File layout of a run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path codebooks() const { return root / "codebooks.rvq"; }
  std::filesystem::path tokens() const { return root / "tokens.bin"; }
  std::filesystem::path lm() const { return root / "lm"; }
  std::filesystem::path metrics() const { return lm() / "metrics.csv"; }
  std::filesystem::path report() const { return root / "report.json"; }
  /// best.lspc when training produced one, else last.lspc.
  std::filesystem::path default_checkpoint() const;
};

using Log = std::function<void(const std::string&)>;

void run_synth(const RunConfig& cfg, const RunPaths& paths, const Log& log);
void run_train_codec(const RunConfig& cfg, const RunPaths& paths, const Log& log);
void run_tokenize(const RunConfig& cfg, const RunPaths& paths, const Log& log);

struct TrainLmOptions {
  std::optional<std::filesystem::path> resume;
  std::size_t stop_after = 0;
};
void run_train_lm(const RunConfig& cfg, const RunPaths& paths, const TrainLmOptions& opts, const Log& log);

/// Loads a checkpoint and checks it against cfg.model.
Checkpoint load_for(const RunConfig& cfg, const std::filesystem::path& path);

EvalReport run_eval(const RunConfig& cfg, const RunPaths& paths, const std::filesystem::path& checkpoint, bool plots,
                    const Log& log);

sampler::SearchResult run_gridsearch(const RunConfig& cfg, const RunPaths& paths,
                                     const std::filesystem::path& checkpoint, const Log& log);

/// Every stage from synthesis to evaluation (stream bench excluded, so the
/// outputs are deterministic).
void run_pipeline(const RunConfig& cfg, const RunPaths& paths, const Log& log);

}  // namespace livespeech::harness
