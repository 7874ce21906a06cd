#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "livespeech/harness/dataset.hpp"
#include "livespeech/loss/adaptive_loss.hpp"
#include "livespeech/model/config.hpp"
#include "livespeech/sampler/sampler.hpp"

namespace livespeech::harness {

struct CodecConfig {
  std::size_t Q = 8;
  std::size_t K = 64;
  std::size_t iterations = 20;
  bool zero_reserved = true;
  std::size_t max_train_frames = 20000;  // k-means subsample, 0 = all

  friend bool operator==(const CodecConfig&, const CodecConfig&) = default;
};

struct TrainConfig {
  std::size_t steps = 20000;
  double lr = 2e-3;
  std::size_t warmup = 1000;
  double min_lr_ratio = 0.1;  // cosine floor as a fraction of lr
  std::size_t batch = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip = 1.0;  // global gradient norm, 0 = off
  std::size_t eval_every = 1000;
  std::size_t val_utterances = 16;  // held-out training-speaker utterances
  std::size_t val_generate = 8;     // of those, decoded for symbol error

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EvalConfig {
  std::size_t test_utterances = 64;  // 0 = every test utterance
  std::size_t codec_utterances = 200;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct StreamBenchConfig {
  std::size_t frames = 150;
  bool real_time = false;
  std::size_t repeats = 3;

  friend bool operator==(const StreamBenchConfig&, const StreamBenchConfig&) = default;
};

/// Everything a run depends on besides the dataset files. Q and K live in
/// [codec]; the model's Q, K, text_vocab and feat_dim are filled from
/// [codec] and [data], and the loss's total_steps from [train].
struct RunConfig {
  std::uint64_t seed = 1;
  DatasetSpec data;
  CodecConfig codec;
  model::ModelConfig model;
  loss::LossConfig loss;
  sampler::SamplerConfig sampler;
  TrainConfig train;
  sampler::SearchGrid grid;
  EvalConfig eval;
  StreamBenchConfig stream;

  /// Copies the shared fields into model/loss and validates the whole config.
  void finalize();
  void validate() const;

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

/// INI-style text: [section] headers, key = value lines, '#' or ';'
/// comments. Unknown sections or keys are errors. Missing keys keep their
/// defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text with every key; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

}  // namespace livespeech::harness
