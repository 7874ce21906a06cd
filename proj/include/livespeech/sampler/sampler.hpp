#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "livespeech/codec/rvq.hpp"
#include "livespeech/model/decoder.hpp"
#include "livespeech/util/random.hpp"

namespace livespeech::sampler {

/// Codebooks [0, n_sb) are drawn from the top-k of softmax(logits / tau);
/// the rest are argmax. Temperature never touches the greedy codebooks.
struct SamplerConfig {
  double temperature = 1.0;
  std::size_t top_k = 10;
  std::size_t n_sb = 0;
  std::uint64_t seed = 0;

  void validate(std::size_t Q) const;
  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

/// Argmax with ties going to the lowest index.
int argmax(std::span<const float> row);

/// One code per codebook from Q x K logits.
std::vector<int> sample_step(const numerics::TensorF& logits, const SamplerConfig& cfg, util::Rng& rng);

using Decoder = model::Decoder<float>;
using Prefix = model::ConditionPrefix<float>;

/// Runs T + Q - 1 delayed-pattern steps and returns the unshifted Q x T grid.
/// Positions the layout reserves for PAD are forced to PAD.
codec::CodeGrid generate(const Decoder& model, const Prefix& prefix, std::size_t frames, const SamplerConfig& cfg,
                         model::Routing routing = model::Routing::grouped);

enum class Pacing { off, real_time };

struct StreamEvent {
  std::size_t step = 0;                          // 1-based shifted column
  std::optional<std::size_t> completed_frame;    // 1-based
  std::vector<int> codes;                        // Q codes of this column, PAD included
  std::optional<codec::FeatureSequence> chunk;   // decoded completed frame
  double t_wall = 0.0;                           // seconds since generation start
};

struct StreamReport {
  double rtf = 0.0;
  double first_chunk_latency_s = 0.0;
  std::vector<double> step_durations_s;
  std::size_t frames = 0;
  double compute_s = 0.0;
  double audio_s = 0.0;

  double step_percentile_ms(double pct) const;
  std::string to_json() const;
  /// frames, RTF, latency (ms), p50/p95 step time (ms) on one line.
  std::string summary() const;
};

struct StreamOptions {
  Pacing pacing = Pacing::off;
  float frame_rate_hz = 75.0f;
  /// Used to decode completed frames into chunks; required.
  const codec::Codebooks* codebooks = nullptr;
  std::function<void(const StreamEvent&)> on_event;
  /// Test hook: spin until each step has taken at least this long, so the
  /// measured compute per step is fixed.
  double min_step_compute_s = 0.0;
  model::Routing routing = model::Routing::grouped;
};

struct StreamResult {
  codec::CodeGrid grid;
  std::vector<StreamEvent> events;
  StreamReport report;
};

/// Same decoding as generate(), one event per step. The clock starts after
/// the condition prefix has been encoded; per-step durations are measured
/// before any pacing wait, and RTF counts compute only.
StreamResult generate_stream(const Decoder& model, const Prefix& prefix, std::size_t frames,
                             const SamplerConfig& cfg, const StreamOptions& options);

struct SearchGrid {
  std::vector<double> temperatures{1.0, 1.1, 1.2};
  std::vector<std::size_t> top_ks{10, 15, 20};
  std::vector<std::size_t> n_sbs{1, 2, 3, 4, 8, 16};
};

struct SearchEntry {
  SamplerConfig config;
  double score = 0.0;
};

struct SearchResult {
  SamplerConfig best;
  double best_score = 0.0;
  std::vector<SearchEntry> evaluated;  // in evaluation order
};

/// Exhaustive search maximizing objective(config). n_sb values above Q are
/// skipped. Ties go to the lower n_sb, then the lower temperature, then the
/// lower top_k.
SearchResult grid_search(const SearchGrid& grid, std::size_t Q, std::uint64_t seed,
                         const std::function<double(const SamplerConfig&)>& objective);

}  // namespace livespeech::sampler
