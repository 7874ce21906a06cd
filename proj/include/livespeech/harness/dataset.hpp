#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "livespeech/codec/rvq.hpp"
#include "livespeech/numerics/tensor.hpp"

namespace livespeech::harness {

using codec::FeatureSequence;

/// Synthetic speech-like corpus. Each symbol owns a D-dim spectral
/// prototype; a speaker vector theta scales it per dimension and adds a
/// speaker-specific offset:
///
///   f = P_s * (1 + mod_scale * M theta) + shift_scale * B theta + noise
struct DatasetSpec {
  std::size_t symbol_vocab = 26;
  std::size_t theta_dim = 6;
  std::size_t min_frames = 3;  // per symbol
  std::size_t max_frames = 10;
  std::size_t feature_dim = 16;
  float frame_rate = 75.0f;
  std::size_t n_speakers = 40;
  std::size_t n_utterances = 800;
  std::size_t test_speakers = 8;
  std::size_t min_text = 4;
  std::size_t max_text = 8;
  double noise_std = 0.05;
  double mod_scale = 0.15;
  double shift_scale = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

/// The deterministic part of the feature model, rebuilt from the spec.
class Generator {
 public:
  explicit Generator(const DatasetSpec& spec);

  const DatasetSpec& spec() const { return spec_; }
  /// Noise-free frame of symbol s for speaker theta.
  std::vector<double> clean_frame(std::size_t s, std::span<const double> theta) const;
  /// Jacobian of clean_frame w.r.t. theta (D x P, row-major); the frame is
  /// affine in theta.
  std::vector<double> theta_jacobian(std::size_t s) const;
  std::size_t base_duration(std::size_t s) const { return durations_[s]; }

  FeatureSequence render(std::span<const int> text, std::span<const double> theta, std::uint64_t seed,
                         double noise_std, std::vector<int>* frame_symbols = nullptr) const;

 private:
  DatasetSpec spec_;
  numerics::TensorD prototypes_;  // S x D
  numerics::TensorD mod_;         // D x P
  numerics::TensorD shift_;       // D x P
  std::vector<std::size_t> durations_;
};

struct Utterance {
  std::size_t id = 0;
  std::vector<int> text;
  std::size_t speaker = 0;
  std::vector<double> theta;
  FeatureSequence features;
  std::size_t enrollment_of = 0;  // another utterance of the same speaker
  bool test = false;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Utterance> utterances;

  std::vector<std::size_t> train_ids() const;
  std::vector<std::size_t> test_ids() const;
  /// Throws if a test speaker has a training utterance or an enrollment
  /// points at the utterance itself or another speaker.
  void check_split() const;
};

Dataset synth_dataset(const DatasetSpec& spec);

// dataset.json (spec + metadata) and features.bin ("FEAT", u32 count, then
// per utterance u32 T, u32 D, T*D f32).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// Levenshtein distance.
std::size_t edit_distance(std::span<const int> a, std::span<const int> b);

/// Per-frame symbol labels and a least-squares speaker estimate, refined by
/// alternating the two a few times.
struct FrameAnalysis {
  std::vector<int> labels;
  std::vector<double> theta;
  bool theta_fitted = false;
};
FrameAnalysis analyze_features(const FeatureSequence& f, const Generator& gen);

/// Frames classified to the nearest theta-adjusted prototype, repeats
/// collapsed, then edit distance over reference length (capped at 1).
double oracle_symbol_error_rate(const FeatureSequence& f, std::span<const int> text, const Generator& gen);

/// Cosine between the least-squares speaker estimates of two sequences.
/// Each needs at least theta_dim frames.
double speaker_similarity_proxy(const FeatureSequence& a, const FeatureSequence& b, const Generator& gen);

}  // namespace livespeech::harness
