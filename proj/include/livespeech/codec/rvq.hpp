#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "livespeech/codec/code_grid.hpp"
#include "livespeech/numerics/tensor.hpp"

namespace livespeech::codec {

using numerics::TensorF;

/// T x D feature frames at a fixed frame rate.
struct FeatureSequence {
  TensorF frames;
  float frame_rate_hz = 75.0f;

  FeatureSequence() = default;
  explicit FeatureSequence(TensorF f, float rate = 75.0f) : frames(std::move(f)), frame_rate_hz(rate) {}

  std::size_t length() const { return frames.rank() == 2 ? frames.rows() : 0; }
  std::size_t dim() const { return frames.rank() == 2 ? frames.cols() : 0; }
  double duration_s() const { return static_cast<double>(length()) / frame_rate_hz; }
  void validate() const;
};

/// Q stages of K x D codewords. With zero_reserved, entry 0 of every stage is
/// the zero vector, so a stage can always leave the residual unchanged.
struct Codebooks {
  std::vector<TensorF> stages;
  bool zero_reserved = true;

  std::size_t num_stages() const { return stages.size(); }
  std::size_t codebook_size() const { return stages.empty() ? 0 : stages[0].rows(); }
  std::size_t dim() const { return stages.empty() ? 0 : stages[0].cols(); }
  void validate() const;

  friend bool operator==(const Codebooks&, const Codebooks&) = default;
};

struct KMeansOptions {
  std::size_t iterations = 20;
  bool zero_reserved = true;
};

/// Trains stage q by k-means on the residuals left by stages 1..q-1.
Codebooks train_codebooks(std::span<const FeatureSequence> corpus, std::size_t num_stages, std::size_t codebook_size,
                          std::uint64_t seed, const KMeansOptions& options = {});

CodeGrid rvq_encode(const FeatureSequence& z, const Codebooks& cb);

/// Sum of the first q_used stage codewords per frame.
FeatureSequence rvq_decode(const CodeGrid& grid, const Codebooks& cb, std::size_t q_used);

/// Squared reconstruction error of each frame using the first q_used stages.
std::vector<double> frame_errors(const FeatureSequence& z, const Codebooks& cb, std::size_t q_used);

/// Mean squared error over all frames and dimensions.
float quantization_error(const FeatureSequence& z, const Codebooks& cb, std::size_t q_used);

// Codebook file: magic "RVQ1", u32 Q, u32 K, u32 D, u32 zero_reserved, then
// Q*K*D little-endian f32 values, stage-major then row-major.
void save_codebooks(const std::filesystem::path& path, const Codebooks& cb);
Codebooks load_codebooks(const std::filesystem::path& path);
void write_codebooks(std::ostream& os, const Codebooks& cb);
Codebooks read_codebooks(std::istream& is);

}  // namespace livespeech::codec
