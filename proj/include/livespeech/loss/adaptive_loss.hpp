#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "livespeech/numerics/tape.hpp"
#include "livespeech/patterns/patterns.hpp"

namespace livespeech::loss {

enum class Scheme { uniform, adaptive, static_priority };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

struct LossConfig {
  Scheme scheme = Scheme::uniform;
  double lambda = 0.0;
  std::optional<double> p_max;
  /// Initial static-priority weights; codebooks past the end get 1.
  std::vector<double> static_init{16.0, 8.0, 4.0, 2.0};
  std::size_t total_steps = 20000;

  void validate() const;
  std::vector<double> static_initial(std::size_t Q) const;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// p~ per codebook: probability assigned to the target code. PAD targets
/// give an invalid slot.
struct CorrectProb {
  std::vector<double> p;
  std::vector<bool> valid;
};

/// probs is [Q, K]; each row a distribution.
CorrectProb correct_prob(std::span<const double> probs, std::size_t K, std::span<const int> targets, int pad);

/// w(1) = 1, w(q) = prod_{q' < q} p~(q')^lambda, with 0^0 = 1.
std::vector<double> frame_weights(std::span<const double> p, double lambda);

struct WeightColumn {
  std::vector<double> weights;
  std::vector<bool> masked;
};

/// Masks codes with p~ > p_max and divides the surviving weights by the
/// largest survivor. Without p_max the weights pass through unchanged.
WeightColumn apply_pmax(std::span<const double> weights, std::span<const double> p, std::optional<double> p_max);

/// w_q(step) = w_q(0)^max(0, 1 - step / total_steps).
std::vector<double> static_priority_weights(std::size_t step, const LossConfig& cfg, std::size_t Q);

/// Q x T' loss weights in the shifted layout; masked entries (PAD targets or
/// p_max-ignored codes) carry weight 0.
struct FrameWeightMatrix {
  std::size_t Q = 0;
  std::size_t steps = 0;
  std::vector<double> weights;
  std::vector<bool> mask;

  double at(std::size_t q, std::size_t i) const { return weights[q * steps + i]; }
  bool masked(std::size_t q, std::size_t i) const { return mask[q * steps + i]; }
  /// CSV with one row per codebook; masked entries are written empty.
  std::string to_csv() const;
};

/// Builds the weight matrix from per-codebook logits ([T', K] each).
/// Adaptive weights follow the audio-frame diagonal of the shifted grid:
/// frame i, codebook q sits at column i + q.
template <class T>
FrameWeightMatrix compute_weights(const std::vector<const numerics::Tensor<T>*>& logits,
                                  const patterns::ShiftedGrid& targets, const LossConfig& cfg, std::size_t step);

template <class T>
struct LossResult {
  numerics::Var loss;
  FrameWeightMatrix weights;
  std::vector<double> accuracy;  // argmax accuracy per codebook over non-PAD targets
  std::vector<double> mean_ce;   // unweighted mean CE per codebook
  std::size_t valid_count = 0;
};

/// sum over unmasked (q, i) of w * CE, divided by the number of non-PAD
/// targets. Weights enter the graph behind stop_gradient.
template <class T>
LossResult<T> weighted_ce_loss(numerics::Tape<T>& tape, const std::vector<numerics::Var>& logits,
                               const patterns::ShiftedGrid& targets, const LossConfig& cfg, std::size_t step = 0);

/// Value-only variant over a [Q, T', K] logits tensor.
template <class T>
double weighted_ce_loss_value(const numerics::Tensor<T>& logits, const patterns::ShiftedGrid& targets,
                              const LossConfig& cfg, std::size_t step = 0);

}  // namespace livespeech::loss
