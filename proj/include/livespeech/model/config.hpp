#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "livespeech/numerics/tensor.hpp"

namespace livespeech::model {

/// Decoder hyperparameters. Layers [0, M) are shared by all codebooks; the
/// last N = L - M layers run once per codebook group with shared weights,
/// each group entering through its own transition projection.
struct ModelConfig {
  std::size_t L = 4;
  std::size_t M = 2;
  std::size_t G = 1;
  std::size_t Q = 8;
  std::size_t K = 64;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t d_ff = 512;
  std::size_t text_vocab = 26;
  std::size_t cond_len = 8;
  std::size_t feat_dim = 16;
  std::size_t max_positions = 512;
  /// group_of[q] = 0-based group of codebook q. Empty means contiguous
  /// blocks of Q / G codebooks.
  std::vector<std::size_t> group_of;

  std::size_t N() const { return L - M; }
  /// group_of with the contiguous default filled in.
  std::vector<std::size_t> groups() const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::vector<std::size_t> contiguous_groups(std::size_t Q, std::size_t G);

/// Closed-form parameter count for a config.
std::size_t param_count(const ModelConfig& cfg);

/// Name and shape of every parameter tensor, in initialization order.
std::vector<std::pair<std::string, numerics::Shape>> parameter_layout(const ModelConfig& cfg);

/// Named tensor store.
template <class T>
class Parameters {
 public:
  using TensorT = numerics::Tensor<T>;

  void add(const std::string& name, TensorT value);
  const TensorT& get(const std::string& name) const;
  TensorT& get(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t count() const;
  const std::map<std::string, TensorT>& tensors() const { return tensors_; }
  std::map<std::string, TensorT>& tensors() { return tensors_; }

  template <class U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const auto& [name, t] : tensors_) out.add(name, t.template cast<U>());
    return out;
  }

  friend bool operator==(const Parameters&, const Parameters&) = default;

 private:
  std::map<std::string, TensorT> tensors_;
};

/// Scaled-normal initialization (std 0.02), zero biases, unit norm gains,
/// zero PAD embedding rows and identity group transitions.
Parameters<float> init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Throws unless `params` holds exactly the tensors of parameter_layout(cfg).
template <class T>
void check_params(const ModelConfig& cfg, const Parameters<T>& params);

extern template class Parameters<float>;
extern template class Parameters<double>;

}  // namespace livespeech::model
