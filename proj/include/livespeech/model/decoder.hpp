#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "livespeech/codec/rvq.hpp"
#include "livespeech/model/config.hpp"
#include "livespeech/numerics/tape.hpp"
#include "livespeech/patterns/patterns.hpp"

namespace livespeech::model {

using numerics::Tape;
using numerics::Var;

/// grouped: layers [M, L) run once per group lane after GProj_g.
/// ungrouped: all L layers on one stream, GProj unused.
enum class Routing { grouped, ungrouped };

/// Conditioning rows placed before the code steps: text embeddings followed
/// by cond_len speaker vectors.
template <class T>
struct ConditionPrefix {
  numerics::Tensor<T> vectors;  // [text_len + cond_len, d_model]
  std::size_t text_len = 0;
  std::size_t cond_len = 0;
  std::size_t length() const { return text_len + cond_len; }
};

/// Key/value cache of one attention layer, one row per consumed position.
template <class T>
struct KvCache {
  std::vector<T> keys;
  std::vector<T> values;
  std::size_t rows = 0;
};

/// Incremental decoding state. Single owner; tied to the Decoder that
/// created it.
template <class T>
struct DecoderState {
  std::vector<KvCache<T>> trunk;               // shared layers
  std::vector<std::vector<KvCache<T>>> lanes;  // [G][N] group layers
  std::size_t prefix_len = 0;
  std::size_t steps = 0;
  std::uint64_t owner = 0;
  Routing routing = Routing::grouped;

  std::size_t length() const { return prefix_len + steps; }
};

/// Parameter tensors bound as tape leaves.
struct BoundParams {
  std::map<std::string, Var> vars;
  Var operator[](const std::string& name) const;
};

template <class T>
class Decoder {
 public:
  using TensorT = numerics::Tensor<T>;

  /// Rejects parameters whose names or shapes disagree with cfg.
  Decoder(ModelConfig cfg, const Parameters<T>& params);

  const ModelConfig& config() const { return cfg_; }
  const Parameters<T>& params() const { return params_; }

  // ---- graph construction (training) ----

  BoundParams bind(Tape<T>& tape, bool requires_grad) const;

  /// [text_len + cond_len, d_model] prefix rows.
  Var condition_graph(Tape<T>& tape, const BoundParams& p, std::span<const int> text,
                      const codec::FeatureSequence& enrollment) const;

  /// Teacher-forced logits: one [T', K] node per codebook. Column i is the
  /// prediction of shifted column i given columns < i.
  std::vector<Var> logits_graph(Tape<T>& tape, const BoundParams& p, Var prefix, std::size_t prefix_len,
                                const patterns::ShiftedGrid& shifted, Routing routing = Routing::grouped) const;

  // ---- inference ----

  ConditionPrefix<T> encode_condition(std::span<const int> text, const codec::FeatureSequence& enrollment) const;

  /// Sum of per-codebook embeddings of one column (PAD allowed).
  TensorT embed_step(std::span<const int> codes) const;

  /// Logits [Q, T', K] for the whole shifted grid.
  TensorT forward_full(const ConditionPrefix<T>& prefix, const patterns::ShiftedGrid& shifted,
                       Routing routing = Routing::grouped) const;

  /// Caches the prefix; the next forward_step consumes BOS.
  DecoderState<T> begin(const ConditionPrefix<T>& prefix, Routing routing = Routing::grouped) const;

  /// Consumes one input column (nullopt = BOS, only valid as the first
  /// step) and returns [Q, K] logits for the next shifted column.
  TensorT forward_step(DecoderState<T>& state, std::optional<std::span<const int>> prev_column) const;

 private:
  Var layer(Tape<T>& tape, const BoundParams& p, std::size_t l, Var x, std::size_t prefix_len,
            KvCache<T>* cache) const;
  Var step_inputs(Tape<T>& tape, const BoundParams& p, const patterns::ShiftedGrid& shifted) const;
  std::vector<Var> heads(Tape<T>& tape, const BoundParams& p, Var x, std::size_t prefix_len,
                         std::size_t code_begin, Routing routing, DecoderState<T>* state) const;

  ModelConfig cfg_;
  std::vector<std::size_t> group_of_;
  const Parameters<T>& params_;
  std::uint64_t id_;
};

extern template class Decoder<float>;
extern template class Decoder<double>;

}  // namespace livespeech::model
