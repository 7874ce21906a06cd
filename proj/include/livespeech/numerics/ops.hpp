#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "livespeech/numerics/tape.hpp"

namespace livespeech::numerics {

/// Epsilon added to the variance in layer_norm.
inline constexpr double kLayerNormEps = 1e-5;

// Differentiable operations. Every op checks shapes and throws
// ValidationError naming itself and the offending shapes.

template <class T> Var add(Tape<T>& t, Var a, Var b);
/// a[m,n] + bias[n] broadcast over rows.
template <class T> Var add_row(Tape<T>& t, Var a, Var bias);
template <class T> Var mul(Tape<T>& t, Var a, Var b);
template <class T> Var scale(Tape<T>& t, Var a, T factor);
template <class T> Var exp(Tape<T>& t, Var a);
template <class T> Var log(Tape<T>& t, Var a);
/// tanh-approximated GELU.
template <class T> Var gelu(Tape<T>& t, Var a);
template <class T> Var matmul(Tape<T>& t, Var a, Var b);
template <class T> Var transpose(Tape<T>& t, Var a);
template <class T> Var sum(Tape<T>& t, Var a);
template <class T> Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias);
template <class T> Var softmax_rows(Tape<T>& t, Var a);

/// Fused log-softmax + negative log-likelihood per row. Rows whose target
/// equals `pad` contribute zero loss and zero gradient.
template <class T>
Var cross_entropy_rows(Tape<T>& t, Var logits, std::span<const int> targets, int pad);

template <class T>
Var embedding_lookup(Tape<T>& t, Var table, std::span<const int> ids);

/// Multi-head attention over rows of q/k/v [S, d]. Row i sees row j when
/// j < prefix_len (the fully visible conditioning block) or j <= i.
template <class T>
Var causal_self_attention(Tape<T>& t, Var q, Var k, Var v, std::size_t n_heads, std::size_t prefix_len);

template <class T> Var concat_rows(Tape<T>& t, const std::vector<Var>& parts);
template <class T> Var slice_rows(Tape<T>& t, Var a, std::size_t begin, std::size_t end);

/// Same value as `a`; no gradient flows back into `a`.
template <class T> Var stop_gradient(Tape<T>& t, Var a);

// Value-level helpers shared with inference code.

/// Numerically stable softmax of one row, accumulated in double.
template <class T>
void softmax_inplace(std::span<T> row);

}  // namespace livespeech::numerics
