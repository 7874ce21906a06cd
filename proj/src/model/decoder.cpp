#include "livespeech/model/decoder.hpp"

#include <atomic>
#include <cmath>

#include "livespeech/errors.hpp"
#include "livespeech/numerics/ops.hpp"

namespace livespeech::model {

namespace nx = numerics;

namespace {

std::uint64_t next_decoder_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

// Attention of new query rows against a cache that already holds every
// earlier position. Appends k/v first so a multi-row chunk (the prefix)
// sees itself.
template <class T>
nx::Tensor<T> cached_attention(const nx::Tensor<T>& q, const nx::Tensor<T>& k, const nx::Tensor<T>& v,
                               KvCache<T>& cache, std::size_t prefix_len, std::size_t n_heads) {
  const std::size_t r = q.rows(), d = q.cols();
  const std::size_t first = cache.rows;
  cache.keys.insert(cache.keys.end(), k.values().begin(), k.values().end());
  cache.values.insert(cache.values.end(), v.values().begin(), v.values().end());
  cache.rows += r;
  const std::size_t dh = d / n_heads;
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  nx::Tensor<T> out = nx::Tensor<T>::matrix(r, d);
  std::vector<T> scores(cache.rows);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t pos = first + i;
      const std::size_t visible = std::min(cache.rows, std::max(prefix_len, pos + 1));
      for (std::size_t j = 0; j < visible; ++j) {
        T acc{0};
        for (std::size_t c = 0; c < dh; ++c) acc += q[i * d + off + c] * cache.keys[j * d + off + c];
        scores[j] = acc * inv;
      }
      nx::softmax_inplace(std::span<T>(scores.data(), visible));
      for (std::size_t j = 0; j < visible; ++j) {
        for (std::size_t c = 0; c < dh; ++c) out[i * d + off + c] += scores[j] * cache.values[j * d + off + c];
      }
    }
  }
  return out;
}

}  // namespace

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw ValidationError("bound parameters: missing " + name);
  return it->second;
}

template <class T>
Decoder<T>::Decoder(ModelConfig cfg, const Parameters<T>& params)
    : cfg_(std::move(cfg)), params_(params), id_(next_decoder_id()) {
  cfg_.validate();
  group_of_ = cfg_.groups();
  check_params(cfg_, params_);
}

template <class T>
BoundParams Decoder<T>::bind(Tape<T>& tape, bool requires_grad) const {
  BoundParams b;
  for (const auto& [name, tensor] : params_.tensors()) b.vars.emplace(name, tape.leaf_ref(tensor, requires_grad));
  return b;
}

template <class T>
Var Decoder<T>::condition_graph(Tape<T>& tape, const BoundParams& p, std::span<const int> text,
                                const codec::FeatureSequence& enrollment) const {
  if (text.empty()) throw ValidationError("encode_condition: empty text");
  if (enrollment.length() == 0 || enrollment.dim() != cfg_.feat_dim) {
    throw ValidationError("encode_condition: enrollment must be T x " + std::to_string(cfg_.feat_dim) + ", got " +
                          nx::shape_str(enrollment.frames.shape()));
  }
  Var text_rows = nx::embedding_lookup(tape, p["text_emb"], text);

  // Learned-query attention pooling to cond_len speaker vectors.
  Var feats = tape.constant(enrollment.frames.template cast<T>());
  Var h = nx::gelu(tape, nx::add_row(tape, nx::matmul(tape, feats, p["spk.in.w"]), p["spk.in.b"]));
  Var keys = nx::matmul(tape, h, p["spk.wk"]);
  Var vals = nx::matmul(tape, h, p["spk.wv"]);
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg_.d_model)));
  Var scores = nx::scale(tape, nx::matmul(tape, p["spk.queries"], nx::transpose(tape, keys)), inv);
  Var pooled = nx::matmul(tape, nx::softmax_rows(tape, scores), vals);
  Var spk = nx::layer_norm(tape, nx::matmul(tape, pooled, p["spk.wo"]), p["spk.ln.g"], p["spk.ln.b"]);
  return nx::concat_rows(tape, {text_rows, spk});
}

template <class T>
Var Decoder<T>::layer(Tape<T>& tape, const BoundParams& p, std::size_t l, Var x, std::size_t prefix_len,
                      KvCache<T>* cache) const {
  const std::string pre = "layer" + std::to_string(l) + ".";
  Var h = nx::layer_norm(tape, x, p[pre + "ln1.g"], p[pre + "ln1.b"]);
  Var q = nx::add_row(tape, nx::matmul(tape, h, p[pre + "wq"]), p[pre + "bq"]);
  Var k = nx::add_row(tape, nx::matmul(tape, h, p[pre + "wk"]), p[pre + "bk"]);
  Var v = nx::add_row(tape, nx::matmul(tape, h, p[pre + "wv"]), p[pre + "bv"]);
  Var a = cache ? tape.constant(cached_attention(tape.value(q), tape.value(k), tape.value(v), *cache, prefix_len,
                                                 cfg_.n_heads))
                : nx::causal_self_attention(tape, q, k, v, cfg_.n_heads, prefix_len);
  x = nx::add(tape, x, nx::add_row(tape, nx::matmul(tape, a, p[pre + "wo"]), p[pre + "bo"]));
  Var h2 = nx::layer_norm(tape, x, p[pre + "ln2.g"], p[pre + "ln2.b"]);
  Var f = nx::gelu(tape, nx::add_row(tape, nx::matmul(tape, h2, p[pre + "ff1.w"]), p[pre + "ff1.b"]));
  f = nx::add_row(tape, nx::matmul(tape, f, p[pre + "ff2.w"]), p[pre + "ff2.b"]);
  return nx::add(tape, x, f);
}

template <class T>
std::vector<Var> Decoder<T>::heads(Tape<T>& tape, const BoundParams& p, Var x, std::size_t prefix_len,
                                   std::size_t code_begin, Routing routing, DecoderState<T>* state) const {
  const std::size_t trunk = routing == Routing::grouped ? cfg_.M : cfg_.L;
  for (std::size_t l = 0; l < trunk; ++l) x = layer(tape, p, l, x, prefix_len, state ? &state->trunk[l] : nullptr);

  std::vector<Var> lanes;
  if (routing == Routing::grouped) {
    for (std::size_t g = 0; g < cfg_.G; ++g) {
      Var h = nx::matmul(tape, x, p["gproj.g" + std::to_string(g)]);
      for (std::size_t l = cfg_.M; l < cfg_.L; ++l) {
        h = layer(tape, p, l, h, prefix_len, state ? &state->lanes[g][l - cfg_.M] : nullptr);
      }
      lanes.push_back(h);
    }
  } else {
    lanes.push_back(x);
  }

  const std::size_t rows = tape.value(x).rows();
  if (code_begin >= rows) return {};
  for (auto& lane : lanes) {
    lane = nx::layer_norm(tape, lane, p["final_ln.g"], p["final_ln.b"]);
    if (code_begin > 0) lane = nx::slice_rows(tape, lane, code_begin, rows);
  }
  std::vector<Var> logits;
  for (std::size_t q = 0; q < cfg_.Q; ++q) {
    const std::string pre = "proj.q" + std::to_string(q);
    Var in = lanes[routing == Routing::grouped ? group_of_[q] : 0];
    logits.push_back(nx::add_row(tape, nx::matmul(tape, in, p[pre + ".w"]), p[pre + ".b"]));
  }
  return logits;
}

template <class T>
Var Decoder<T>::step_inputs(Tape<T>& tape, const BoundParams& p, const patterns::ShiftedGrid& shifted) const {
  const std::size_t steps = shifted.steps();
  if (steps <= 1) return p["bos"];
  Var sum_emb;
  std::vector<int> ids(steps - 1);
  for (std::size_t q = 0; q < cfg_.Q; ++q) {
    for (std::size_t i = 0; i + 1 < steps; ++i) ids[i] = shifted.codes.at(q, i);
    Var e = nx::embedding_lookup(tape, p["emb.q" + std::to_string(q)], ids);
    sum_emb = q == 0 ? e : nx::add(tape, sum_emb, e);
  }
  return nx::concat_rows(tape, {p["bos"], sum_emb});
}

template <class T>
std::vector<Var> Decoder<T>::logits_graph(Tape<T>& tape, const BoundParams& p, Var prefix, std::size_t prefix_len,
                                          const patterns::ShiftedGrid& shifted, Routing routing) const {
  shifted.validate_layout();
  if (shifted.codes.Q != cfg_.Q || shifted.codes.K != cfg_.K) {
    throw ValidationError("forward: shifted grid Q/K (" + std::to_string(shifted.codes.Q) + "/" +
                          std::to_string(shifted.codes.K) + ") do not match model config");
  }
  if (tape.value(prefix).rows() != prefix_len || tape.value(prefix).cols() != cfg_.d_model) {
    throw ValidationError("forward: prefix shape " + nx::shape_str(tape.value(prefix).shape()) + " unexpected");
  }
  const std::size_t total = prefix_len + shifted.steps();
  if (total > cfg_.max_positions) {
    throw ValidationError("forward: sequence of " + std::to_string(total) + " positions exceeds max_positions " +
                          std::to_string(cfg_.max_positions));
  }
  Var seq = nx::concat_rows(tape, {prefix, step_inputs(tape, p, shifted)});
  seq = nx::add(tape, seq, nx::slice_rows(tape, p["pos_emb"], 0, total));
  return heads(tape, p, seq, prefix_len, prefix_len, routing, nullptr);
}

template <class T>
ConditionPrefix<T> Decoder<T>::encode_condition(std::span<const int> text,
                                                const codec::FeatureSequence& enrollment) const {
  Tape<T> tape;
  BoundParams p = bind(tape, false);
  Var v = condition_graph(tape, p, text, enrollment);
  ConditionPrefix<T> out;
  out.vectors = tape.value(v);
  out.text_len = text.size();
  out.cond_len = cfg_.cond_len;
  return out;
}

template <class T>
typename Decoder<T>::TensorT Decoder<T>::embed_step(std::span<const int> codes) const {
  if (codes.size() != cfg_.Q) {
    throw ValidationError("embed_step: expected " + std::to_string(cfg_.Q) + " codes, got " +
                          std::to_string(codes.size()));
  }
  const std::size_t d = cfg_.d_model;
  TensorT out(nx::Shape{d});
  for (std::size_t q = 0; q < cfg_.Q; ++q) {
    if (codes[q] < 0 || static_cast<std::size_t>(codes[q]) > cfg_.K) {
      throw ValidationError("embed_step: code " + std::to_string(codes[q]) + " of codebook " + std::to_string(q) +
                            " outside [0, " + std::to_string(cfg_.K) + "]");
    }
    const auto& table = params_.get("emb.q" + std::to_string(q));
    const auto row = table.row(static_cast<std::size_t>(codes[q]));
    for (std::size_t c = 0; c < d; ++c) out[c] += row[c];
  }
  return out;
}

template <class T>
typename Decoder<T>::TensorT Decoder<T>::forward_full(const ConditionPrefix<T>& prefix,
                                                      const patterns::ShiftedGrid& shifted, Routing routing) const {
  Tape<T> tape;
  BoundParams p = bind(tape, false);
  Var pre = tape.leaf_ref(prefix.vectors);
  auto logits = logits_graph(tape, p, pre, prefix.length(), shifted, routing);
  const std::size_t steps = shifted.steps(), k = cfg_.K;
  TensorT out(nx::Shape{cfg_.Q, steps, k});
  for (std::size_t q = 0; q < cfg_.Q; ++q) {
    const auto& lv = tape.value(logits[q]);
    std::copy(lv.values().begin(), lv.values().end(), out.data() + q * steps * k);
  }
  return out;
}

template <class T>
DecoderState<T> Decoder<T>::begin(const ConditionPrefix<T>& prefix, Routing routing) const {
  if (prefix.vectors.rank() != 2 || prefix.vectors.cols() != cfg_.d_model || prefix.vectors.rows() != prefix.length()) {
    throw ValidationError("begin: malformed condition prefix " + nx::shape_str(prefix.vectors.shape()));
  }
  if (prefix.length() + 1 > cfg_.max_positions) throw ValidationError("begin: prefix exceeds max_positions");
  DecoderState<T> state;
  state.owner = id_;
  state.routing = routing;
  state.prefix_len = prefix.length();
  const bool grouped = routing == Routing::grouped;
  state.trunk.resize(grouped ? cfg_.M : cfg_.L);
  if (grouped) state.lanes.assign(cfg_.G, std::vector<KvCache<T>>(cfg_.N()));

  Tape<T> tape;
  BoundParams p = bind(tape, false);
  Var x = nx::add(tape, tape.leaf_ref(prefix.vectors), nx::slice_rows(tape, p["pos_emb"], 0, prefix.length()));
  heads(tape, p, x, state.prefix_len, prefix.length(), routing, &state);
  return state;
}

template <class T>
typename Decoder<T>::TensorT Decoder<T>::forward_step(DecoderState<T>& state,
                                                      std::optional<std::span<const int>> prev_column) const {
  if (state.owner != id_) throw ValidationError("forward_step: state belongs to a different decoder");
  const bool grouped = state.routing == Routing::grouped;
  if (state.trunk.size() != (grouped ? cfg_.M : cfg_.L)) throw ValidationError("forward_step: stale state");
  for (const auto& cache : state.trunk) {
    if (cache.rows != state.length()) throw ValidationError("forward_step: stale state (cache length mismatch)");
  }
  if (state.steps == 0 && prev_column) throw ValidationError("forward_step: first step consumes BOS, not codes");
  if (state.steps > 0 && !prev_column) throw ValidationError("forward_step: BOS is only valid as the first step");
  const std::size_t pos = state.length();
  if (pos >= cfg_.max_positions) throw ValidationError("forward_step: max_positions exceeded");

  Tape<T> tape;
  BoundParams p = bind(tape, false);
  Var x = prev_column ? tape.constant(embed_step(*prev_column).reshaped({1, cfg_.d_model})) : p["bos"];
  x = nx::add(tape, x, nx::slice_rows(tape, p["pos_emb"], pos, pos + 1));
  auto logits = heads(tape, p, x, state.prefix_len, 0, state.routing, &state);
  ++state.steps;

  TensorT out = TensorT::matrix(cfg_.Q, cfg_.K);
  for (std::size_t q = 0; q < cfg_.Q; ++q) {
    const auto& lv = tape.value(logits[q]);
    std::copy(lv.values().begin(), lv.values().end(), out.data() + q * cfg_.K);
  }
  return out;
}

template class Decoder<float>;
template class Decoder<double>;

}  // namespace livespeech::model
