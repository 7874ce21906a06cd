#include "livespeech/model/config.hpp"

#include <algorithm>

#include "livespeech/errors.hpp"
#include "livespeech/util/random.hpp"

namespace livespeech::model {

using numerics::Shape;

std::vector<std::size_t> contiguous_groups(std::size_t Q, std::size_t G) {
  if (G == 0 || Q % G != 0) {
    throw ValidationError("group_of: contiguous grouping needs G (" + std::to_string(G) + ") to divide Q (" +
                          std::to_string(Q) + ")");
  }
  std::vector<std::size_t> out(Q);
  for (std::size_t q = 0; q < Q; ++q) out[q] = q / (Q / G);
  return out;
}

std::vector<std::size_t> ModelConfig::groups() const {
  return group_of.empty() ? contiguous_groups(Q, G) : group_of;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("model config: " + msg);
  };
  need(L >= 1, "L must be >= 1");
  need(M <= L, "M must not exceed L");
  need(G >= 1, "G must be >= 1");
  need(Q >= 1, "Q must be >= 1");
  need(K >= 2, "K must be >= 2");
  need(d_model >= 1 && n_heads >= 1 && d_model % n_heads == 0, "d_model must be a positive multiple of n_heads");
  need(d_ff >= 1, "d_ff must be >= 1");
  need(text_vocab >= 1, "text_vocab must be >= 1");
  need(cond_len >= 1, "cond_len must be >= 1");
  need(feat_dim >= 1, "feat_dim must be >= 1");
  need(max_positions >= 2, "max_positions must be >= 2");
  const auto g = groups();
  need(g.size() == Q, "group_of must have Q entries");
  for (auto v : g) need(v < G, "group_of entries must lie in [0, G)");
}

std::size_t param_count(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  const std::size_t embeddings = c.Q * (c.K + 1) * d + c.text_vocab * d + c.max_positions * d + d;
  const std::size_t speaker = c.feat_dim * d + d + c.cond_len * d + 3 * d * d + 2 * d;
  const std::size_t attention = 4 * d * d + 4 * d;
  const std::size_t feed_forward = 2 * d * c.d_ff + c.d_ff + d;
  const std::size_t norms = 4 * d;
  const std::size_t layers = c.L * (attention + feed_forward + norms);
  const std::size_t final_norm = 2 * d;
  const std::size_t transitions = c.G * d * d;
  const std::size_t heads = c.Q * (d * c.K + c.K);
  return embeddings + speaker + layers + final_norm + transitions + heads;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  std::vector<std::pair<std::string, Shape>> out;
  for (std::size_t q = 0; q < c.Q; ++q) out.push_back({"emb.q" + std::to_string(q), {c.K + 1, d}});
  out.push_back({"text_emb", {c.text_vocab, d}});
  out.push_back({"pos_emb", {c.max_positions, d}});
  out.push_back({"bos", {1, d}});
  out.push_back({"spk.in.w", {c.feat_dim, d}});
  out.push_back({"spk.in.b", {d}});
  out.push_back({"spk.queries", {c.cond_len, d}});
  out.push_back({"spk.wk", {d, d}});
  out.push_back({"spk.wv", {d, d}});
  out.push_back({"spk.wo", {d, d}});
  out.push_back({"spk.ln.g", {d}});
  out.push_back({"spk.ln.b", {d}});
  for (std::size_t l = 0; l < c.L; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    out.push_back({p + "ln1.g", {d}});
    out.push_back({p + "ln1.b", {d}});
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      out.push_back({p + w, {d, d}});
      out.push_back({p + "b" + std::string(w + 1), {d}});
    }
    out.push_back({p + "ln2.g", {d}});
    out.push_back({p + "ln2.b", {d}});
    out.push_back({p + "ff1.w", {d, c.d_ff}});
    out.push_back({p + "ff1.b", {c.d_ff}});
    out.push_back({p + "ff2.w", {c.d_ff, d}});
    out.push_back({p + "ff2.b", {d}});
  }
  out.push_back({"final_ln.g", {d}});
  out.push_back({"final_ln.b", {d}});
  for (std::size_t g = 0; g < c.G; ++g) out.push_back({"gproj.g" + std::to_string(g), {d, d}});
  for (std::size_t q = 0; q < c.Q; ++q) {
    out.push_back({"proj.q" + std::to_string(q) + ".w", {d, c.K}});
    out.push_back({"proj.q" + std::to_string(q) + ".b", {c.K}});
  }
  return out;
}

template <class T>
void Parameters<T>::add(const std::string& name, TensorT value) {
  if (!tensors_.emplace(name, std::move(value)).second) {
    throw ValidationError("parameters: duplicate tensor name " + name);
  }
}

template <class T>
const typename Parameters<T>::TensorT& Parameters<T>::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ValidationError("parameters: missing tensor " + name);
  return it->second;
}

template <class T>
typename Parameters<T>::TensorT& Parameters<T>::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ValidationError("parameters: missing tensor " + name);
  return it->second;
}

template <class T>
std::size_t Parameters<T>::count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.numel();
  return n;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Parameters<float> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Parameters<float> params;
  util::Rng rng(util::mix_seed(seed, 0x1417));
  const std::size_t d = cfg.d_model;
  for (auto& [name, shape] : parameter_layout(cfg)) {
    numerics::TensorF t(shape);
    const bool is_gain = ends_with(name, ".g") && name.find("ln") != std::string::npos;
    const bool is_bias = shape.size() == 1 && !is_gain;
    if (is_gain) {
      t.fill(1.0f);
    } else if (name.rfind("gproj.", 0) == 0) {
      for (std::size_t i = 0; i < d; ++i) t.at(i, i) = 1.0f;
    } else if (!is_bias) {
      for (auto& v : t.values()) v = static_cast<float>(0.02 * util::normal(rng));
      if (name.rfind("emb.q", 0) == 0) {
        for (std::size_t c = 0; c < d; ++c) t.at(cfg.K, c) = 0.0f;  // PAD row
      }
    }
    params.add(name, std::move(t));
  }
  return params;
}

template <class T>
void check_params(const ModelConfig& cfg, const Parameters<T>& params) {
  const auto layout = parameter_layout(cfg);
  if (layout.size() != params.size()) {
    throw ValidationError("parameters: expected " + std::to_string(layout.size()) + " tensors for this config, got " +
                          std::to_string(params.size()));
  }
  for (const auto& [name, shape] : layout) {
    if (!params.contains(name)) throw ValidationError("parameters: missing tensor " + name);
    if (params.get(name).shape() != shape) {
      throw ValidationError("parameters: tensor " + name + " has shape " +
                            numerics::shape_str(params.get(name).shape()) + ", config wants " +
                            numerics::shape_str(shape));
    }
  }
}

template class Parameters<float>;
template class Parameters<double>;
template void check_params<float>(const ModelConfig&, const Parameters<float>&);
template void check_params<double>(const ModelConfig&, const Parameters<double>&);

}  // namespace livespeech::model
