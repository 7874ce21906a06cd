#include "livespeech/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "livespeech/errors.hpp"

namespace livespeech::numerics {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const RowMat<T>>;
template <class T>
using Map = Eigen::Map<RowMat<T>>;

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ValidationError(std::string(op) + ": shape mismatch, " + detail);
}

template <class T>
void require_matrix(const char* op, const Tensor<T>& a, const char* what) {
  if (a.rank() != 2) shape_fail(op, std::string(what) + " must be rank 2, got " + shape_str(a.shape()));
}

template <class T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0, n = src.numel(); i < n; ++i) d[i] += s[i];
}

}  // namespace

template <class T>
void softmax_inplace(std::span<T> row) {
  if (row.empty()) return;
  T mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (auto& v : row) {
    v = static_cast<T>(std::exp(static_cast<double>(v - mx)));
    z += v;
  }
  for (auto& v : row) v = static_cast<T>(v / z);
}

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  require_same("add", av, bv);
  Tensor<T> out = av;
  accumulate(out, bv);
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    if (tp.requires_grad(a)) accumulate(tp.grad_mut(a), g);
    if (tp.requires_grad(b)) accumulate(tp.grad_mut(b), g);
  }, "add");
}

template <class T>
Var add_row(Tape<T>& t, Var a, Var bias) {
  const auto& av = t.value(a);
  const auto& bv = t.value(bias);
  require_matrix("add_row", av, "input");
  if (bv.numel() != av.cols()) {
    shape_fail("add_row", shape_str(av.shape()) + " with bias " + shape_str(bv.shape()));
  }
  Tensor<T> out = av;
  const std::size_t m = av.rows(), n = av.cols();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  return t.record(std::move(out), {a, bias}, [a, bias, m, n](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    if (tp.requires_grad(a)) accumulate(tp.grad_mut(a), g);
    if (tp.requires_grad(bias)) {
      auto& gb = tp.grad_mut(bias);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    }
  }, "add_row");
}

template <class T>
Var mul(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  require_same("mul", av, bv);
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& av = tp.value(a);
    const auto& bv = tp.value(b);
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad_mut(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_mut(b);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  }, "mul");
}

template <class T>
Var scale(Tape<T>& t, Var a, T factor) {
  Tensor<T> out = t.value(a);
  for (auto& v : out.values()) v *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& ga = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
  }, "scale");
}

template <class T>
Var exp(Tape<T>& t, Var a) {
  Tensor<T> out = t.value(a);
  for (auto& v : out.values()) v = std::exp(v);
  return t.record(std::move(out), {a}, [a](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& y = tp.value(Var{self});
    auto& ga = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i];
  }, "exp");
}

template <class T>
Var log(Tape<T>& t, Var a) {
  Tensor<T> out = t.value(a);
  for (auto& v : out.values()) v = std::log(v);
  return t.record(std::move(out), {a}, [a](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& x = tp.value(a);
    auto& ga = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / x[i];
  }, "log");
}

template <class T>
Var gelu(Tape<T>& t, Var a) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  Tensor<T> out = t.value(a);
  for (auto& v : out.values()) {
    const T x = v;
    v = T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x)));
  }
  return t.record(std::move(out), {a}, [a](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& xv = tp.value(a);
    auto& ga = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T x = xv[i];
      const T th = std::tanh(c * (x + k * x * x * x));
      const T d = T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * c * (T(1) + T(3) * k * x * x);
      ga[i] += g[i] * d;
    }
  }, "gelu");
}

template <class T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  require_matrix("matmul", av, "lhs");
  require_matrix("matmul", bv, "rhs");
  if (av.cols() != bv.rows()) shape_fail("matmul", shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out = Tensor<T>::matrix(m, n);
  Map<T>(out.data(), m, n).noalias() = MapC<T>(av.data(), m, k) * MapC<T>(bv.data(), k, n);
  return t.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& tp, std::size_t self) {
    MapC<T> g(tp.grad_of(self).data(), m, n);
    if (tp.requires_grad(a)) {
      Map<T>(tp.grad_mut(a).data(), m, k).noalias() += g * MapC<T>(tp.value(b).data(), k, n).transpose();
    }
    if (tp.requires_grad(b)) {
      Map<T>(tp.grad_mut(b).data(), k, n).noalias() += MapC<T>(tp.value(a).data(), m, k).transpose() * g;
    }
  }, "matmul");
}

template <class T>
Var transpose(Tape<T>& t, Var a) {
  const auto& av = t.value(a);
  require_matrix("transpose", av, "input");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor<T> out = Tensor<T>::matrix(n, m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c * m + r] = av[r * n + c];
  return t.record(std::move(out), {a}, [a, m, n](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& ga = tp.grad_mut(a);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[c * m + r];
  }, "transpose");
}

template <class T>
Var sum(Tape<T>& t, Var a) {
  const auto& av = t.value(a);
  T s{0};
  for (auto v : av.values()) s += v;
  return t.record(Tensor<T>::scalar(s), {a}, [a](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad_of(self)[0];
    for (auto& v : tp.grad_mut(a).values()) v += g;
  }, "sum");
}

template <class T>
Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias) {
  const auto& xv = t.value(x);
  const auto& gv = t.value(gain);
  const auto& bv = t.value(bias);
  require_matrix("layer_norm", xv, "input");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gv.numel() != n || bv.numel() != n) {
    shape_fail("layer_norm", shape_str(xv.shape()) + " with gain " + shape_str(gv.shape()) + " bias " +
                                 shape_str(bv.shape()));
  }
  auto xhat = std::make_shared<std::vector<T>>(m * n);
  auto rstd = std::make_shared<std::vector<T>>(m);
  Tensor<T> out = Tensor<T>::matrix(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(n);
    const T rs = static_cast<T>(1.0 / std::sqrt(var + kLayerNormEps));
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < n; ++c) {
      const T h = static_cast<T>(row[c] - mean) * rs;
      (*xhat)[r * n + c] = h;
      out[r * n + c] = h * gv[c] + bv[c];
    }
  }
  return t.record(std::move(out), {x, gain, bias}, [x, gain, bias, m, n, xhat, rstd](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& gv = tp.value(gain);
    if (tp.requires_grad(gain) || tp.requires_grad(bias)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          if (tp.requires_grad(gain)) tp.grad_mut(gain)[c] += g[r * n + c] * (*xhat)[r * n + c];
          if (tp.requires_grad(bias)) tp.grad_mut(bias)[c] += g[r * n + c];
        }
      }
    }
    if (!tp.requires_grad(x)) return;
    auto& gx = tp.grad_mut(x);
    std::vector<T> dxhat(n);
    for (std::size_t r = 0; r < m; ++r) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        dxhat[c] = g[r * n + c] * gv[c];
        mean_d += dxhat[c];
        mean_dx += dxhat[c] * (*xhat)[r * n + c];
      }
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      for (std::size_t c = 0; c < n; ++c) {
        gx[r * n + c] += (*rstd)[r] * static_cast<T>(dxhat[c] - mean_d - (*xhat)[r * n + c] * mean_dx);
      }
    }
  }, "layer_norm");
}

template <class T>
Var softmax_rows(Tape<T>& t, Var a) {
  const auto& av = t.value(a);
  require_matrix("softmax_rows", av, "input");
  Tensor<T> out = av;
  const std::size_t m = av.rows(), n = av.cols();
  for (std::size_t r = 0; r < m; ++r) softmax_inplace(out.row(r));
  return t.record(std::move(out), {a}, [a, m, n](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& y = tp.value(Var{self});
    auto& ga = tp.grad_mut(a);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += y[r * n + c] * static_cast<T>(g[r * n + c] - dot);
    }
  }, "softmax_rows");
}

template <class T>
Var cross_entropy_rows(Tape<T>& t, Var logits, std::span<const int> targets, int pad) {
  const auto& lv = t.value(logits);
  require_matrix("cross_entropy_rows", lv, "logits");
  const std::size_t m = lv.rows(), k = lv.cols();
  if (targets.size() != m) {
    shape_fail("cross_entropy_rows", shape_str(lv.shape()) + " with " + std::to_string(targets.size()) + " targets");
  }
  auto probs = std::make_shared<std::vector<T>>(m * k);
  auto tg = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  Tensor<T> out(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    const int target = targets[r];
    if (target == pad) continue;
    if (target < 0 || static_cast<std::size_t>(target) >= k) {
      throw ValidationError("cross_entropy_rows: target " + std::to_string(target) + " at row " +
                            std::to_string(r) + " outside [0, " + std::to_string(k) + ")");
    }
    const T* row = lv.data() + r * k;
    const T mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(row[c] - mx));
    const double lse = std::log(z) + mx;
    out[r] = static_cast<T>(lse - row[target]);
    for (std::size_t c = 0; c < k; ++c) (*probs)[r * k + c] = static_cast<T>(std::exp(row[c] - lse));
  }
  return t.record(std::move(out), {logits}, [logits, m, k, probs, tg, pad](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gl = tp.grad_mut(logits);
    for (std::size_t r = 0; r < m; ++r) {
      const int target = (*tg)[r];
      if (target == pad || g[r] == T{0}) continue;
      for (std::size_t c = 0; c < k; ++c) gl[r * k + c] += g[r] * (*probs)[r * k + c];
      gl[r * k + static_cast<std::size_t>(target)] -= g[r];
    }
  }, "cross_entropy_rows");
}

template <class T>
Var embedding_lookup(Tape<T>& t, Var table, std::span<const int> ids) {
  const auto& tv = t.value(table);
  require_matrix("embedding_lookup", tv, "table");
  const std::size_t vocab = tv.rows(), d = tv.cols();
  Tensor<T> out = Tensor<T>::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ValidationError("embedding_lookup: id " + std::to_string(ids[i]) + " outside table " +
                            shape_str(tv.shape()));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  auto idv = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  return t.record(std::move(out), {table}, [table, d, idv](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gt = tp.grad_mut(table);
    for (std::size_t i = 0; i < idv->size(); ++i) {
      T* dst = gt.data() + static_cast<std::size_t>((*idv)[i]) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += g[i * d + c];
    }
  }, "embedding_lookup");
}

template <class T>
Var causal_self_attention(Tape<T>& t, Var q, Var k, Var v, std::size_t n_heads, std::size_t prefix_len) {
  const auto& qv = t.value(q);
  const auto& kv = t.value(k);
  const auto& vv = t.value(v);
  require_matrix("causal_self_attention", qv, "q");
  if (kv.shape() != qv.shape() || vv.shape() != qv.shape()) {
    shape_fail("causal_self_attention",
               "q " + shape_str(qv.shape()) + " k " + shape_str(kv.shape()) + " v " + shape_str(vv.shape()));
  }
  const std::size_t s = qv.rows(), d = qv.cols();
  if (n_heads == 0 || d % n_heads != 0) {
    shape_fail("causal_self_attention", "width " + std::to_string(d) + " not divisible by " +
                                            std::to_string(n_heads) + " heads");
  }
  const std::size_t dh = d / n_heads;
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  auto visible = [prefix_len](std::size_t i, std::size_t j) { return j < prefix_len || j <= i; };

  auto probs = std::make_shared<std::vector<T>>(n_heads * s * s, T{0});
  Tensor<T> out = Tensor<T>::matrix(s, d);
  std::vector<T> row(s);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < s; ++i) {
      std::size_t cnt = 0;
      for (std::size_t j = 0; j < s; ++j) {
        if (!visible(i, j)) break;
        T acc{0};
        for (std::size_t c = 0; c < dh; ++c) acc += qv[i * d + off + c] * kv[j * d + off + c];
        row[j] = acc * inv;
        cnt = j + 1;
      }
      // Visibility is a prefix of [0, s): j < max(prefix_len, i + 1).
      softmax_inplace(std::span<T>(row.data(), cnt));
      T* p = probs->data() + (h * s + i) * s;
      for (std::size_t j = 0; j < cnt; ++j) {
        p[j] = row[j];
        for (std::size_t c = 0; c < dh; ++c) out[i * d + off + c] += row[j] * vv[j * d + off + c];
      }
    }
  }
  return t.record(std::move(out), {q, k, v}, [q, k, v, s, d, dh, n_heads, inv, probs](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& qv = tp.value(q);
    const auto& kv = tp.value(k);
    const auto& vv = tp.value(v);
    const bool need_q = tp.requires_grad(q), need_k = tp.requires_grad(k), need_v = tp.requires_grad(v);
    Tensor<T> gq = need_q ? Tensor<T>::matrix(s, d) : Tensor<T>();
    Tensor<T> gk = need_k ? Tensor<T>::matrix(s, d) : Tensor<T>();
    Tensor<T> gv = need_v ? Tensor<T>::matrix(s, d) : Tensor<T>();
    std::vector<T> dp(s);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < s; ++i) {
        const T* p = probs->data() + (h * s + i) * s;
        double dot = 0.0;
        for (std::size_t j = 0; j < s; ++j) {
          if (p[j] == T{0}) {
            dp[j] = T{0};
            continue;
          }
          T acc{0};
          for (std::size_t c = 0; c < dh; ++c) acc += g[i * d + off + c] * vv[j * d + off + c];
          dp[j] = acc;
          dot += p[j] * acc;
          if (need_v) {
            for (std::size_t c = 0; c < dh; ++c) gv[j * d + off + c] += p[j] * g[i * d + off + c];
          }
        }
        for (std::size_t j = 0; j < s; ++j) {
          if (p[j] == T{0}) continue;
          const T ds = p[j] * static_cast<T>(dp[j] - dot) * inv;
          if (need_q) {
            for (std::size_t c = 0; c < dh; ++c) gq[i * d + off + c] += ds * kv[j * d + off + c];
          }
          if (need_k) {
            for (std::size_t c = 0; c < dh; ++c) gk[j * d + off + c] += ds * qv[i * d + off + c];
          }
        }
      }
    }
    if (need_q) accumulate(tp.grad_mut(q), gq);
    if (need_k) accumulate(tp.grad_mut(k), gk);
    if (need_v) accumulate(tp.grad_mut(v), gv);
  }, "causal_self_attention");
}

template <class T>
Var concat_rows(Tape<T>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  const std::size_t n = t.value(parts[0]).cols();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    const auto& pv = t.value(p);
    if (pv.rank() > 2 || pv.cols() != n) {
      shape_fail("concat_rows", shape_str(pv.shape()) + " vs width " + std::to_string(n));
    }
    offsets.push_back(total);
    total += pv.rows();
  }
  Tensor<T> out = Tensor<T>::matrix(total, n);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& pv = t.value(parts[i]);
    std::copy(pv.values().begin(), pv.values().end(), out.data() + offsets[i] * n);
  }
  return t.record(std::move(out), parts, [parts, offsets, n](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!tp.requires_grad(parts[i])) continue;
      auto& gp = tp.grad_mut(parts[i]);
      const T* src = g.data() + offsets[i] * n;
      for (std::size_t e = 0; e < gp.numel(); ++e) gp[e] += src[e];
    }
  }, "concat_rows");
}

template <class T>
Var slice_rows(Tape<T>& t, Var a, std::size_t begin, std::size_t end) {
  const auto& av = t.value(a);
  require_matrix("slice_rows", av, "input");
  if (begin > end || end > av.rows()) {
    shape_fail("slice_rows", "rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                                 shape_str(av.shape()));
  }
  const std::size_t n = av.cols();
  Tensor<T> out(Shape{end - begin, n},
                std::vector<T>(av.data() + begin * n, av.data() + end * n));
  return t.record(std::move(out), {a}, [a, begin, n](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& ga = tp.grad_mut(a);
    for (std::size_t e = 0; e < g.numel(); ++e) ga[begin * n + e] += g[e];
  }, "slice_rows");
}

template <class T>
Var stop_gradient(Tape<T>& t, Var a) {
  return t.constant(t.value(a));
}

#define LIVESPEECH_INSTANTIATE_OPS(T)                                                              \
  template void softmax_inplace<T>(std::span<T>);                                                  \
  template Var add<T>(Tape<T>&, Var, Var);                                                         \
  template Var add_row<T>(Tape<T>&, Var, Var);                                                     \
  template Var mul<T>(Tape<T>&, Var, Var);                                                         \
  template Var scale<T>(Tape<T>&, Var, T);                                                         \
  template Var exp<T>(Tape<T>&, Var);                                                              \
  template Var log<T>(Tape<T>&, Var);                                                              \
  template Var gelu<T>(Tape<T>&, Var);                                                             \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                      \
  template Var transpose<T>(Tape<T>&, Var);                                                        \
  template Var sum<T>(Tape<T>&, Var);                                                              \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var);                                             \
  template Var softmax_rows<T>(Tape<T>&, Var);                                                     \
  template Var cross_entropy_rows<T>(Tape<T>&, Var, std::span<const int>, int);                    \
  template Var embedding_lookup<T>(Tape<T>&, Var, std::span<const int>);                           \
  template Var causal_self_attention<T>(Tape<T>&, Var, Var, Var, std::size_t, std::size_t);        \
  template Var concat_rows<T>(Tape<T>&, const std::vector<Var>&);                                  \
  template Var slice_rows<T>(Tape<T>&, Var, std::size_t, std::size_t);                             \
  template Var stop_gradient<T>(Tape<T>&, Var);

LIVESPEECH_INSTANTIATE_OPS(float)
LIVESPEECH_INSTANTIATE_OPS(double)

}  // namespace livespeech::numerics
