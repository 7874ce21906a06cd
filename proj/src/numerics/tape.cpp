#include "livespeech/numerics/tape.hpp"

#include "livespeech/errors.hpp"

namespace livespeech::numerics {

template <class T>
Var Tape<T>::leaf(TensorT value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <class T>
Var Tape<T>::leaf_ref(const TensorT& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <class T>
Var Tape<T>::record(TensorT value, const std::vector<Var>& inputs, BackwardFn fn, const char* op) {
  Node n;
  n.owned = std::move(value);
  n.op = op;
  for (Var in : inputs) {
    if (node(in).requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <class T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw ValidationError("tape: invalid variable handle " + std::to_string(v.id));
  }
  return nodes_[v.id];
}

template <class T>
typename Tape<T>::TensorT Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return TensorT(n.get().shape());
  return n.grad;
}

template <class T>
typename Tape<T>::TensorT& Tape<T>::grad_mut(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty() && n.get().numel() > 0) n.grad = TensorT(n.get().shape());
  return n.grad;
}

template <class T>
void Tape<T>::backward(Var root) {
  const Node& r = node(root);
  if (r.get().numel() != 1) {
    throw ValidationError("backward: root must be a scalar, got shape " + shape_str(r.get().shape()));
  }
  for (auto& n : nodes_) n.grad = TensorT();
  if (!r.requires_grad) return;
  grad_mut(root)[0] = T{1};
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace livespeech::numerics
