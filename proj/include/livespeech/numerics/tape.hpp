#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "livespeech/numerics/tensor.hpp"

namespace livespeech::numerics {

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

/// Reverse-mode graph. Nodes are appended in evaluation order, so replaying
/// them backwards is a valid topological order.
///
/// Single-threaded per tape. Leaf values may reference tensors owned by the
/// caller (see leaf_ref); those must outlive the tape.
template <class T>
class Tape {
 public:
  using TensorT = Tensor<T>;
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(TensorT value, bool requires_grad = false);
  Var leaf_ref(const TensorT& value, bool requires_grad = false);
  Var constant(TensorT value) { return leaf(std::move(value), false); }

  /// Records an operation result. `fn` runs during backward() only when the
  /// node requires a gradient; it reads grad_of(self) and accumulates into
  /// its inputs through grad_mut().
  Var record(TensorT value, const std::vector<Var>& inputs, BackwardFn fn, const char* op);

  const TensorT& value(Var v) const { return node(v).get(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const char* op_name(Var v) const { return node(v).op; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulated for `v` by the last backward(); zeros when nothing
  /// flowed into it.
  TensorT grad(Var v) const;

  /// Runs the reverse pass from a scalar root. Gradients from earlier calls
  /// are cleared first.
  void backward(Var root);

  // For operation implementations.
  const TensorT& grad_of(std::size_t id) const { return nodes_[id].grad; }
  TensorT& grad_mut(Var v);

 private:
  struct Node {
    TensorT owned;
    const TensorT* external = nullptr;
    TensorT grad;
    bool requires_grad = false;
    BackwardFn backward;
    const char* op = "leaf";
    const TensorT& get() const { return external ? *external : owned; }
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace livespeech::numerics
