#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/nn/param_store.hpp"
#include "apsusct/tensor.hpp"

namespace apsusct::nn {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::size_t id = none;
  bool valid() const { return id != none; }
};

/// Reverse-mode recording of one forward pass.
///
/// Every op appends a node holding its output and a closure that propagates the output
/// gradient to its inputs. backward() runs the closures once in reverse order and then adds the
/// gradients of parameter leaves into the ParamStore. A tape is single-use: a second backward()
/// is a StateError, so gradients never accumulate across steps by accident.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor4<T>& dy)>;

  explicit Tape(ParamStore<T>* store = nullptr) : store_(store) {}

  /// Leaf without gradient tracking (data, labels).
  Var constant(Tensor4<T> value, std::string label = "input") {
    return push(std::move(value), std::move(label), false, {});
  }

  /// Leaf whose gradient is kept and readable through grad() after backward().
  Var leaf(Tensor4<T> value, std::string label = "leaf") {
    return push(std::move(value), std::move(label), true, {});
  }

  /// Leaf bound to a ParamStore entry; repeated calls with one name share the node.
  Var param(const std::string& name) {
    if (store_ == nullptr) throw StateError("tape has no parameter store for '" + name + "'");
    if (auto it = param_vars_.find(name); it != param_vars_.end()) return it->second;
    Var v = push(store_->get(name).value, name, true, {});
    param_vars_.emplace(name, v);
    return v;
  }

  /// Records an op output. `back` is skipped when no input needs a gradient.
  Var record(Tensor4<T> value, std::string label, std::initializer_list<Var> inputs, BackwardFn back) {
    bool needs = false;
    for (Var in : inputs) {
      if (in.valid()) needs = needs || nodes_.at(in.id).needs_grad;
    }
    if (!value.all_finite()) {
      throw NumericError("non-finite value in forward output of layer '" + label + "'");
    }
    return push(std::move(value), std::move(label), needs, needs ? std::move(back) : BackwardFn{});
  }

  const Tensor4<T>& value(Var v) const { return node(v).value; }
  const std::string& label(Var v) const { return node(v).label; }
  bool needs_grad(Var v) const { return v.valid() && node(v).needs_grad; }

  /// Gradient of the last backward() loss with respect to `v` (zeros if unreached).
  const Tensor4<T>& grad(Var v) {
    Node& n = node(v);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor4<T>(n.value.shape());
    return n.grad;
  }

  /// Mutable gradient buffer for use inside backward closures.
  Tensor4<T>& grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad = Tensor4<T>(n.value.shape());
    return n.grad;
  }

  void backward(Var loss) {
    if (nodes_.empty() || !loss.valid()) throw StateError("backward called before any forward pass");
    if (backward_done_) throw StateError("backward called twice on the same forward pass");
    Node& ln = node(loss);
    if (ln.value.size() != 1) throw StateError("backward requires a scalar loss, got " + ln.value.shape().str());
    backward_done_ = true;
    if (store_ != nullptr) store_->begin_accumulate();
    grad_buffer(loss)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.back || n.grad.empty()) continue;
      if (!n.grad.all_finite()) throw NumericError("non-finite gradient at layer '" + n.label + "'");
      n.back(*this, n.grad);
    }
    if (store_ != nullptr) {
      for (const auto& [name, v] : param_vars_) {
        Node& n = nodes_[v.id];
        if (n.grad.empty()) continue;
        if (!n.grad.all_finite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
        store_->get(name).grad += n.grad;
      }
    }
  }

  bool backward_done() const { return backward_done_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor4<T> value;
    Tensor4<T> grad;
    std::string label;
    bool needs_grad = false;
    BackwardFn back;
  };

  Var push(Tensor4<T> value, std::string label, bool needs, BackwardFn back) {
    nodes_.push_back(Node{std::move(value), {}, std::move(label), needs, std::move(back)});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (!v.valid() || v.id >= nodes_.size()) throw StateError("invalid tape variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw StateError("invalid tape variable");
    return nodes_[v.id];
  }

  ParamStore<T>* store_;
  std::vector<Node> nodes_;
  std::map<std::string, Var> param_vars_;
  bool backward_done_ = false;
};

}  // namespace apsusct::nn
