#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/tensor.hpp"

namespace apsusct::nn {

template <class T>
struct Param {
  Tensor4<T> value;
  Tensor4<T> grad;
  Tensor4<T> m;  // Adam first moment
  Tensor4<T> v;  // Adam second moment
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

/// Named trainable parameters with their gradients and Adam moments.
///
/// Entries iterate in lexicographic name order so every update sweep is reproducible.
/// Gradients follow an explicit life cycle: zero_grad() -> backward (populates) -> adam_step()
/// (consumes). A backward into consumed gradients, or a step without fresh gradients, is a
/// StateError rather than silent accumulation.
template <class T>
class ParamStore {
 public:
  enum class GradState { zeroed, populated, consumed };

  Param<T>& add(const std::string& name, Tensor4<T> init) {
    if (entries_.count(name) != 0) throw ConfigError("duplicate parameter name '" + name + "'");
    const Shape4 s = init.shape();
    Param<T> p{std::move(init), Tensor4<T>(s), Tensor4<T>(s), Tensor4<T>(s)};
    return entries_.emplace(name, std::move(p)).first->second;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Param<T>& get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Param<T>& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  const std::map<std::string, Param<T>>& entries() const { return entries_; }
  std::map<std::string, Param<T>>& entries() { return entries_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p.value.size();
    return n;
  }

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t s) { step_count_ = s; }

  GradState grad_state() const { return grad_state_; }

  void zero_grad() {
    for (auto& [name, p] : entries_) p.grad.fill(T(0));
    grad_state_ = GradState::zeroed;
  }

  /// Called by Tape::backward before it accumulates into the gradients.
  void begin_accumulate() {
    if (grad_state_ == GradState::consumed) {
      throw StateError("gradients already consumed by an optimizer step; call zero_grad() first");
    }
    grad_state_ = GradState::populated;
  }

 private:
  template <class U>
  friend void adam_step(ParamStore<U>& store, const AdamConfig& cfg);

  std::map<std::string, Param<T>> entries_;
  std::uint64_t step_count_ = 0;
  GradState grad_state_ = GradState::zeroed;
};

/// One bias-corrected Adam update over every entry.
template <class T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg) {
  if (store.grad_state_ != ParamStore<T>::GradState::populated) {
    throw StateError("adam_step without gradients from a backward pass");
  }
  const std::uint64_t t = store.step_count_ + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, p] : store.entries_) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]);
      const double m = cfg.beta1 * static_cast<double>(p.m[i]) + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * static_cast<double>(p.v[i]) + (1.0 - cfg.beta2) * g * g;
      p.m[i] = static_cast<T>(m);
      p.v[i] = static_cast<T>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps_hat));
    }
  }
  store.step_count_ = t;
  store.grad_state_ = ParamStore<T>::GradState::consumed;
}

}  // namespace apsusct::nn
