#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "advnet/layers.hpp"

namespace advnet {

/// Ordered layer stack with flat-addressable parameters. Copy is explicit
/// (clone) so parameter snapshots are never shared by accident.
template <typename T>
class Model {
 public:
  std::string arch;        // "D1", "G0", "G1:k=8", ...
  Shape input_shape;       // per-sample, e.g. {28,28,1} or {16384}
  int class_count = 0;     // discriminators; 0 for generators
  Mode mode = Mode::Train;
  bool bn_update = true;   // freeze running stats without leaving train mode

  Model() = default;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Model clone() const {
    Model m;
    m.arch = arch;
    m.input_shape = input_shape;
    m.class_count = class_count;
    m.mode = mode;
    m.bn_update = bn_update;
    m.layers_.reserve(layers_.size());
    for (const auto& l : layers_) m.layers_.push_back(l->clone());
    return m;
  }

  void add(std::unique_ptr<Layer<T>> l) { layers_.push_back(std::move(l)); }
  const std::vector<std::unique_ptr<Layer<T>>>& layers() const { return layers_; }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> t = x;
    for (auto& l : layers_) t = l->forward(t, mode, bn_update);
    fwd_done_ = true;
    return t;
  }

  /// Backpropagates a gradient w.r.t. the output; accumulates parameter
  /// gradients and returns the gradient w.r.t. the input.
  Tensor<T> backward(const Tensor<T>& dout) {
    if (!fwd_done_) throw StateError("model backward before forward");
    fwd_done_ = false;
    Tensor<T> d = dout;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) l->collect_params(out);
    return out;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> state() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto& l : layers_) l->collect_state(out);
    return out;
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    for (auto* p : params()) n += p->value.size();
    return n;
  }

  void zero_grads() {
    for (auto* p : params())
      std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
  }

  std::vector<T> flatten() {
    std::vector<T> v;
    for (auto* p : params()) v.insert(v.end(), p->value.data.begin(), p->value.data.end());
    return v;
  }

  void unflatten(const std::vector<T>& v) {
    check_length(v.size(), "unflatten");
    std::size_t off = 0;
    for (auto* p : params()) {
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(off),
                v.begin() + static_cast<std::ptrdiff_t>(off + p->value.data.size()),
                p->value.data.begin());
      off += p->value.data.size();
    }
  }

  /// param <- param + scale * v, in stable flat order.
  void axpy(T scale, const std::vector<T>& v) {
    check_length(v.size(), "axpy");
    std::size_t off = 0;
    for (auto* p : params()) {
      for (auto& x : p->value.data) x += scale * v[off++];
    }
  }

  std::vector<T> grads_flat() {
    std::vector<T> v;
    for (auto* p : params()) v.insert(v.end(), p->grad.data.begin(), p->grad.data.end());
    return v;
  }

  void set_grads(const std::vector<T>& v) {
    check_length(v.size(), "set_grads");
    std::size_t off = 0;
    for (auto* p : params()) {
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(off),
                v.begin() + static_cast<std::ptrdiff_t>(off + p->grad.data.size()),
                p->grad.data.begin());
      off += p->grad.data.size();
    }
  }

 private:
  void check_length(std::size_t got, const char* who) {
    if (static_cast<std::int64_t>(got) != param_count()) {
      throw DimensionError(std::string(who) + ": flat vector length " +
                           std::to_string(got) + " != parameter count " +
                           std::to_string(param_count()));
    }
  }

  std::vector<std::unique_ptr<Layer<T>>> layers_;
  bool fwd_done_ = false;
};

}  // namespace advnet
