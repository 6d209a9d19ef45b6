#pragma once

#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "advnet/layers.hpp"

namespace advnet {

enum class OptimizerRule { SgdMomentum, Adam };

/// SGD with classical momentum. Weight decay is coupled: g <- g + wd * param
/// before the momentum update, and only on params flagged for decay.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(T lr, T momentum, T weight_decay = T(0))
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<Param<T>*>& params) {
    ensure_buffers(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i];
      Tensor<T>& v = velocity_[i];
      require_same_shape(p.value.shape, p.grad.shape, "sgd step");
      const T wd = p.decay ? weight_decay_ : T(0);
      for (std::int64_t j = 0; j < p.value.size(); ++j) {
        const T g = p.grad[j] + wd * p.value[j];
        v[j] = momentum_ * v[j] + g;
        p.value[j] -= lr_ * v[j];
      }
    }
    ++steps_;
  }

  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }
  std::int64_t steps() const { return steps_; }
  std::vector<Tensor<T>>& buffers() { return velocity_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  T momentum() const { return momentum_; }
  T weight_decay() const { return weight_decay_; }

 private:
  void ensure_buffers(const std::vector<Param<T>*>& params) {
    if (velocity_.empty()) {
      for (auto* p : params) velocity_.emplace_back(p->value.shape);
    } else if (velocity_.size() != params.size()) {
      throw DimensionError("sgd: optimizer state does not match parameter list");
    }
  }

  T lr_, momentum_, weight_decay_;
  std::vector<Tensor<T>> velocity_;
  std::int64_t steps_ = 0;
};

/// Adam with bias-corrected moments; stability constant 1e-8.
template <typename T>
class Adam {
 public:
  Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T weight_decay = T(0),
       T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(const std::vector<Param<T>*>& params) {
    ensure_buffers(params);
    ++steps_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i];
      require_same_shape(p.value.shape, p.grad.shape, "adam step");
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      const T wd = p.decay ? weight_decay_ : T(0);
      for (std::int64_t j = 0; j < p.value.size(); ++j) {
        const T g = p.grad[j] + wd * p.value[j];
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g;
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g * g;
        const double mhat = static_cast<double>(m[j]) / bc1;
        const double vhat = static_cast<double>(v[j]) / bc2;
        p.value[j] -= static_cast<T>(static_cast<double>(lr_) * mhat /
                                     (std::sqrt(vhat) + static_cast<double>(eps_)));
      }
    }
  }

  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }
  std::int64_t steps() const { return steps_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  T beta1() const { return beta1_; }
  T beta2() const { return beta2_; }
  T weight_decay() const { return weight_decay_; }

 private:
  void ensure_buffers(const std::vector<Param<T>*>& params) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->value.shape);
        v_.emplace_back(p->value.shape);
      }
    } else if (m_.size() != params.size()) {
      throw DimensionError("adam: optimizer state does not match parameter list");
    }
  }

  T lr_, beta1_, beta2_, eps_, weight_decay_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t steps_ = 0;
};

/// Rule-erased optimizer handle used by trainers and checkpoints.
template <typename T>
class Optimizer {
 public:
  static Optimizer sgd(T lr, T momentum, T weight_decay) {
    Optimizer o;
    o.impl_.template emplace<SgdMomentum<T>>(lr, momentum, weight_decay);
    return o;
  }
  static Optimizer adam(T lr, T beta1, T beta2, T weight_decay) {
    Optimizer o;
    o.impl_.template emplace<Adam<T>>(lr, beta1, beta2, weight_decay);
    return o;
  }

  void step(const std::vector<Param<T>*>& params) {
    std::visit([&](auto& o) { o.step(params); }, impl_);
  }
  T lr() const {
    return std::visit([](const auto& o) { return o.lr(); }, impl_);
  }
  void set_lr(T lr) {
    std::visit([&](auto& o) { o.set_lr(lr); }, impl_);
  }
  std::int64_t steps() const {
    return std::visit([](const auto& o) { return o.steps(); }, impl_);
  }
  OptimizerRule rule() const {
    return std::holds_alternative<Adam<T>>(impl_) ? OptimizerRule::Adam
                                                  : OptimizerRule::SgdMomentum;
  }
  SgdMomentum<T>& as_sgd() { return std::get<SgdMomentum<T>>(impl_); }
  Adam<T>& as_adam() { return std::get<Adam<T>>(impl_); }

 private:
  std::variant<SgdMomentum<T>, Adam<T>> impl_{SgdMomentum<T>(T(0.01), T(0.9), T(0))};
};

}  // namespace advnet
