#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "advnet/loss.hpp"
#include "advnet/model.hpp"
#include "advnet/rng.hpp"
#include "advnet/zoo.hpp"

namespace advnet {

enum class AttackFamily { Fgs, Pgd, LeastLikely, Generator };

enum class LabelMode { TrueLabel, MostLikely, LeastLikelyClass };

inline std::string attack_family_name(AttackFamily f) {
  switch (f) {
    case AttackFamily::Fgs: return "fgs";
    case AttackFamily::Pgd: return "pgd";
    case AttackFamily::LeastLikely: return "least-likely";
    case AttackFamily::Generator: return "generator";
  }
  return "?";
}

/// Feasible range of rescaled pixel values, default [-1, 1].
struct PixelBox {
  double lo = -1.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
};

/// epsilon is carried in the original [0,1] pixel convention and converted to
/// data scale by the box width (2*eps for [-1,1] data).
struct AttackSpec {
  AttackFamily family = AttackFamily::Fgs;
  double eps = 0.3;
  double delta = -1.0;  // PGD step size; <0 means the default eps/4
  int steps = 10;       // PGD iteration count
  bool random_init = true;  // PGD: start from x + eps*u, u uniform in [-1,1]^d
  LabelMode label_mode = LabelMode::TrueLabel;
  std::string generator_ckpt;  // family=generator

  double resolved_delta() const { return delta < 0 ? eps / 4.0 : delta; }

  void validate() const {
    if (eps < 0) throw ConfigError("attack: eps must be >= 0");
    if (family == AttackFamily::Pgd) {
      // eps = 0 is the degenerate identity attack; any delta is a no-op there
      if (eps > 0 && resolved_delta() <= 0)
        throw ConfigError("attack: pgd delta must be > 0");
      if (steps < 1) throw ConfigError("attack: pgd steps must be >= 1");
    }
  }
};

template <typename T>
Tensor<T> project_box(const Tensor<T>& x, const PixelBox& box) {
  Tensor<T> y(x.shape);
  const T lo = static_cast<T>(box.lo), hi = static_cast<T>(box.hi);
  for (std::int64_t i = 0; i < x.size(); ++i)
    y[i] = std::min(hi, std::max(lo, x[i]));
  return y;
}

template <typename T>
Tensor<T> project_linf_ball(const Tensor<T>& x, const Tensor<T>& center, T radius) {
  require_same_shape(x.shape, center.shape, "project_linf_ball");
  Tensor<T> y(x.shape);
  for (std::int64_t i = 0; i < x.size(); ++i)
    y[i] = std::min(center[i] + radius, std::max(center[i] - radius, x[i]));
  return y;
}

template <typename T>
inline T sign_of(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));  // sign(0) = 0
}

namespace detail {

/// Loss gradient w.r.t. the input for the given labels. Works on a clone so
/// the caller's model (caches, running stats) is never touched.
template <typename T>
Tensor<T> input_gradient(const Model<T>& model, const Tensor<T>& x,
                         const std::vector<int>& labels) {
  Model<T> m = model.clone();
  m.bn_update = false;
  Tensor<T> logits = m.forward(x);
  auto ce = softmax_cross_entropy(logits, labels);
  Tensor<T> g = m.backward(ce.dlogits);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(static_cast<double>(g[i]))) {
      const std::int64_t per = g.size() / x.dim(0);
      throw AttackError("non-finite input gradient at sample " +
                        std::to_string(i / per));
    }
  }
  return g;
}

template <typename T>
std::vector<int> resolve_labels(const Model<T>& model, const Tensor<T>& x,
                                const std::vector<int>& true_labels, LabelMode mode) {
  if (mode == LabelMode::TrueLabel) return true_labels;
  Model<T> m = model.clone();
  m.bn_update = false;
  Tensor<T> logits = m.forward(x);
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const T* row = logits.ptr() + static_cast<std::int64_t>(i) * c;
    out[static_cast<std::size_t>(i)] =
        mode == LabelMode::MostLikely ? argmax_row(row, c) : argmin_row(row, c);
  }
  return out;
}

}  // namespace detail

/// One signed-gradient step of size eps toward higher loss, projected onto
/// the pixel box. The input batch is not modified.
template <typename T>
Tensor<T> fgs_attack(const Model<T>& model, const Tensor<T>& x,
                     const std::vector<int>& labels, const AttackSpec& spec,
                     const PixelBox& box = {}) {
  spec.validate();
  const T eps_data = static_cast<T>(spec.eps * box.width());
  const std::vector<int> y = detail::resolve_labels(model, x, labels, spec.label_mode);
  Tensor<T> g = detail::input_gradient(model, x, y);
  Tensor<T> adv(x.shape);
  for (std::int64_t i = 0; i < x.size(); ++i)
    adv[i] = x[i] + eps_data * sign_of(g[i]);
  return project_box(adv, box);
}

/// Iterated signed-gradient steps from a random start, each projected onto
/// the intersection of the eps ball around x and the pixel box (both are
/// axis-aligned boxes, so the joint clamp is exact).
template <typename T>
Tensor<T> pgd_attack(const Model<T>& model, const Tensor<T>& x,
                     const std::vector<int>& labels, const AttackSpec& spec, Rng& rng,
                     const PixelBox& box = {}) {
  spec.validate();
  const T eps_data = static_cast<T>(spec.eps * box.width());
  const T delta_data = static_cast<T>(spec.resolved_delta() * box.width());

  Tensor<T> adv = x;
  if (spec.random_init) {
    for (std::int64_t i = 0; i < x.size(); ++i)
      adv[i] = x[i] + eps_data * static_cast<T>(rng.uniform(-1.0, 1.0));
  }
  adv = project_box(adv, box);

  for (int it = 0; it < spec.steps; ++it) {
    Tensor<T> g = detail::input_gradient(model, adv, labels);
    for (std::int64_t i = 0; i < adv.size(); ++i) {
      T v = adv[i] + delta_data * sign_of(g[i]);
      v = std::min(x[i] + eps_data, std::max(x[i] - eps_data, v));
      adv[i] = std::min(static_cast<T>(box.hi), std::max(static_cast<T>(box.lo), v));
    }
  }
  return adv;
}

/// Descent toward the class the model currently deems least probable.
template <typename T>
Tensor<T> least_likely_attack(const Model<T>& model, const Tensor<T>& x,
                              const AttackSpec& spec, const PixelBox& box = {}) {
  spec.validate();
  const T eps_data = static_cast<T>(spec.eps * box.width());
  const std::vector<int> y_ll =
      detail::resolve_labels(model, x, {}, LabelMode::LeastLikelyClass);
  Tensor<T> g = detail::input_gradient(model, x, y_ll);
  Tensor<T> adv(x.shape);
  for (std::int64_t i = 0; i < x.size(); ++i)
    adv[i] = x[i] - eps_data * sign_of(g[i]);
  return project_box(adv, box);
}

/// x + eps * G(input), projected onto the pixel box. The generator input is
/// the image itself (G0/G1), a Gaussian vector z (G2), or a one-hot label
/// (G3); the tanh output bounds the perturbation by eps in data scale.
template <typename T>
Tensor<T> generator_attack(const Model<T>& generator, const Tensor<T>& x,
                           const std::vector<int>* labels, Rng* rng, double eps,
                           const PixelBox& box = {}) {
  const GenInput kind = generator_input_kind(generator.arch);
  Model<T> g = generator.clone();
  g.mode = Mode::Train;  // generators always run with batch statistics
  g.bn_update = false;
  const int n = x.dim(0);

  Tensor<T> noise;
  if (kind == GenInput::Image) {
    Shape expect{n};
    expect.insert(expect.end(), g.input_shape.begin(), g.input_shape.end());
    if (x.shape != expect) {
      throw ConfigError("generator " + g.arch + " expects input " + shape_str(expect) +
                        ", got " + shape_str(x.shape));
    }
    noise = g.forward(x);
  } else if (kind == GenInput::Noise) {
    if (!rng) throw ConfigError("generator " + g.arch + " needs an rng for z");
    Tensor<T> z(Shape{n, g.input_shape[0]});
    for (std::int64_t i = 0; i < z.size(); ++i)
      z[i] = static_cast<T>(rng->gaussian());
    noise = g.forward(z);
  } else {
    if (!labels) throw ConfigError("generator " + g.arch + " needs labels");
    const int c = g.input_shape[0];
    Tensor<T> onehot(Shape{n, c});
    for (int i = 0; i < n; ++i) {
      const int y = (*labels)[static_cast<std::size_t>(i)];
      if (y < 0 || y >= c) throw IndexError("one-hot label out of range");
      onehot[static_cast<std::int64_t>(i) * c + y] = T(1);
    }
    noise = g.forward(onehot);
  }

  require_same_shape(noise.shape, x.shape, "generator_attack");
  const T eps_data = static_cast<T>(eps * box.width());
  Tensor<T> adv(x.shape);
  for (std::int64_t i = 0; i < x.size(); ++i)
    adv[i] = x[i] + eps_data * noise[i];
  return project_box(adv, box);
}

/// Dispatch for the eval harness: runs the spec'd attack on a batch.
template <typename T>
Tensor<T> run_attack(const Model<T>& model, const Model<T>* generator,
                     const Tensor<T>& x, const std::vector<int>& labels,
                     const AttackSpec& spec, Rng& rng, const PixelBox& box = {}) {
  switch (spec.family) {
    case AttackFamily::Fgs:
      return fgs_attack(model, x, labels, spec, box);
    case AttackFamily::Pgd:
      return pgd_attack(model, x, labels, spec, rng, box);
    case AttackFamily::LeastLikely:
      return least_likely_attack(model, x, spec, box);
    case AttackFamily::Generator:
      if (!generator) throw ConfigError("generator attack without a generator model");
      return generator_attack(*generator, x, &labels, &rng, spec.eps, box);
  }
  throw ConfigError("unknown attack family");
}

}  // namespace advnet
