#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "advnet/attacks.hpp"
#include "advnet/loss.hpp"
#include "advnet/model.hpp"
#include "advnet/optim.hpp"
#include "advnet/zoo.hpp"

namespace advnet {

enum class TrainerKind {
  Standard,
  AdversarialPgd,
  Ensemble,
  AdversarialNetwork,
  GeneratorOnly,
};

inline std::string trainer_kind_name(TrainerKind k) {
  switch (k) {
    case TrainerKind::Standard: return "standard";
    case TrainerKind::AdversarialPgd: return "adversarial-pgd";
    case TrainerKind::Ensemble: return "ensemble";
    case TrainerKind::AdversarialNetwork: return "adversarial-network";
    case TrainerKind::GeneratorOnly: return "generator-only";
  }
  return "?";
}

inline TrainerKind parse_trainer_kind(const std::string& s) {
  if (s == "standard") return TrainerKind::Standard;
  if (s == "adversarial-pgd") return TrainerKind::AdversarialPgd;
  if (s == "ensemble") return TrainerKind::Ensemble;
  if (s == "adversarial-network") return TrainerKind::AdversarialNetwork;
  if (s == "generator-only") return TrainerKind::GeneratorOnly;
  throw ConfigError("unknown trainer kind '" + s + "'");
}

/// Everything the joint D/G game needs: trade-off lambda, gradient
/// regularization gamma, noise budget eps, step sizes, inner-step counts,
/// and the finite-difference step h (default eta_g / 10).
struct MinimaxConfig {
  double lambda = 1.0;
  double gamma = 0.01;
  double eps = 0.3;
  double eta_d = 0.01;
  double eta_g = 0.01;
  double momentum = 0.9;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  OptimizerRule d_rule = OptimizerRule::SgdMomentum;
  OptimizerRule g_rule = OptimizerRule::SgdMomentum;
  double weight_decay_d = 1e-4;
  double weight_decay_g = 1e-5;
  int g_steps_per_batch = 5;
  int g_updates_per_d = 1;
  double fd_step = -1.0;  // h; <= 0 selects eta_g / 10
  std::int64_t iterations = 10000;
  int batch_size = 64;
  std::int64_t lr_drop_at = -1;  // <0 selects iterations / 2
  double lr_drop_factor = 0.1;

  double h() const { return fd_step > 0 ? fd_step : eta_g / 10.0; }
  std::int64_t drop_at() const { return lr_drop_at >= 0 ? lr_drop_at : iterations / 2; }

  void validate() const {
    if (lambda < 0) throw ConfigError("minimax: lambda must be >= 0");
    if (gamma < 0) throw ConfigError("minimax: gamma must be >= 0");
    if (h() <= 0) throw ConfigError("minimax: fd step h must be > 0");
    if (eta_d <= 0 || eta_g <= 0) throw ConfigError("minimax: step sizes must be > 0");
    if (g_steps_per_batch < 1 || g_updates_per_d < 1)
      throw ConfigError("minimax: inner step counts must be >= 1");
    if (batch_size < 1) throw ConfigError("minimax: batch size must be >= 1");
  }
};

template <typename T>
struct MinimaxEval {
  T f = T(0);           // clean + lambda * adversarial
  T clean_loss = T(0);
  T adv_loss = T(0);    // unweighted mean adversarial cross-entropy
  std::vector<T> d_grad;
  std::vector<T> g_grad;
};

namespace detail {

template <typename T>
Tensor<T> generator_input(const Model<T>& g, const Tensor<T>& x,
                          const std::vector<int>& labels, const Tensor<T>* z) {
  switch (generator_input_kind(g.arch)) {
    case GenInput::Image:
      return x;
    case GenInput::Noise:
      if (!z) throw ConfigError("minimax: generator " + g.arch + " needs a z batch");
      return *z;
    case GenInput::Label: {
      const int n = x.dim(0);
      const int c = g.input_shape[0];
      Tensor<T> onehot(Shape{n, c});
      for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= c) throw IndexError("minimax: label out of one-hot range");
        onehot[static_cast<std::int64_t>(i) * c + y] = T(1);
      }
      return onehot;
    }
  }
  throw ConfigError("unreachable");
}

}  // namespace detail

/// Evaluates F(theta, phi) = clean CE + lambda * CE(x + eps*G(.)) on one
/// mini-batch, optionally accumulating the theta and/or phi gradients into
/// the models. Gradients flow through the pixel-box projection with a
/// pass-through-inside clamp rule.
template <typename T>
MinimaxEval<T> minimax_eval(Model<T>& d, Model<T>& g, const Tensor<T>& x,
                            const std::vector<int>& labels, double lambda, double eps,
                            bool want_d_grad, bool want_g_grad,
                            const PixelBox& box = {}, const Tensor<T>* z = nullptr) {
  MinimaxEval<T> out;
  if (want_d_grad) d.zero_grads();
  if (want_g_grad) g.zero_grads();

  // Clean term. Its phi-gradient is identically zero, so it is skipped when
  // only the generator gradient is needed.
  if (!(want_g_grad && !want_d_grad)) {
    Tensor<T> logits = d.forward(x);
    auto ce = softmax_cross_entropy(logits, labels);
    out.clean_loss = ce.loss;
    if (want_d_grad) d.backward(ce.dlogits);
  }

  // Adversarial term.
  const T eps_data = static_cast<T>(eps * box.width());
  Tensor<T> gin = detail::generator_input(g, x, labels, z);
  Tensor<T> noise = g.forward(gin);
  require_same_shape(noise.shape, x.shape, "minimax adversarial term");

  Tensor<T> adv(x.shape);
  std::vector<unsigned char> inside(static_cast<std::size_t>(x.size()));
  const T lo = static_cast<T>(box.lo), hi = static_cast<T>(box.hi);
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const T v = x[i] + eps_data * noise[i];
    inside[static_cast<std::size_t>(i)] = (v >= lo && v <= hi);
    adv[i] = std::min(hi, std::max(lo, v));
  }

  Tensor<T> adv_logits = d.forward(adv);
  auto ce_adv = softmax_cross_entropy(adv_logits, labels);
  out.adv_loss = ce_adv.loss;
  out.f = out.clean_loss + static_cast<T>(lambda) * ce_adv.loss;
  if (!std::isfinite(static_cast<double>(out.f)))
    throw TrainingError("minimax: non-finite objective");

  if (want_d_grad || want_g_grad) {
    Tensor<T> dlogits = ce_adv.dlogits;
    for (std::int64_t i = 0; i < dlogits.size(); ++i)
      dlogits[i] *= static_cast<T>(lambda);
    Tensor<T> dadv = d.backward(dlogits);
    if (want_g_grad) {
      Tensor<T> dnoise(noise.shape);
      for (std::int64_t i = 0; i < dadv.size(); ++i)
        dnoise[i] = inside[static_cast<std::size_t>(i)] ? dadv[i] * eps_data : T(0);
      g.backward(dnoise);
    }
  }

  if (want_d_grad) out.d_grad = d.grads_flat();
  if (want_g_grad) out.g_grad = g.grads_flat();
  return out;
}

/// Forward finite-difference Hessian-vector product:
///   (grad_theta F(theta, phi + h v) - grad_theta F(theta, phi)) / h.
/// grad_theta is any callable (theta, phi) -> gradient vector. phi is moved
/// and then restored bit-exactly from a saved copy.
template <typename Scalar, typename GradTheta>
std::vector<Scalar> hvp_finite_difference(GradTheta&& grad_theta,
                                          const std::vector<Scalar>& theta,
                                          std::vector<Scalar>& phi,
                                          const std::vector<Scalar>& v, Scalar h) {
  if (!(h > Scalar(0))) throw ConfigError("hvp: finite-difference step h must be > 0");
  if (phi.size() != v.size())
    throw DimensionError("hvp: phi and v length mismatch");
  std::vector<Scalar> g0 = grad_theta(theta, phi);
  const std::vector<Scalar> saved = phi;
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] += h * v[i];
  std::vector<Scalar> g1 = grad_theta(theta, phi);
  phi = saved;
  if (g0.size() != g1.size()) throw DimensionError("hvp: inconsistent gradient sizes");
  std::vector<Scalar> out(g0.size());
  for (std::size_t i = 0; i < g0.size(); ++i) out[i] = (g1[i] - g0[i]) / h;
  return out;
}

/// Neural-network form of the same approximation on one mini-batch: v must be
/// grad_phi F at the current phi, computed on this batch. The generator's
/// parameters are restored bit-exactly.
template <typename T>
std::vector<T> hvp_finite_difference(Model<T>& d, Model<T>& g, const Tensor<T>& x,
                                     const std::vector<int>& labels,
                                     const MinimaxConfig& cfg, const std::vector<T>& v,
                                     const std::vector<T>& d_grad_at_phi,
                                     const PixelBox& box = {},
                                     const Tensor<T>* z = nullptr) {
  const T h = static_cast<T>(cfg.h());
  if (!(h > T(0))) throw ConfigError("hvp: finite-difference step h must be > 0");
  const std::vector<T> phi0 = g.flatten();
  g.axpy(h, v);
  auto shifted = minimax_eval(d, g, x, labels, cfg.lambda, cfg.eps, true, false, box, z);
  g.unflatten(phi0);
  std::vector<T> out(d_grad_at_phi.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (shifted.d_grad[i] - d_grad_at_phi[i]) / h;
  return out;
}

/// One regularized discriminator step on a mini-batch:
///   g_eff = grad_theta F + gamma * HVP(grad_phi F),
/// fed to the optimizer (momentum and weight decay wrap g_eff). Returns the
/// objective value before the step.
template <typename T>
MinimaxEval<T> discriminator_update(Model<T>& d, Model<T>& g, const Tensor<T>& x,
                                    const std::vector<int>& labels,
                                    const MinimaxConfig& cfg, Optimizer<T>& opt,
                                    const PixelBox& box = {},
                                    const Tensor<T>* z = nullptr) {
  const bool need_phi_grad = cfg.gamma > 0;
  auto eval = minimax_eval(d, g, x, labels, cfg.lambda, cfg.eps, true, need_phi_grad,
                           box, z);
  std::vector<T> g_eff = eval.d_grad;
  if (need_phi_grad) {
    double vnorm2 = 0.0;
    for (T vi : eval.g_grad) vnorm2 += static_cast<double>(vi) * vi;
    if (vnorm2 > 0.0) {
      std::vector<T> hvp = hvp_finite_difference(d, g, x, labels, cfg, eval.g_grad,
                                                 eval.d_grad, box, z);
      for (std::size_t i = 0; i < g_eff.size(); ++i)
        g_eff[i] += static_cast<T>(cfg.gamma) * hvp[i];
    }
  }
  for (T v : g_eff) {
    if (!std::isfinite(static_cast<double>(v)))
      throw TrainingError("discriminator update: non-finite effective gradient");
  }
  d.set_grads(g_eff);
  opt.step(d.params());
  return eval;
}

/// g_steps_per_batch ascent steps on phi using the same mini-batch, with the
/// discriminator frozen. Only the adversarial term depends on phi; the clean
/// term is omitted from the gradient (identical result, cheaper).
template <typename T>
T generator_update(Model<T>& g, Model<T>& d, const Tensor<T>& x,
                   const std::vector<int>& labels, const MinimaxConfig& cfg,
                   Optimizer<T>& opt, const PixelBox& box = {},
                   const Tensor<T>* z = nullptr) {
  T last_adv = T(0);
  for (int s = 0; s < cfg.g_steps_per_batch; ++s) {
    auto eval =
        minimax_eval(d, g, x, labels, cfg.lambda, cfg.eps, false, true, box, z);
    last_adv = eval.adv_loss;
    std::vector<T> ascent = eval.g_grad;
    for (auto& v : ascent) {
      if (!std::isfinite(static_cast<double>(v)))
        throw TrainingError("generator update: non-finite gradient");
      v = -v;  // optimizers minimize; ascend by negating
    }
    g.set_grads(ascent);
    opt.step(g.params());
  }
  return last_adv;
}

}  // namespace advnet
