#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "advnet/loss.hpp"
#include "advnet/model.hpp"
#include "advnet/rng.hpp"

namespace advnet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "param conv1/W[12]" or "input[3]"
  int coords_checked = 0;
};

/// Central-difference verification of the analytic gradients of the mean
/// cross-entropy loss, over sampled coordinates of every parameter and of
/// the input. Relative error is |analytic - numeric| / max(1, |analytic|).
/// Running stats are frozen so repeated forwards are deterministic.
template <typename T>
GradCheckReport grad_check(Model<T>& model, const Tensor<T>& x,
                           const std::vector<int>& labels, int coords_per_tensor,
                           double fd_step, Rng& rng) {
  const bool saved_update = model.bn_update;
  model.bn_update = false;

  model.zero_grads();
  Tensor<T> logits = model.forward(x);
  auto ce = softmax_cross_entropy(logits, labels);
  Tensor<T> input_copy = x;
  Tensor<T> dinput = model.backward(ce.dlogits);

  auto loss_at = [&](const Tensor<T>& in) -> double {
    Tensor<T> l = model.forward(in);
    return static_cast<double>(softmax_cross_entropy(l, labels).loss);
  };

  GradCheckReport rep;
  const double base_loss = loss_at(input_copy);
  auto probe = [&](Tensor<T>& value, const Tensor<T>& analytic, const std::string& tag) {
    const std::int64_t n = value.size();
    const int coords = static_cast<int>(std::min<std::int64_t>(coords_per_tensor, n));
    for (int s = 0; s < coords; ++s) {
      const std::int64_t j =
          coords == n ? s : rng.uniform_int(0, n - 1);
      const T saved = value[j];
      const double a = static_cast<double>(analytic[j]);
      auto rel_of = [&](double numeric) {
        return std::abs(a - numeric) / std::max(1.0, std::abs(a));
      };
      // The loss is piecewise smooth (relu, maxpool, box clamps). At a kink
      // the analytic gradient equals a one-sided slope while the central
      // difference reports the two-sided average, so a coordinate passes if
      // any consistent estimator agrees; a wrong backward fails them all.
      double rel = std::numeric_limits<double>::infinity();
      for (const double h : {fd_step, fd_step / 2.0, fd_step / 8.0, fd_step / 32.0}) {
        value[j] = saved + static_cast<T>(h);
        const double lp = loss_at(input_copy);
        value[j] = saved - static_cast<T>(h);
        const double lm = loss_at(input_copy);
        value[j] = saved;
        rel = std::min(rel, rel_of((lp - lm) / (2.0 * h)));   // central
        rel = std::min(rel, rel_of((lp - base_loss) / h));    // right slope
        rel = std::min(rel, rel_of((base_loss - lm) / h));    // left slope
      }
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = tag + "[" + std::to_string(j) + "]";
      }
    }
  };

  for (auto* p : model.params()) probe(p->value, p->grad, "param " + p->name);
  probe(input_copy, dinput, "input");

  model.bn_update = saved_update;
  return rep;
}

}  // namespace advnet
