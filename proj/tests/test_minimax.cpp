#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advnet/minimax.hpp"
#include "test_util.hpp"

using namespace advnet;

namespace {

struct Nets {
  Model<float> d;
  Model<float> g;
  Tensor<float> x;
  std::vector<int> y;
};

Nets small_nets(std::uint64_t seed, int batch = 2) {
  Rng rng(seed);
  Nets n{build_network<float>("D1", rng), build_network<float>("G0", rng),
         testutil::random_images(rng, batch, 28, 28, 1),
         testutil::random_labels(rng, batch, 10)};
  return n;
}

void zero_output_stage(Model<float>& g) {
  for (auto* p : g.params()) {
    if (p->name.find("deconv2") != std::string::npos)
      std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
  }
}

}  // namespace

TEST_CASE("lambda = 0 reduces the objective to the clean loss") {
  Nets n = small_nets(1);
  auto eval = minimax_eval(n.d, n.g, n.x, n.y, 0.0, 0.3, false, false);
  Model<float> d2 = n.d.clone();
  auto ce = softmax_cross_entropy(d2.forward(n.x), n.y);
  CHECK(eval.f == ce.loss);
  CHECK(eval.clean_loss == ce.loss);
}

TEST_CASE("a silent generator doubles the clean loss at lambda = 1") {
  Nets n = small_nets(2);
  zero_output_stage(n.g);
  auto eval = minimax_eval(n.d, n.g, n.x, n.y, 1.0, 0.3, false, false);
  CHECK(eval.adv_loss == eval.clean_loss);
  CHECK(eval.f == doctest::Approx(2.0 * eval.clean_loss).epsilon(1e-6));
}

TEST_CASE("a blank discriminator scores exactly 2 ln 10 on ten classes") {
  // All-zero parameters give identically zero logits for any input, so both
  // cross-entropy terms equal ln 10 regardless of the generator.
  Nets n = small_nets(3, 16);
  for (auto* p : n.d.params())
    std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
  auto eval = minimax_eval(n.d, n.g, n.x, n.y, 1.0, 0.3, false, false);
  CHECK(eval.clean_loss == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  CHECK(eval.adv_loss == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  CHECK(eval.f == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("adversarial loss metric is independent of lambda") {
  Nets n = small_nets(4);
  auto e1 = minimax_eval(n.d, n.g, n.x, n.y, 1.0, 0.3, false, false);
  auto e2 = minimax_eval(n.d, n.g, n.x, n.y, 2.0, 0.3, false, false);
  CHECK(e1.adv_loss == e2.adv_loss);
  CHECK(e2.f == doctest::Approx(e2.clean_loss + 2.0 * e1.adv_loss).epsilon(1e-6));
}

TEST_CASE("doubling lambda doubles the generator gradient") {
  Nets n = small_nets(5);
  auto e1 = minimax_eval(n.d, n.g, n.x, n.y, 1.0, 0.3, false, true);
  auto e2 = minimax_eval(n.d, n.g, n.x, n.y, 2.0, 0.3, false, true);
  REQUIRE(e1.g_grad.size() == e2.g_grad.size());
  for (std::size_t i = 0; i < e1.g_grad.size(); ++i)
    CHECK(e2.g_grad[i] == doctest::Approx(2.0f * e1.g_grad[i]).epsilon(1e-5));
}

TEST_CASE("finite-difference hvp is exact on a bilinear objective") {
  // F = theta' A phi, so grad_theta = A phi and the phi-Jacobian of
  // grad_theta is exactly A: the forward difference has no curvature error.
  auto grad_theta = [](const std::vector<double>&, const std::vector<double>& ph) {
    return std::vector<double>{1.0 * ph[0] + 2.0 * ph[1], 3.0 * ph[0] + 4.0 * ph[1]};
  };
  std::vector<double> theta{0.3, -0.7};
  std::vector<double> phi{0.5, 1.5};
  const std::vector<double> phi0 = phi;
  std::vector<double> v{1.0, 0.0};

  for (double h : {1e-3, 1e-1}) {
    auto hvp = hvp_finite_difference(grad_theta, theta, phi, v, h);
    CHECK(std::abs(hvp[0] - 1.0) < 1e-9);
    CHECK(std::abs(hvp[1] - 3.0) < 1e-9);
    CHECK(phi == phi0);  // restored bit-exactly
  }

  std::vector<double> zero{0.0, 0.0};
  auto hvp0 = hvp_finite_difference(grad_theta, theta, phi, zero, 1e-3);
  CHECK(hvp0[0] == 0.0);
  CHECK(hvp0[1] == 0.0);

  CHECK_THROWS_AS(hvp_finite_difference(grad_theta, theta, phi, v, 0.0),
                  ConfigError);
  std::vector<double> bad{1.0};
  CHECK_THROWS_AS(hvp_finite_difference(grad_theta, theta, phi, bad, 1e-3),
                  DimensionError);
}

TEST_CASE("scalar bilinear hvp recovers the regularized update by hand") {
  // F = theta * phi: grad_theta = phi, grad_phi = theta. At (1, 1) with
  // eta_d = 0.1, gamma = 0.01 the regularized step lands on 0.899.
  auto grad_theta = [](const std::vector<double>&, const std::vector<double>& ph) {
    return std::vector<double>{ph[0]};
  };
  std::vector<double> theta{1.0}, phi{1.0};
  std::vector<double> v{theta[0]};  // grad_phi F
  auto hvp = hvp_finite_difference(grad_theta, theta, phi, v, 0.001);
  CHECK(hvp[0] == doctest::Approx(1.0).epsilon(1e-9));
  const double g_eff = phi[0] + 0.01 * hvp[0];
  CHECK(theta[0] - 0.1 * g_eff == doctest::Approx(0.899).epsilon(1e-9));
  // The generator ascends: phi' = phi + eta_g * grad_phi = 1.1.
  CHECK(phi[0] + 0.1 * theta[0] == doctest::Approx(1.1).epsilon(1e-12));
}

TEST_CASE("network hvp restores the generator bit-exactly") {
  Nets n = small_nets(6);
  MinimaxConfig cfg;
  auto eval = minimax_eval(n.d, n.g, n.x, n.y, cfg.lambda, cfg.eps, true, true);
  const std::vector<float> phi0 = n.g.flatten();
  auto hvp = hvp_finite_difference(n.d, n.g, n.x, n.y, cfg, eval.g_grad, eval.d_grad);
  CHECK(n.g.flatten() == phi0);
  CHECK(hvp.size() == eval.d_grad.size());
  double norm = 0.0;
  for (float h : hvp) norm += static_cast<double>(h) * h;
  CHECK(std::isfinite(norm));
}

TEST_CASE("gamma = 0 discriminator update is plain descent on grad_theta") {
  Nets a = small_nets(7);
  Nets b = small_nets(7);
  MinimaxConfig cfg;
  cfg.gamma = 0.0;
  auto opt_a = Optimizer<float>::sgd(0.01f, 0.0f, 0.0f);
  discriminator_update(a.d, a.g, a.x, a.y, cfg, opt_a);

  auto eval = minimax_eval(b.d, b.g, b.x, b.y, cfg.lambda, cfg.eps, true, false);
  b.d.set_grads(eval.d_grad);
  auto opt_b = Optimizer<float>::sgd(0.01f, 0.0f, 0.0f);
  opt_b.step(b.d.params());
  CHECK(a.d.flatten() == b.d.flatten());
}

TEST_CASE("vanishing generator gradient makes the regularizer a no-op") {
  // With lambda = 0 the adversarial term contributes nothing, so grad_phi F
  // is exactly zero and the gamma > 0 update must coincide with gamma = 0.
  Nets a = small_nets(8);
  Nets b = small_nets(8);
  MinimaxConfig with;
  with.lambda = 0.0;
  with.gamma = 0.01;
  MinimaxConfig without;
  without.lambda = 0.0;
  without.gamma = 0.0;
  auto opt_a = Optimizer<float>::sgd(0.01f, 0.9f, 0.0f);
  auto opt_b = Optimizer<float>::sgd(0.01f, 0.9f, 0.0f);
  discriminator_update(a.d, a.g, a.x, a.y, with, opt_a);
  discriminator_update(b.d, b.g, b.x, b.y, without, opt_b);
  CHECK(a.d.flatten() == b.d.flatten());
}

TEST_CASE("generator update ascends phi and leaves theta alone") {
  Nets n = small_nets(9, 4);
  MinimaxConfig cfg;
  cfg.g_steps_per_batch = 3;
  const std::vector<float> d0 = n.d.flatten();
  const std::vector<float> g0 = n.g.flatten();
  auto opt = Optimizer<float>::sgd(0.01f, 0.0f, 0.0f);
  float adv = generator_update(n.g, n.d, n.x, n.y, cfg, opt);
  CHECK(std::isfinite(adv));
  CHECK(n.d.flatten() == d0);
  CHECK(n.g.flatten() != g0);
  CHECK(opt.steps() == 3);
}

TEST_CASE("repeated generator steps do not decrease the adversarial loss") {
  // On a fixed batch against a frozen discriminator, small ascent steps
  // should trend the adversarial loss upward.
  Nets n = small_nets(10, 8);
  MinimaxConfig cfg;
  cfg.g_steps_per_batch = 1;
  auto opt = Optimizer<float>::sgd(0.005f, 0.0f, 0.0f);
  const float before =
      minimax_eval(n.d, n.g, n.x, n.y, cfg.lambda, cfg.eps, false, false).adv_loss;
  for (int i = 0; i < 10; ++i) generator_update(n.g, n.d, n.x, n.y, cfg, opt);
  const float after =
      minimax_eval(n.d, n.g, n.x, n.y, cfg.lambda, cfg.eps, false, false).adv_loss;
  CHECK(after >= before);
}

TEST_CASE("non-finite objectives abort with TrainingError") {
  Nets n = small_nets(11);
  for (auto* p : n.d.params()) {
    if (p->name == "fc/W") p->value[0] = std::numeric_limits<float>::quiet_NaN();
  }
  CHECK_THROWS_AS(minimax_eval(n.d, n.g, n.x, n.y, 1.0, 0.3, false, false),
                  TrainingError);
}

TEST_CASE("minimax config validation and defaults") {
  MinimaxConfig cfg;
  CHECK(cfg.h() == doctest::Approx(cfg.eta_g / 10.0));
  cfg.fd_step = 0.5;
  CHECK(cfg.h() == 0.5);
  cfg.fd_step = -1.0;
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lambda = 1.0;
  cfg.gamma = -0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.gamma = 0.01;
  cfg.g_steps_per_batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.g_steps_per_batch = 5;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.drop_at() == cfg.iterations / 2);
  cfg.lr_drop_at = 123;
  CHECK(cfg.drop_at() == 123);
}
