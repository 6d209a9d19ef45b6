#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advnet/attacks.hpp"
#include "test_util.hpp"

using namespace advnet;

TEST_CASE("box projection clamps and is idempotent") {
  Tensor<float> x(Shape{4}, {1.5f, -2.0f, 0.25f, -1.0f});
  Tensor<float> y = project_box(x, {});
  CHECK(y[0] == 1.0f);
  CHECK(y[1] == -1.0f);
  CHECK(y[2] == 0.25f);
  CHECK(y[3] == -1.0f);
  Tensor<float> z = project_box(y, {});
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(z[i] == y[i]);
}

TEST_CASE("linf ball projection with radius zero returns the center") {
  Rng rng(2);
  Tensor<float> c = testutil::random_images(rng, 1, 4, 4, 1);
  Tensor<float> x = testutil::random_images(rng, 1, 4, 4, 1);
  Tensor<float> y = project_linf_ball(x, c, 0.0f);
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == c[i]);
}

TEST_CASE("ball-then-box composition equals the joint clamp") {
  Rng rng(3);
  Tensor<float> c = testutil::random_images(rng, 2, 4, 4, 1);
  Tensor<float> x(Shape{2, 4, 4, 1});
  for (std::int64_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(rng.uniform(-3.0, 3.0));
  const float r = 0.4f;
  Tensor<float> a = project_box(project_linf_ball(x, c, r), {});
  for (std::int64_t i = 0; i < x.size(); ++i) {
    float v = std::min(c[i] + r, std::max(c[i] - r, x[i]));
    v = std::min(1.0f, std::max(-1.0f, v));
    CHECK(a[i] == v);
  }
}

TEST_CASE("sign convention maps zero to zero") {
  CHECK(sign_of(3.5f) == 1.0f);
  CHECK(sign_of(-0.1f) == -1.0f);
  CHECK(sign_of(0.0f) == 0.0f);
}

TEST_CASE("signed-gradient step on the logistic line") {
  // Model maps x to logits [x, 0]. At x = 0 with label 0 the loss gradient
  // w.r.t. x is -1/2, so the ascent step moves by -2*eps in [-1,1] data scale.
  Model<float> m = testutil::logistic_line();
  Tensor<float> x(Shape{1, 1}, {0.0f});

  AttackSpec fgs;
  fgs.family = AttackFamily::Fgs;
  fgs.eps = 0.3;
  Tensor<float> adv = fgs_attack(m, x, {0}, fgs);
  CHECK(adv[0] == doctest::Approx(-0.6));

  AttackSpec pgd;
  pgd.family = AttackFamily::Pgd;
  pgd.eps = 0.3;
  pgd.steps = 1;
  pgd.random_init = false;  // deterministic start at x
  Rng rng(0);
  Tensor<float> adv1 = pgd_attack(m, x, {0}, pgd, rng);
  CHECK(adv1[0] == doctest::Approx(-0.15));  // one step of size eps/4
}

TEST_CASE("eps = 0 degenerates every attack to the identity") {
  Rng rng(11);
  Model<float> m = testutil::tiny_conv(rng);
  Tensor<float> x = testutil::random_images(rng, 3, 8, 8, 1);
  std::vector<int> y = testutil::random_labels(rng, 3, 10);

  AttackSpec fgs;
  fgs.family = AttackFamily::Fgs;
  fgs.eps = 0.0;
  Tensor<float> a = fgs_attack(m, x, y, fgs);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(a[i] == x[i]);

  AttackSpec pgd;
  pgd.family = AttackFamily::Pgd;
  pgd.eps = 0.0;
  Tensor<float> b = pgd_attack(m, x, y, pgd, rng);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(b[i] == x[i]);

  AttackSpec ll;
  ll.family = AttackFamily::LeastLikely;
  ll.eps = 0.0;
  Tensor<float> c = least_likely_attack(m, x, ll);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(c[i] == x[i]);
}

TEST_CASE("fgs equals single-step pgd started at x with delta = eps") {
  Rng rng(13);
  Model<float> m = testutil::tiny_conv(rng);
  Tensor<float> x = testutil::random_images(rng, 4, 8, 8, 1);
  std::vector<int> y = testutil::random_labels(rng, 4, 10);

  AttackSpec fgs;
  fgs.family = AttackFamily::Fgs;
  fgs.eps = 0.2;
  AttackSpec pgd;
  pgd.family = AttackFamily::Pgd;
  pgd.eps = 0.2;
  pgd.delta = 0.2;
  pgd.steps = 1;
  pgd.random_init = false;

  Tensor<float> a = fgs_attack(m, x, y, fgs);
  Tensor<float> b = pgd_attack(m, x, y, pgd, rng);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("attacks never leave the pixel box or the eps ball") {
  Rng rng(17);
  Model<float> m = testutil::tiny_conv(rng);
  Tensor<float> x = testutil::random_images(rng, 8, 8, 8, 1);
  std::vector<int> y = testutil::random_labels(rng, 8, 10);
  const double eps = 0.3;
  const float eps_data = static_cast<float>(2.0 * eps);

  auto check_bounds = [&](const Tensor<float>& adv) {
    REQUIRE(adv.shape == x.shape);
    for (std::int64_t i = 0; i < adv.size(); ++i) {
      CHECK(adv[i] >= -1.0f);
      CHECK(adv[i] <= 1.0f);
      CHECK(std::abs(adv[i] - x[i]) <= eps_data + 1e-6f);
    }
  };

  AttackSpec spec;
  spec.eps = eps;
  spec.family = AttackFamily::Fgs;
  check_bounds(fgs_attack(m, x, y, spec));
  spec.family = AttackFamily::Pgd;
  check_bounds(pgd_attack(m, x, y, spec, rng));
  spec.family = AttackFamily::LeastLikely;
  check_bounds(least_likely_attack(m, x, spec));

  Model<float> g = build_network<float>("G0", rng);
  Tensor<float> xg = testutil::random_images(rng, 2, 28, 28, 1);
  Tensor<float> advg = generator_attack(g, xg, nullptr, nullptr, eps);
  for (std::int64_t i = 0; i < advg.size(); ++i) {
    CHECK(advg[i] >= -1.0f);
    CHECK(advg[i] <= 1.0f);
    CHECK(std::abs(advg[i] - xg[i]) <= eps_data + 1e-6f);
  }
}

TEST_CASE("pgd saturates the box boundary without overshooting") {
  Model<float> m = testutil::logistic_line();
  Tensor<float> x(Shape{1, 1}, {1.0f});
  AttackSpec pgd;
  pgd.family = AttackFamily::Pgd;
  pgd.eps = 0.5;
  pgd.random_init = false;
  Rng rng(0);
  // Label 1: the loss increases with x, so every step pushes past 1.0 and
  // the box clamp holds the iterate at the boundary.
  Tensor<float> adv = pgd_attack(m, x, {1}, pgd, rng);
  CHECK(adv[0] == 1.0f);
}

TEST_CASE("pgd with the same seed reproduces bit-identical outputs") {
  Rng rng(19);
  Model<float> m = testutil::tiny_conv(rng);
  Tensor<float> x = testutil::random_images(rng, 4, 8, 8, 1);
  std::vector<int> y = testutil::random_labels(rng, 4, 10);
  AttackSpec pgd;
  pgd.family = AttackFamily::Pgd;
  pgd.eps = 0.3;
  Rng r1(42), r2(42), r3(43);
  Tensor<float> a = pgd_attack(m, x, y, pgd, r1);
  Tensor<float> b = pgd_attack(m, x, y, pgd, r2);
  CHECK(a.data == b.data);
  Tensor<float> c = pgd_attack(m, x, y, pgd, r3);
  CHECK(a.data != c.data);
}

TEST_CASE("attacks mutate neither the input batch nor the model") {
  Rng rng(23);
  Model<float> m = testutil::tiny_conv(rng);
  Tensor<float> x = testutil::random_images(rng, 4, 8, 8, 1);
  std::vector<int> y = testutil::random_labels(rng, 4, 10);
  const std::vector<float> x0 = x.data;
  const std::vector<float> p0 = m.flatten();

  AttackSpec pgd;
  pgd.family = AttackFamily::Pgd;
  pgd.eps = 0.3;
  pgd_attack(m, x, y, pgd, rng);
  AttackSpec fgs;
  fgs.family = AttackFamily::Fgs;
  fgs.eps = 0.3;
  fgs_attack(m, x, y, fgs);
  CHECK(x.data == x0);
  CHECK(m.flatten() == p0);
}

TEST_CASE("label resolution picks the most and least likely classes") {
  Model<float> m = testutil::logistic_line();
  Tensor<float> x(Shape{1, 1}, {0.7f});  // logits [0.7, 0], class 0 wins

  AttackSpec most;
  most.family = AttackFamily::Fgs;
  most.eps = 0.1;
  most.label_mode = LabelMode::MostLikely;
  // Attacking the predicted class equals attacking the true class here.
  Tensor<float> a = fgs_attack(m, x, {0}, most);
  AttackSpec truth;
  truth.family = AttackFamily::Fgs;
  truth.eps = 0.1;
  Tensor<float> b = fgs_attack(m, x, {0}, truth);
  CHECK(a[0] == b[0]);

  // The least-likely attack descends toward class 1: loss for label 1 falls
  // as x falls, so the step moves x down.
  AttackSpec ll;
  ll.family = AttackFamily::LeastLikely;
  ll.eps = 0.1;
  Tensor<float> c = least_likely_attack(m, x, ll);
  CHECK(c[0] == doctest::Approx(0.5));
}

TEST_CASE("a zeroed generator output stage yields the identity attack") {
  Rng rng(29);
  Model<float> g = build_network<float>("G0", rng);
  for (auto* p : g.params()) {
    if (p->name.find("deconv2") != std::string::npos)
      std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
  }
  Tensor<float> x = testutil::random_images(rng, 2, 28, 28, 1);
  Tensor<float> adv = generator_attack(g, x, nullptr, nullptr, 0.3);
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(adv[i] == x[i]);
}

TEST_CASE("attack spec validation") {
  AttackSpec s;
  s.eps = -0.1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  AttackSpec p;
  p.family = AttackFamily::Pgd;
  p.eps = 0.3;
  p.delta = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.delta = -1.0;
  p.steps = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.steps = 10;
  CHECK_NOTHROW(p.validate());
  CHECK(p.resolved_delta() == doctest::Approx(0.075));
}

TEST_CASE("non-finite input gradients raise AttackError naming the sample") {
  Rng rng(31);
  Model<float> m = testutil::tiny_conv(rng);
  for (auto* p : m.params()) {
    if (p->name == "fc/W") p->value[0] = std::numeric_limits<float>::quiet_NaN();
  }
  Tensor<float> x = testutil::random_images(rng, 2, 8, 8, 1);
  AttackSpec fgs;
  fgs.family = AttackFamily::Fgs;
  fgs.eps = 0.3;
  CHECK_THROWS_AS(fgs_attack(m, x, {0, 1}, fgs), AttackError);
}
