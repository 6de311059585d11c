#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sparsedet/loss.hpp"
#include "sparsedet/rng.hpp"
#include "support/oracles.hpp"

using namespace sparsedet;

namespace {

double logit_of(double p) { return std::log(p / (1.0 - p)); }

// Finite-difference check of d(ahr)/d(logit) at one point.
void check_ahr_gradient(double p, bool positive, const AhrConfig& cfg) {
  const double z = logit_of(p);
  auto f = [&](double zz) { return ahr_loss(sigmoid(zz), positive, cfg).loss; };
  const double numeric = oracles::central_difference(f, z, 1e-6);
  const double analytic = ahr_loss(p, positive, cfg).dloss_dlogit;
  CHECK(oracles::rel_error(analytic, numeric) < 1e-5);
}

}  // namespace

TEST_CASE("ahr scalar evaluations frozen from the three-case form") {
  AhrConfig cfg;  // as-written, alpha 0.25, gamma 2, thr 0.9, w 0.15

  SUBCASE("positive case: p = 0.9") {
    const double expected = 0.25 * 0.81 * (-std::log(0.9));
    CHECK(ahr_loss(0.9, true, cfg).loss == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("hard-negative case: p = 0.95 scales by w") {
    const double expected = 0.15 * 0.75 * 0.05 * 0.05 * (-std::log(0.05));
    CHECK(ahr_loss(0.95, false, cfg).loss == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("soft-negative case: p = 0.5 is unscaled") {
    const double expected = 0.75 * 0.25 * (-std::log(0.5));
    CHECK(ahr_loss(0.5, false, cfg).loss == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("negative loss vanishes as p -> 0") {
    CHECK(ahr_loss(1e-9, false, cfg).loss < 1e-8);
  }
  SUBCASE("loss is non-negative everywhere") {
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
      const double p = rng.uniform(1e-6, 1.0 - 1e-6);
      CHECK(ahr_loss(p, true, cfg).loss >= 0.0);
      CHECK(ahr_loss(p, false, cfg).loss >= 0.0);
    }
  }
  SUBCASE("domain is enforced") {
    CHECK_THROWS_AS(ahr_loss(0.0, true, cfg), std::invalid_argument);
    CHECK_THROWS_AS(ahr_loss(1.0, false, cfg), std::invalid_argument);
    CHECK_THROWS_AS(ahr_loss(-0.2, false, cfg), std::invalid_argument);
  }
}

TEST_CASE("thr = 1 makes the scaled branch unreachable") {
  AhrConfig a{.thr = 1.0, .w = 0.15};
  AhrConfig b{.thr = 1.0, .w = 0.9};
  for (int i = 1; i < 100; ++i) {
    const double p = i / 100.0;
    CHECK(ahr_loss(p, false, a).loss == ahr_loss(p, false, b).loss);
    CHECK(ahr_loss(p, false, a).dloss_dlogit == ahr_loss(p, false, b).dloss_dlogit);
  }
}

TEST_CASE("w = 1 makes the two negative cases identical") {
  AhrConfig with_thr{.thr = 0.6, .w = 1.0};
  AhrConfig no_thr{.thr = 1.0, .w = 1.0};
  for (int i = 1; i < 200; ++i) {
    const double p = i / 200.0;
    CHECK(ahr_loss(p, false, with_thr).loss == ahr_loss(p, false, no_thr).loss);
  }
}

TEST_CASE("shrinking w never increases the hard-negative loss") {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    AhrConfig lo, hi;
    lo.thr = hi.thr = rng.uniform(0.5, 0.95);
    const double w1 = rng.uniform(0.01, 1.0);
    const double w2 = rng.uniform(0.01, 1.0);
    lo.w = std::min(w1, w2);
    hi.w = std::max(w1, w2);
    const double p = rng.uniform(lo.thr + 1e-3, 1.0 - 1e-6);
    CHECK(ahr_loss(p, false, lo).loss <= ahr_loss(p, false, hi).loss);
  }
}

TEST_CASE("standard-focal mode with w = 1 equals textbook focal loss") {
  AhrConfig cfg{.thr = 1.0, .w = 1.0, .mode = AhrMode::kStandardFocal};
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    const double p = rng.uniform(1e-4, 1.0 - 1e-4);
    const double a = cfg.alpha, g = cfg.gamma;
    CHECK(ahr_loss(p, true, cfg).loss ==
          doctest::Approx(-a * std::pow(1.0 - p, g) * std::log(p)).epsilon(1e-12));
    CHECK(ahr_loss(p, false, cfg).loss ==
          doctest::Approx(-(1.0 - a) * std::pow(p, g) * std::log(1.0 - p)).epsilon(1e-12));
  }
}

TEST_CASE("ahr gradients match finite differences on all branches and modes") {
  Rng rng(8);
  for (AhrMode mode : {AhrMode::kAsWritten, AhrMode::kStandardFocal}) {
    int tested = 0;
    while (tested < 120) {
      AhrConfig cfg;
      cfg.mode = mode;
      cfg.alpha = rng.uniform(0.05, 0.95);
      cfg.gamma = rng.uniform(0.0, 4.0);
      cfg.thr = rng.uniform(0.5, 1.0);
      cfg.w = rng.uniform(0.05, 1.0);
      const double p = rng.uniform(0.02, 0.98);
      if (std::abs(p - cfg.thr) < 1e-4) continue;  // loss is discontinuous at thr
      check_ahr_gradient(p, true, cfg);
      check_ahr_gradient(p, false, cfg);
      ++tested;
    }
  }
}

TEST_CASE("distillation loss basics") {
  const int H = 3, W = 3, C = 2;
  const ModelShape shape{4, C, 0};
  const ModelParams params = ModelParams::random_init(shape, 17, 0.4);
  Grid3<double> features(H, W, 4);
  Rng rng(9);
  for (double& v : features.data) v = rng.normal();
  const DenseOutput student = forward(params, features);
  AhrConfig cfg{.mode = AhrMode::kStandardFocal};

  SUBCASE("empty selection gives exactly zero") {
    Grid3<double> teacher(H, W, C, 0.5);
    const LossResult res = distill_loss(student, teacher, SelectionSet{}, cfg);
    CHECK(res.loss == 0.0);
    for (double g : res.grads.d_class_logits.data) CHECK(g == 0.0);
  }
  SUBCASE("matching teacher scores zero the selected gradient") {
    Grid3<double> teacher(H, W, C);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        for (int c = 0; c < C; ++c) {
          teacher.at(y, x, c) = sigmoid(student.class_logits.at(y, x, c));
        }
      }
    }
    SelectionSet sel;
    sel.insert({1, 1, 0, 0.9, kTagConf});
    sel.insert({2, 0, 1, 0.8, kTagConf});
    const LossResult res = distill_loss(student, teacher, sel, cfg);
    CHECK(res.grads.d_class_logits.at(1, 1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(res.grads.d_class_logits.at(2, 0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("one selected pixel with target 1 and probability 0.5 costs ln 2") {
    DenseOutput s = student;
    for (double& z : s.class_logits.data) z = 0.0;  // probability one half
    Grid3<double> teacher(H, W, C, 0.0);
    teacher.at(0, 0, 0) = 1.0;
    SelectionSet sel;
    sel.insert({0, 0, 0, 1.0, kTagGt});
    const LossResult res = distill_loss(s, teacher, sel, cfg);
    // positive term is -ln(0.5); the non-selected negative terms add the
    // focal background penalty at p = 0.5
    const double neg = ahr_loss(0.5, false, cfg).loss;
    CHECK(res.loss ==
          doctest::Approx(std::log(2.0) + (H * W * C - 1) * neg).epsilon(1e-9));
  }
  SUBCASE("duplicate insertions do not change the loss") {
    Grid3<double> teacher(H, W, C, 0.7);
    SelectionSet sel;
    sel.insert({1, 1, 0, 0.9, kTagConf});
    const LossResult once = distill_loss(student, teacher, sel, cfg);
    sel.insert({1, 1, 0, 0.9, kTagPerClass});  // same triple again
    CHECK(sel.size() == 1);
    const LossResult twice = distill_loss(student, teacher, sel, cfg);
    CHECK(once.loss == twice.loss);
  }
  SUBCASE("out-of-bounds selections are rejected") {
    Grid3<double> teacher(H, W, C, 0.5);
    SelectionSet sel;
    sel.insert({H, 0, 0, 0.5, kTagConf});
    CHECK_THROWS_AS(distill_loss(student, teacher, sel, cfg), std::invalid_argument);
  }
}

TEST_CASE("supervised loss structure") {
  const int H = 4, W = 4, C = 2;
  const ModelShape shape{3, C, 0};
  const ModelParams params = ModelParams::random_init(shape, 23, 0.3);
  Grid3<double> features(H, W, 3);
  Rng rng(10);
  for (double& v : features.data) v = rng.normal();
  const DenseOutput out = forward(params, features);
  AhrConfig cfg{.mode = AhrMode::kStandardFocal};

  SUBCASE("zero annotations reduce to the pure negative branch") {
    const Grid3<uint8_t> mask(H, W, C, 0);
    const LossResult res = supervised_loss(out, {}, mask, cfg);
    CHECK(res.quality == 0.0);
    CHECK(res.regression == 0.0);
    double expected = 0.0;
    for (double z : out.class_logits.data) {
      expected += ahr_loss(sigmoid(z), false, cfg).loss;
    }
    CHECK(res.cls == doctest::Approx(expected).epsilon(1e-9));  // norm = max(1, 0 pos)
  }
  SUBCASE("saturated predictions drive the classification loss to zero") {
    const std::vector<Instance> ann{{0, OrientedBox(2.0, 2.0, 2.0, 2.0, 0.0)}};
    const Grid3<uint8_t> mask = gt_pixel_mask(ann, H, W, C);
    DenseOutput perfect = out;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        for (int c = 0; c < C; ++c) {
          perfect.class_logits.at(y, x, c) = mask.at(y, x, c) ? 30.0 : -30.0;
        }
      }
    }
    const LossResult res = supervised_loss(perfect, ann, mask, cfg);
    CHECK(res.cls < 1e-9);
  }
}

TEST_CASE("supervised composite gradient matches finite differences") {
  const int H = 3, W = 4, C = 2;
  const ModelShape shape{5, C, 0};
  const ModelParams params = ModelParams::random_init(shape, 29, 0.2);
  Grid3<double> features(H, W, 5);
  Rng rng(11);
  for (double& v : features.data) v = rng.normal();

  // Boxes placed so no smooth-L1 residual sits within 1e-3 of the kink and
  // no probability within 1e-4 of thr (parameters are small, so p ~ 0.5).
  const std::vector<Instance> ann{{0, OrientedBox(1.7, 1.3, 3.5, 3.0, 0.35)},
                                  {1, OrientedBox(2.8, 2.2, 4.2, 3.3, -0.4)}};
  const Grid3<uint8_t> mask = gt_pixel_mask(ann, H, W, C);
  AhrConfig cfg{.mode = AhrMode::kStandardFocal};

  auto loss_of = [&](const ModelParams& p) {
    return supervised_loss(forward(p, features), ann, mask, cfg).loss;
  };
  ForwardCache cache;
  const DenseOutput out = forward(params, features, &cache);
  const LossResult res = supervised_loss(out, ann, mask, cfg);
  ModelParams analytic(shape);
  backward(params, features, cache, res.grads, analytic);

  Rng pick(31);
  for (int rep = 0; rep < 120; ++rep) {
    const size_t i = pick.next_u64() % params.flat().size();
    ModelParams probe = params;
    auto f = [&](double x) {
      probe.flat()[i] = x;
      return loss_of(probe);
    };
    const double numeric = oracles::central_difference(f, params.flat()[i], 1e-5);
    CHECK(oracles::rel_error(analytic.flat()[i], numeric) < 1e-5);
  }
}

TEST_CASE("distillation gradient matches finite differences") {
  const int H = 3, W = 3, C = 3;
  const ModelShape shape{4, C, 0};
  const ModelParams params = ModelParams::random_init(shape, 37, 0.3);
  Grid3<double> features(H, W, 4);
  Rng rng(13);
  for (double& v : features.data) v = rng.normal();

  Grid3<double> teacher(H, W, C);
  for (double& v : teacher.data) v = rng.uniform(0.05, 0.95);
  SelectionSet sel;
  for (int i = 0; i < 8; ++i) {
    sel.insert({rng.uniform_int(0, H - 1), rng.uniform_int(0, W - 1),
                rng.uniform_int(0, C - 1), rng.uniform(), kTagConf});
  }
  AhrConfig cfg{.mode = AhrMode::kStandardFocal};

  auto loss_of = [&](const ModelParams& p) {
    return distill_loss(forward(p, features), teacher, sel, cfg).loss;
  };
  ForwardCache cache;
  const DenseOutput out = forward(params, features, &cache);
  const LossResult res = distill_loss(out, teacher, sel, cfg);
  ModelParams analytic(shape);
  backward(params, features, cache, res.grads, analytic);

  Rng pick(41);
  for (int rep = 0; rep < 120; ++rep) {
    const size_t i = pick.next_u64() % params.flat().size();
    ModelParams probe = params;
    auto f = [&](double x) {
      probe.flat()[i] = x;
      return loss_of(probe);
    };
    const double numeric = oracles::central_difference(f, params.flat()[i], 1e-5);
    CHECK(oracles::rel_error(analytic.flat()[i], numeric) < 1e-5);
  }
}
