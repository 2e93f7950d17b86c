#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "rdn/matching.hpp"
#include "rdn/trainer.hpp"

using namespace rdn;

namespace {

Tensor random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(h, w, 3);
  for (double& v : t.data) v = u(rng);
  return t;
}

DescriptorField random_field(std::mt19937_64& rng, int h, int w, int c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DescriptorField f(h, w, c);
  for (double& v : f.data) v = u(rng);
  return f;
}

double euclid(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("triplet_term hand values") {
  CHECK(triplet_term(0.0, 2.0, 1.0) == 0.0);      // 1 + 0 - 4, clamped
  CHECK(triplet_term(1.0, 1.0, 1.0) == 1.0);      // 1 + 1 - 1
  CHECK(triplet_term(0.5, 1.0, 1.0) == doctest::Approx(0.25));
  CHECK(triplet_term(0.0, 1.0, 1.0) == 0.0);      // exactly at the boundary
  CHECK(triplet_term(2.0, 0.0, 1.0) == 5.0);
  CHECK(triplet_term(0.1, 3.0, 2.0) == 0.0);
}

TEST_CASE("lr_schedule halves every period, exactly") {
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.lr_halving_period = 10;
  CHECK(lr_schedule(0, cfg) == 1e-3);
  CHECK(lr_schedule(9, cfg) == 1e-3);
  CHECK(lr_schedule(10, cfg) == 1e-3 / 2);
  CHECK(lr_schedule(19, cfg) == 1e-3 / 2);
  CHECK(lr_schedule(20, cfg) == 1e-3 / 4);
  CHECK(lr_schedule(35, cfg) == 1e-3 / 8);
  CHECK_THROWS_AS(lr_schedule(-1, cfg), ContractViolation);
}

TEST_CASE("hardest_negative matches a brute-force oracle") {
  std::mt19937_64 rng(31);
  const int dim = 8, h = 13, w = 17;
  const DescriptorField f1 = random_field(rng, h, w, dim);
  const DescriptorField f2 = random_field(rng, h, w, dim);
  const auto pool1 = uniform_grid(h, w, 4, 0);
  const auto pool2 = uniform_grid(h, w, 4, 0);
  const int safe_radius = 4;

  std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1);
  for (int trial = 0; trial < 40; ++trial) {
    const Correspondence c{{px(rng), py(rng)}, {px(rng), py(rng)}};

    double best = std::numeric_limits<double>::infinity();
    bool from_second = true;
    Keypoint cand{};
    for (const Keypoint& k : pool2) {
      if (std::max(std::abs(k.x - c.p2.x), std::abs(k.y - c.p2.y)) <=
          safe_radius) {
        continue;
      }
      const double d = euclid(f1.pixel(c.p1.y, c.p1.x), f2.pixel(k.y, k.x));
      if (d < best) {
        best = d;
        from_second = true;
        cand = k;
      }
    }
    for (const Keypoint& k : pool1) {
      if (std::max(std::abs(k.x - c.p1.x), std::abs(k.y - c.p1.y)) <=
          safe_radius) {
        continue;
      }
      const double d = euclid(f2.pixel(c.p2.y, c.p2.x), f1.pixel(k.y, k.x));
      if (d < best) {
        best = d;
        from_second = false;
        cand = k;
      }
    }

    const HardestNegative got =
        hardest_negative(c, f1, f2, pool1, pool2, safe_radius);
    CHECK(got.distance == doctest::Approx(best).epsilon(1e-12));
    CHECK(got.from_second_pool == from_second);
    CHECK(got.candidate == cand);
    // every retained candidate is outside the safe radius of its anchor
    const Keypoint& anchor = got.from_second_pool ? c.p2 : c.p1;
    CHECK(std::max(std::abs(got.candidate.x - anchor.x),
                   std::abs(got.candidate.y - anchor.y)) > safe_radius);
  }
}

TEST_CASE("hardest_negative excludes the safe zone even when it holds the minimum") {
  // make the candidate right next to the true match the closest one
  const int dim = 4;
  DescriptorField f1(9, 9, dim), f2(9, 9, dim);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) {
      f1.at(y, x, 0) = 10.0 + y * 9 + x;
      f2.at(y, x, 0) = 20.0 + y * 9 + x;
    }
  }
  const Correspondence c{{4, 4}, {0, 0}};
  // candidate at Chebyshev distance 3 from the match: nearly identical
  f2.at(3, 0, 0) = f1.at(4, 4, 0) + 0.001;
  f2.at(3, 0, 1) = f1.at(4, 4, 1);
  f2.at(3, 0, 2) = f1.at(4, 4, 2);
  f2.at(3, 0, 3) = f1.at(4, 4, 3);
  // candidate at Chebyshev distance 8: farther but admissible
  f2.at(8, 0, 0) = f1.at(4, 4, 0) + 5.0;
  f2.at(8, 0, 1) = f1.at(4, 4, 1);
  f2.at(8, 0, 2) = f1.at(4, 4, 2);
  f2.at(8, 0, 3) = f1.at(4, 4, 3);
  const std::vector<Keypoint> pool2 = {{0, 3}, {0, 8}};
  const HardestNegative got =
      hardest_negative(c, f1, f2, {}, pool2, 4);
  CHECK(got.candidate == Keypoint{0, 8});
  CHECK(got.distance == doctest::Approx(5.0));
}

TEST_CASE("hardest_negative: empty effective pool throws") {
  std::mt19937_64 rng(32);
  const DescriptorField f1 = random_field(rng, 8, 8, 4);
  const DescriptorField f2 = random_field(rng, 8, 8, 4);
  const auto pool = uniform_grid(8, 8, 4, 0);
  const Correspondence c{{4, 4}, {4, 4}};
  CHECK_THROWS_AS(hardest_negative(c, f1, f2, pool, pool, 100),
                  DegeneratePoolError);
}

TEST_CASE("pair_loss on identical images: positive distance is zero") {
  RdnConfig cfg = RdnConfig::quarter();
  cfg.seed = 41;
  const RdnWeights w = init_weights(cfg);
  std::mt19937_64 rng(42);
  const Tensor img = random_image(rng, 24, 24);
  RdnGrads grads(w);
  const std::vector<Correspondence> corrs = {{{8, 8}, {8, 8}},
                                             {{15, 12}, {15, 12}}};
  TrainConfig tc;
  const PairLossResult r = pair_loss(img, img, corrs, w, grads, cfg, tc);
  CHECK(r.correspondence_count == 2);
  // p = 0 for both, so each term is max(0, 1 - n^2) <= 1
  CHECK(r.loss >= 0.0);
  CHECK(r.loss <= 2.0 + 1e-12);
  CHECK(std::isfinite(r.loss));
  // out-of-bounds correspondence rejected
  const std::vector<Correspondence> bad = {{{30, 8}, {8, 8}}};
  CHECK_THROWS_AS(pair_loss(img, img, bad, w, grads, cfg, tc), BoundsError);
  CHECK_THROWS_AS(pair_loss(img, img, {}, w, grads, cfg, tc),
                  ContractViolation);
}

TEST_CASE("pair_loss analytic gradients pass a finite-difference audit") {
  RdnConfig cfg = RdnConfig::quarter();
  cfg.seed = 43;
  RdnWeights w = init_weights(cfg);
  std::mt19937_64 rng(44);
  const Tensor img1 = random_image(rng, 16, 16);
  const Tensor img2 = random_image(rng, 16, 16);
  const std::vector<Correspondence> corrs = {{{5, 5}, {6, 5}},
                                             {{10, 8}, {9, 9}}};
  TrainConfig tc;

  RdnGrads grads(w);
  const PairLossResult base = pair_loss(img1, img2, corrs, w, grads, cfg, tc);
  REQUIRE(base.loss > 0.0);  // the audit needs an active margin

  std::vector<ParamBlock> blocks = parameter_blocks(w, grads);
  auto forward = [&]() {
    RdnGrads scratch(w);
    return pair_loss(img1, img2, corrs, w, scratch, cfg, tc).loss;
  };
  const GradCheckReport report =
      grad_check(forward, blocks, 1e-4, 1e-5, /*samples_per_block=*/3,
                 /*seed=*/9);
  CHECK(report.passed);
  CHECK(report.max_relative_error <= 1e-4);
}

TEST_CASE("adam_step first update and zero-gradient behavior") {
  TrainConfig tc;
  double value = 1.0;
  double grad = 0.5;
  std::vector<ParamBlock> blocks = {{"p", &value, &grad, 1}};
  AdamState state = AdamState::like(blocks);
  adam_step(blocks, state, 1e-3, tc);
  // bias-corrected first step: m_hat = g, v_hat = g^2
  const double expect = 1.0 - 1e-3 * grad / (std::abs(grad) + tc.adam_eps);
  CHECK(value == doctest::Approx(expect).epsilon(1e-12));
  CHECK(state.step_count == 1);

  double value2 = 3.0;
  double zero = 0.0;
  std::vector<ParamBlock> blocks2 = {{"q", &value2, &zero, 1}};
  AdamState state2 = AdamState::like(blocks2);
  adam_step(blocks2, state2, 1e-3, tc);
  CHECK(value2 == 3.0);

  double nanv = 1.0;
  double nang = std::numeric_limits<double>::quiet_NaN();
  std::vector<ParamBlock> blocks3 = {{"bad_block", &nanv, &nang, 1}};
  AdamState state3 = AdamState::like(blocks3);
  try {
    adam_step(blocks3, state3, 1e-3, tc);
    FAIL("expected TrainingDivergence");
  } catch (const TrainingDivergence& e) {
    CHECK(std::string(e.what()).find("bad_block") != std::string::npos);
  }
}

TEST_CASE("adam_step over several iterations matches a hand-rolled oracle") {
  TrainConfig tc;
  double value = 0.7;
  double grad = 0.0;
  std::vector<ParamBlock> blocks = {{"p", &value, &grad, 1}};
  AdamState state = AdamState::like(blocks);

  double ref = 0.7, m = 0.0, v = 0.0;
  const double grads_seq[] = {0.3, -0.8, 0.05, 1.4, -0.2};
  int t = 0;
  for (double g : grads_seq) {
    grad = g;
    adam_step(blocks, state, 2e-3, tc);
    ++t;
    m = tc.adam_beta1 * m + (1 - tc.adam_beta1) * g;
    v = tc.adam_beta2 * v + (1 - tc.adam_beta2) * g * g;
    const double mh = m / (1 - std::pow(tc.adam_beta1, t));
    const double vh = v / (1 - std::pow(tc.adam_beta2, t));
    ref -= 2e-3 * mh / (std::sqrt(vh) + tc.adam_eps);
    CHECK(value == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("train: zero epochs is the identity; runs are deterministic") {
  RdnConfig cfg = RdnConfig::quarter();
  cfg.seed = 51;
  const RdnWeights init = init_weights(cfg);
  std::mt19937_64 rng(52);

  std::vector<TrainingSample> data;
  for (int i = 0; i < 2; ++i) {
    TrainingSample s;
    s.image1 = random_image(rng, 20, 20);
    s.image2 = random_image(rng, 20, 20);
    s.corrs = {{{6, 6}, {7, 6}}, {{13, 10}, {12, 11}}};
    data.push_back(std::move(s));
  }

  TrainConfig tc;
  tc.epochs = 0;
  const TrainResult zero = train(data, init, cfg, tc);
  CHECK(zero.curve.empty());
  for (std::size_t i = 0; i < init.fen.size(); ++i) {
    CHECK(zero.weights.fen[i].kernel == init.fen[i].kernel);
  }

  tc.epochs = 2;
  tc.seed = 77;
  const TrainResult a = train(data, init, cfg, tc);
  const TrainResult b = train(data, init, cfg, tc);
  REQUIRE(a.curve.size() == 2);
  CHECK(a.curve[0].epoch == 0);
  CHECK(a.curve[0].lr == tc.lr0);
  CHECK(a.curve[1].lr == lr_schedule(1, tc));
  CHECK(a.curve[0].mean_loss == b.curve[0].mean_loss);
  for (std::size_t i = 0; i < a.weights.fen.size(); ++i) {
    CHECK(a.weights.fen[i].kernel == b.weights.fen[i].kernel);
    CHECK(a.weights.fen[i].kernel != init.fen[i].kernel);  // it did update
  }

  CHECK_THROWS_AS(train({}, init, cfg, tc), ContractViolation);
  TrainConfig badcfg;
  badcfg.margin = -1.0;
  CHECK_THROWS_AS(train(data, init, cfg, badcfg), ContractViolation);
}
