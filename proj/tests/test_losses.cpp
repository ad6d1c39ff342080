#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "sinesr/checkpoint.hpp"
#include "sinesr/losses.hpp"
#include "sinesr/lr_model.hpp"
#include "support.hpp"

using namespace sinesr;
using namespace sinesr::testing;

namespace {

const double kLn2 = std::log(2.0);

// Period-5 zero-sum pattern, even about 0 and about every multiple of 5, so
// its 5-tap box response vanishes under reflection borders when the side is
// 5m + 1.
Tensord zero_response_pattern(int side) {
  const double c[5] = {2.0, -1.5, 0.5, 0.5, -1.5};
  Tensord p(1, 3, side, side);
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) p(0, ch, y, x) = c[y % 5] * c[x % 5];
    }
  }
  return p;
}

FeatureExtractorConfig tiny_extractor() {
  FeatureExtractorConfig c;
  c.stages = {{3, 4, 3, 1, Activation::kLeakyRelu, false},
              {4, 4, 3, 2, Activation::kLeakyRelu, true},
              {4, 5, 3, 1, Activation::kRelu, false}};
  c.taps = {0, 2};
  return c;
}

// Scalar loss of x with the other operand fixed.
using ScalarLoss = std::function<LossResult<double>(const Tensord&)>;

double loss_gradient_error(const ScalarLoss& f, const Tensord& x) {
  const auto analytic = to_vector(f(x).grad);
  const auto numeric = numeric_gradient([&](const Tensord& t) { return f(t).value; }, x);
  return relative_error(analytic, numeric);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("low pass of a constant is the constant; high pass is zero") {
  const Tensord img(1, 3, 9, 8, 0.37);
  const auto low = frequency_filter(img, FrequencyBand::kLow);
  const auto high = frequency_filter(img, FrequencyBand::kHigh);
  for (double v : low.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
  for (double v : high.values()) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("3x3 ramp with 3x3 box, hand-convolved") {
  Tensord ramp(1, 1, 3, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) ramp(0, 0, y, x) = 3 * y + x;
  }
  const auto low = frequency_filter(ramp, FrequencyBand::kLow, 3);
  const double expected[3][3] = {{8.0 / 3, 3.0, 10.0 / 3},
                                 {11.0 / 3, 4.0, 13.0 / 3},
                                 {14.0 / 3, 5.0, 16.0 / 3}};
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) CHECK(low(0, 0, y, x) == doctest::Approx(expected[y][x]).epsilon(1e-14));
  }
}

TEST_CASE("filter kernel must be odd and fit the image") {
  CHECK_THROWS_AS(frequency_filter(Tensord(1, 1, 8, 8), FrequencyBand::kLow, 4), std::invalid_argument);
  CHECK_THROWS_AS(frequency_filter(Tensord(1, 1, 2, 8), FrequencyBand::kLow, 5), ShapeError);
}

TEST_CASE("filter adjoint is the transpose") {
  Rng rng(3);
  for (auto band : {FrequencyBand::kLow, FrequencyBand::kHigh}) {
    const auto x = random_tensor<double>(Shape{2, 3, 7, 9}, rng);
    const auto g = random_tensor<double>(Shape{2, 3, 7, 9}, rng);
    const double lhs = dot(frequency_filter(x, band), g);
    const double rhs = dot(x, frequency_filter_adjoint(g, band));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("color loss") {
  Rng rng(1);
  const auto target = random_tensor<double>(Shape{2, 3, 11, 11}, rng, 0, 1);
  CHECK(color_loss(target, target).value == 0.0);
  const Tensord pattern = zero_response_pattern(11);
  CHECK(max_abs_diff(frequency_filter(pattern, FrequencyBand::kLow), Tensord(pattern.shape())) < 1e-14);
  const Tensord one[] = {pattern, pattern};
  CHECK(color_loss(target + stack<double>(one), target).value < 1e-12);
  Tensord shifted = target;
  for (auto& v : shifted.values()) v += 0.1;
  CHECK(color_loss(shifted, target).value == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("texture loss closed forms") {
  CHECK(texture_loss_from_scores(Tensord(3, 1, 4, 4)).value == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(texture_loss_from_scores(Tensord(3, 1, 4, 4)).value == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(texture_loss_from_scores(Tensord(1, 1, 2, 2, 40.0)).value < 1e-15);
  const auto guarded = texture_loss_from_scores(Tensord(1, 1, 1, 1, -1e4));
  CHECK(std::isfinite(guarded.value));
  CHECK(guarded.value == doctest::Approx(-std::log(kLogGuard)).epsilon(1e-12));
}

TEST_CASE("texture loss through a discriminator is deterministic") {
  Rng rng(2);
  LRDiscriminatorConfig c;
  c.channels = {3, 3, 3};
  LRDiscriminator<double> disc(c, rng);
  disc.set_training(false);
  const auto gen = random_tensor<double>(Shape{2, 3, 16, 16}, rng, 0, 1);
  CHECK(texture_loss(gen, disc).value == texture_loss(gen, disc).value);
}

TEST_CASE("perceptual loss") {
  Rng rng(4);
  ConvFeatureExtractor<double> fx(tiny_extractor());
  const auto a = random_tensor<double>(Shape{1, 3, 12, 12}, rng, 0, 1);
  const auto b = random_tensor<double>(Shape{1, 3, 12, 12}, rng, 0, 1);
  CHECK(perceptual_loss(a, a, fx).value == 0.0);
  CHECK(perceptual_loss(a, b, fx).value == doctest::Approx(perceptual_loss(b, a, fx).value).epsilon(1e-14));
  CHECK(perceptual_loss(a, b, fx).value > 0.0);
}

TEST_CASE("linear 1x1 extractor of weight 2: constant offset 0.5 gives 1.0") {
  FeatureExtractorConfig c;
  c.stages = {{1, 1, 1, 1, Activation::kNone, false}};
  c.taps = {0};
  ConvFeatureExtractor<double> fx(c);
  fx.conv(0).weight().value.fill(2.0);
  fx.conv(0).bias().value.zero();
  Rng rng(5);
  const auto a = random_tensor<double>(Shape{1, 1, 6, 6}, rng, 0, 1);
  Tensord b = a;
  for (auto& v : b.values()) v += 0.5;
  CHECK(perceptual_loss(a, b, fx).value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fallback extractor is seeded and named") {
  ConvFeatureExtractor<float> a(FeatureExtractorConfig{});
  ConvFeatureExtractor<float> b(FeatureExtractorConfig{});
  CHECK_FALSE(a.pretrained());
  CHECK(a.name() == "fallback-seed0");
  Rng rng(6);
  const auto x = random_tensor<float>(Shape{1, 3, 16, 16}, rng, 0, 1);
  CHECK(a.features(x) == b.features(x));
}

TEST_CASE("extractor weights load from a container") {
  const auto dir = std::filesystem::temp_directory_path() / "sinesr_test_fx";
  std::filesystem::create_directories(dir);
  FeatureExtractorConfig c;
  c.stages = {{3, 2, 1, 1, Activation::kNone, false}};
  c.taps = {0};
  TensorContainer box;
  box.put("stages.0.weight", Tensorf(2, 3, 1, 1, 0.25f));
  box.put("stages.0.bias", Tensorf(2, 1, 1, 1, 1.0f));
  write_container(dir / "fx.ckpt", box);
  c.weights_path = (dir / "fx.ckpt").string();
  ConvFeatureExtractor<float> fx(c);
  CHECK(fx.pretrained());
  CHECK(fx.name() == "pretrained:fx.ckpt");
  const auto f = fx.features(Tensorf(1, 3, 2, 2, 2.0f));
  for (float v : f[0].values()) CHECK(v == doctest::Approx(2.5f));
  c.weights_path = (dir / "missing.ckpt").string();
  CHECK_FALSE(ConvFeatureExtractor<float>(c).pretrained());
  std::filesystem::remove_all(dir);
}

TEST_CASE("ragan indifference point is 2 ln 2 for both players") {
  for (double v : {-3.0, 0.0, 0.7, 12.0}) {
    const auto l = ragan_losses(Tensord(4, 1, 1, 1, v), Tensord(4, 1, 1, 1, v));
    CHECK(std::abs(l.generator.value - 2 * kLn2) < 1e-12);
    CHECK(std::abs(l.discriminator.value - 2 * kLn2) < 1e-12);
  }
  CHECK(2 * kLn2 == doctest::Approx(1.3862944).epsilon(1e-7));
}

TEST_CASE("ragan limits") {
  const Tensord high(3, 1, 1, 1, 50.0);
  const Tensord low(3, 1, 1, 1, -50.0);
  CHECK(ragan_losses(high, low).discriminator.value < 1e-12);
  CHECK(ragan_losses(low, high).generator.value < 1e-12);
  const auto extreme = ragan_losses(Tensord(2, 1, 1, 1, 1e5), Tensord(2, 1, 1, 1, -1e5));
  CHECK(std::isfinite(extreme.generator.value));
  CHECK(extreme.generator.value == doctest::Approx(-2 * std::log(kLogGuard)).epsilon(1e-9));
}

TEST_CASE("bce discriminator loss at zero scores") {
  const auto l = bce_discriminator_loss(Tensord(2, 1, 3, 3), Tensord(2, 1, 3, 3));
  CHECK(l.value == doctest::Approx(2 * kLn2).epsilon(1e-14));
}

TEST_CASE("tv loss") {
  Rng rng(7);
  const auto a = random_tensor<double>(Shape{2, 3, 5, 5}, rng);
  CHECK(tv_loss(a, a).value == 0.0);
  CHECK(tv_loss(Tensord(2, 3, 5, 5, 4.0), Tensord(2, 3, 5, 5, -9.0)).value == 0.0);
  Tensord gen(1, 1, 1, 2);
  gen[1] = 10.0;
  CHECK(tv_loss(gen, Tensord(1, 1, 1, 2)).value == 10.0);
}

TEST_CASE("content loss") {
  Rng rng(8);
  const auto a = random_tensor<double>(Shape{2, 3, 6, 6}, rng, 0, 255);
  CHECK(content_loss(a, a).value == 0.0);
  Tensord b = a;
  for (auto& v : b.values()) v += 3.0;
  CHECK(content_loss(b, a).value == doctest::Approx(3.0).epsilon(1e-14));
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor<double>(Shape{2, 3, 4, 4}, rng, 0, 255);
    const auto y = random_tensor<double>(Shape{2, 3, 4, 4}, rng, 0, 255);
    const auto z = random_tensor<double>(Shape{2, 3, 4, 4}, rng, 0, 255);
    CHECK(content_loss(x, z).value <= content_loss(x, y).value + content_loss(y, z).value + 1e-12);
  }
}

TEST_CASE("shape mismatch is rejected") {
  CHECK_THROWS_AS(content_loss(Tensord(1, 3, 4, 4), Tensord(1, 3, 4, 5)), ShapeError);
  CHECK_THROWS_AS(tv_loss(Tensord(1, 3, 4, 4), Tensord(2, 3, 4, 4)), ShapeError);
  CHECK_THROWS_AS(color_loss(Tensord(1, 3, 8, 8), Tensord(1, 1, 8, 8)), ShapeError);
}

TEST_CASE("weighted totals") {
  CHECK(lr_total_loss({1, 0, 0}) == 1.0);
  CHECK(lr_total_loss({0.5, 2.0, 3.0}) == 0.5 + 0.005 * 2.0 + 0.01 * 3.0);
  CHECK(lr_total_loss({0.5, 2.0, 3.0}) == doctest::Approx(0.54).epsilon(1e-15));
  CHECK(lr_total_loss({}) == 0.0);
  CHECK(sr_total_loss({0, 0, 0, 1}) == 10.0);
  CHECK(sr_total_loss({1, 1, 1, 0}) == 3.0);
  CHECK(sr_total_loss({}) == 0.0);
}

TEST_CASE("losses are non-negative") {
  Rng rng(9);
  ConvFeatureExtractor<double> fx(tiny_extractor());
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_tensor<double>(Shape{2, 3, 8, 8}, rng, 0, 1);
    const auto b = random_tensor<double>(Shape{2, 3, 8, 8}, rng, 0, 1);
    CHECK(color_loss(a, b).value >= 0.0);
    CHECK(tv_loss(a, b).value >= 0.0);
    CHECK(content_loss(a, b).value >= 0.0);
    CHECK(perceptual_loss(a, b, fx).value >= 0.0);
    const auto s = random_tensor<double>(Shape{2, 1, 1, 1}, rng, -5, 5);
    const auto t = random_tensor<double>(Shape{2, 1, 1, 1}, rng, -5, 5);
    CHECK(ragan_losses(s, t).generator.value >= 0.0);
    CHECK(ragan_losses(s, t).discriminator.value >= 0.0);
    CHECK(texture_loss_from_scores(s).value >= 0.0);
  }
}

TEST_CASE("loss gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Shape shape{2, 3, 6, 7};
    const auto x = random_tensor<double>(shape, rng, 0, 1);
    const auto t = random_tensor<double>(shape, rng, 0, 1);
    CHECK(loss_gradient_error([&](const Tensord& g) { return color_loss(g, t); }, x) < 1e-4);
    CHECK(loss_gradient_error([&](const Tensord& g) { return tv_loss(g, t); }, x) < 1e-4);
    CHECK(loss_gradient_error([&](const Tensord& g) { return content_loss(g, t); }, x) < 1e-4);
    ConvFeatureExtractor<double> fx(tiny_extractor());
    CHECK(loss_gradient_error([&](const Tensord& g) { return perceptual_loss(g, t, fx); }, x) < 1e-4);
    const auto s = random_tensor<double>(Shape{3, 1, 2, 2}, rng, -3, 3);
    CHECK(loss_gradient_error([](const Tensord& g) { return texture_loss_from_scores(g); }, s) < 1e-4);

    const auto real = random_tensor<double>(Shape{4, 1, 1, 1}, rng, -3, 3);
    const auto fake = random_tensor<double>(Shape{4, 1, 1, 1}, rng, -3, 3);
    auto pair_check = [&](auto pick) {
      const auto analytic_r = to_vector(pick(real, fake).grad_real);
      const auto analytic_f = to_vector(pick(real, fake).grad_fake);
      const auto numeric_r =
          numeric_gradient([&](const Tensord& r) { return pick(r, fake).value; }, real);
      const auto numeric_f =
          numeric_gradient([&](const Tensord& f) { return pick(real, f).value; }, fake);
      return std::max(relative_error(analytic_r, numeric_r), relative_error(analytic_f, numeric_f));
    };
    CHECK(pair_check([](const Tensord& r, const Tensord& f) { return ragan_losses(r, f).generator; }) < 1e-4);
    CHECK(pair_check([](const Tensord& r, const Tensord& f) { return ragan_losses(r, f).discriminator; }) < 1e-4);
    CHECK(pair_check([](const Tensord& r, const Tensord& f) { return bce_discriminator_loss(r, f); }) < 1e-4);
  }
}

TEST_CASE("texture loss gradient through the discriminator") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    LRDiscriminatorConfig c;
    c.channels = {2, 2, 2};
    LRDiscriminator<double> disc(c, rng);
    disc.set_training(false);
    const auto x = random_tensor<double>(Shape{1, 3, 14, 14}, rng, 0, 1);
    CHECK(loss_gradient_error([&](const Tensord& g) { return texture_loss(g, disc); }, x) < 1e-4);
  }
}

}  // TEST_SUITE
