#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sinesr/nets_core.hpp"
#include "sinesr/sr_model.hpp"
#include "support.hpp"

using namespace sinesr;
using namespace sinesr::testing;

TEST_SUITE("nets_core") {

TEST_CASE("siren bound matches sqrt(6/n)") {
  CHECK(siren_bound(64) == doctest::Approx(std::sqrt(6.0 / 64.0)).epsilon(1e-15));
  CHECK(siren_bound(64) == doctest::Approx(0.30619).epsilon(1e-5));
  CHECK(siren_bound(6) == 1.0);
}

TEST_CASE("siren_init stays inside the bound") {
  Rng rng(3);
  const auto w = siren_init<double>(6, Shape{1, 1, 100, 100}, rng);
  for (double v : w.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("siren_init moments at fan-in 64") {
  Rng rng(11);
  const auto w = siren_init<double>(64, Shape{1, 1, 1000, 1000}, rng);
  const double bound = std::sqrt(6.0 / 64.0);
  double mean = 0.0;
  for (double v : w.values()) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size());
  CHECK(std::abs(mean) <= 3.0 * (bound / std::sqrt(3.0)) / 1000.0);
  CHECK(std::abs(var - bound * bound / 3.0) <= 0.05 * bound * bound / 3.0);
}

TEST_CASE("siren_init rejects non-positive fan-in") {
  Rng rng(0);
  CHECK_THROWS_AS(siren_init<float>(0, Shape{1, 1, 1, 1}, rng), std::invalid_argument);
  CHECK_THROWS_AS(siren_init<float>(-3, Shape{1, 1, 1, 1}, rng), std::invalid_argument);
}

TEST_CASE("sine layer weights use the siren bound of its fan-in") {
  Rng rng(5);
  SineLayer<double> s(16, 8, 30.0, rng);
  for (double v : s.weight().value.values()) CHECK(std::abs(v) <= siren_bound(16));
}

TEST_CASE("sine of zero input is zero") {
  Rng rng(1);
  SineLayer<double> s(4, 6, 30.0, rng);
  const auto y = s.forward(Tensord(2, 4, 3, 5));
  CHECK(y.shape() == Shape{2, 6, 3, 5});
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("sine with identity weight at pi/60 gives one") {
  SineLayer<double> s(1, 1, 30.0);
  s.weight().value[0] = 1.0;
  const auto y = s.forward(Tensord(1, 1, 4, 4, std::numbers::pi / 60.0));
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sine output stays in [-1, 1]") {
  Rng rng(2);
  SineLayer<float> s(8, 8, 30.0, rng);
  const auto y = s.forward(random_tensor<float>(Shape{2, 8, 9, 9}, rng, -50.0, 50.0));
  for (float v : y.values()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("sine layer channel mismatch is a shape error") {
  Rng rng(2);
  SineLayer<float> s(4, 4, 30.0, rng);
  CHECK_THROWS_AS(s.forward(Tensorf(1, 3, 4, 4)), ShapeError);
}

TEST_CASE("sine layer gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    SineLayer<double> s(3, 4, 30.0, rng);
    const auto x = random_tensor<double>(Shape{2, 3, 3, 3}, rng);
    CHECK(layer_gradient_error(s, x, rng) < 1e-4);
  }
}

TEST_CASE("conv keeps size with (k-1)/2 padding in both modes") {
  Rng rng(4);
  for (auto mode : {PaddingMode::kZero, PaddingMode::kReflection}) {
    for (int k : {1, 3, 5}) {
      Conv2d<float> conv(ConvOptions{3, 5, k, 1, -1, mode, true}, rng);
      const auto y = conv.forward(Tensorf(2, 3, 7, 6));
      CHECK(y.shape() == Shape{2, 5, 7, 6});
    }
  }
}

TEST_CASE("reflection padding does not repeat the edge") {
  const auto map = padded_axis_map(4, 2, 8, PaddingMode::kReflection);
  CHECK(map == std::vector<int>{2, 1, 0, 1, 2, 3, 2, 1});
  const auto zero = padded_axis_map(3, 1, 5, PaddingMode::kZero);
  CHECK(zero == std::vector<int>{-1, 0, 1, 2, -1});
}

TEST_CASE("conv matches direct summation") {
  Rng rng(8);
  Conv2d<double> conv(ConvOptions{2, 3, 3, 2, 1, PaddingMode::kZero, true}, rng);
  for (auto& v : conv.bias().value.values()) v = uniform_real(rng, -1, 1);
  const auto x = random_tensor<double>(Shape{1, 2, 5, 6}, rng);
  const auto y = conv.forward(x);
  REQUIRE(y.shape() == Shape{1, 3, 3, 3});
  const auto& w = conv.weight().value;
  for (int o = 0; o < 3; ++o) {
    for (int oy = 0; oy < 3; ++oy) {
      for (int ox = 0; ox < 3; ++ox) {
        double acc = conv.bias().value[o];
        for (int i = 0; i < 2; ++i) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = 2 * oy + ky - 1;
              const int ix = 2 * ox + kx - 1;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
              acc += w(o, i, ky, kx) * x(0, i, iy, ix);
            }
          }
        }
        CHECK(y(0, o, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto mode = seed % 2 ? PaddingMode::kReflection : PaddingMode::kZero;
    const int stride = seed % 3 == 0 ? 2 : 1;
    Conv2d<double> conv(ConvOptions{2, 3, 3, stride, -1, mode, true}, rng);
    const auto x = random_tensor<double>(Shape{2, 2, 5, 4}, rng);
    CHECK(layer_gradient_error(conv, x, rng) < 1e-4);
  }
}

TEST_CASE("zero residual block is the identity") {
  for (auto arrangement : {BlockArrangement::kSandwich, BlockArrangement::kPreactivation}) {
    ResidualBlock<double> block(ResidualBlockOptions{4, 3, 30.0, arrangement, PaddingMode::kReflection});
    Rng rng(6);
    const auto x = random_tensor<double>(Shape{2, 4, 5, 5}, rng);
    CHECK(block.forward(x) == x);
  }
}

TEST_CASE("1x1 single-channel sandwich block by hand") {
  ResidualBlock<double> block(ResidualBlockOptions{1, 1, 30.0, BlockArrangement::kSandwich,
                                                   PaddingMode::kZero});
  block.conv_a().weight().value[0] = 0.5;
  block.conv_a().bias().value[0] = 0.1;
  block.sine(0).weight().value[0] = 0.2;
  block.conv_b().weight().value[0] = -1.5;
  block.conv_b().bias().value[0] = 0.25;
  const double x = 0.3;
  const double expected = -1.5 * std::sin(30.0 * 0.2 * (0.5 * x + 0.1)) + 0.25 + x;
  const auto y = block.forward(Tensord(1, 1, 1, 1, x));
  CHECK(y[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("1x1 single-channel preactivation block by hand") {
  ResidualBlock<double> block(ResidualBlockOptions{1, 1, 30.0, BlockArrangement::kPreactivation,
                                                   PaddingMode::kZero});
  block.sine(0).weight().value[0] = 0.05;
  block.conv_a().weight().value[0] = 0.7;
  block.conv_a().bias().value[0] = -0.2;
  block.sine(1).weight().value[0] = 0.03;
  block.conv_b().weight().value[0] = 2.0;
  block.conv_b().bias().value[0] = 0.1;
  const double x = 0.4;
  const double h = 0.7 * std::sin(30.0 * 0.05 * x) - 0.2;
  const double expected = 2.0 * std::sin(30.0 * 0.03 * h) + 0.1 + x;
  const auto y = block.forward(Tensord(1, 1, 1, 1, x));
  CHECK(y[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("residual block gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 100);
    const auto arrangement = seed % 2 ? BlockArrangement::kPreactivation : BlockArrangement::kSandwich;
    ResidualBlock<double> block(ResidualBlockOptions{3, 3, 30.0, arrangement, PaddingMode::kReflection},
                                rng);
    const auto x = random_tensor<double>(Shape{1, 3, 4, 4}, rng, -0.1, 0.1);
    CHECK(layer_gradient_error(block, x, rng) < 1e-4);
  }
}

TEST_CASE("residual block rejects wrong channel count") {
  Rng rng(1);
  ResidualBlock<float> block(ResidualBlockOptions{4, 3, 30.0, BlockArrangement::kSandwich,
                                                  PaddingMode::kZero},
                             rng);
  CHECK_THROWS_AS(block.forward(Tensorf(1, 3, 5, 5)), ShapeError);
}

TEST_CASE("standard layers: gradients") {
  Rng rng(21);
  SUBCASE("leaky relu") {
    LeakyReLU<double> l(0.2);
    CHECK(layer_gradient_error(l, random_tensor<double>(Shape{2, 3, 4, 4}, rng), rng) < 1e-4);
  }
  SUBCASE("sigmoid") {
    Sigmoid<double> l;
    CHECK(layer_gradient_error(l, random_tensor<double>(Shape{2, 3, 4, 4}, rng, -3, 3), rng) < 1e-4);
  }
  SUBCASE("batch norm, batch statistics") {
    BatchNorm2d<double> l(3);
    CHECK(layer_gradient_error(l, random_tensor<double>(Shape{3, 3, 3, 3}, rng), rng) < 1e-4);
  }
  SUBCASE("global average pool") {
    GlobalAvgPool<double> l;
    CHECK(layer_gradient_error(l, random_tensor<double>(Shape{2, 3, 4, 5}, rng), rng) < 1e-4);
  }
  SUBCASE("linear") {
    Linear<double> l(5, 2, rng);
    CHECK(layer_gradient_error(l, random_tensor<double>(Shape{3, 5, 1, 1}, rng), rng) < 1e-4);
  }
  SUBCASE("max pool") {
    MaxPool2<double> l;
    CHECK(layer_gradient_error(l, random_tensor<double>(Shape{1, 2, 4, 6}, rng), rng) < 1e-4);
  }
}

TEST_CASE("batch norm eval mode is deterministic and uses running stats") {
  Rng rng(3);
  BatchNorm2d<double> bn(2);
  bn.forward(random_tensor<double>(Shape{4, 2, 3, 3}, rng, 2.0, 4.0));
  bn.set_training(false);
  const auto x = random_tensor<double>(Shape{2, 2, 3, 3}, rng);
  CHECK(bn.forward(x) == bn.forward(x));
  CHECK(bn.forward(x.slice(0, 1)) == bn.forward(x).slice(0, 1));
}

TEST_CASE("count_parameters") {
  CHECK(count_parameters(ParamList<float>{}) == 0);
  Rng rng(0);
  Conv2d<float> conv(ConvOptions{64, 64, 3, 1, -1, PaddingMode::kZero, true}, rng);
  CHECK(count_parameters(conv.parameters()) == 36928);
  BatchNorm2d<float> bn(8);
  CHECK(count_parameters(bn.parameters()) == 16);  // running stats excluded
}

TEST_CASE("default SR generator parameter budget") {
  Rng rng(0);
  SRGenerator<float> gen(SRGeneratorConfig{}, rng);
  const std::size_t n = count_parameters(gen.parameters());
  // encoder 3->64 5x5, decoder 64->3 5x5, 5 blocks of 2 convs + 2 sine mixers, alpha
  const std::size_t expected = (3 * 64 * 25 + 64) + (64 * 3 * 25 + 3) +
                               5 * (2 * (64 * 64 * 9 + 64) + 2 * 64 * 64) + 1;
  CHECK(n == expected);
  CHECK(n >= 323000);
  CHECK(n <= 437000);
}

}  // TEST_SUITE
