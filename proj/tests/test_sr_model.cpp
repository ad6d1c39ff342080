#include <cmath>

#include "doctest.h"
#include "sinesr/degradation.hpp"
#include "sinesr/sr_model.hpp"
#include "support.hpp"

using namespace sinesr;
using namespace sinesr::testing;

namespace {

SRGeneratorConfig tiny_generator() {
  SRGeneratorConfig c;
  c.features = 4;
  c.num_blocks = 2;
  return c;
}

double l2(const Tensord& t) { return std::sqrt(dot(t, t)); }

}  // namespace

TEST_SUITE("sr_model") {

TEST_CASE("initial alphas") {
  CHECK(initial_alphas(1, 2.0, 1.0) == std::vector<double>{2.0});
  const auto a = initial_alphas(3, 2.0, 1.0);
  REQUIRE(a.size() == 3);
  CHECK(a[0] == doctest::Approx(2.0));
  CHECK(a[1] == doctest::Approx(std::sqrt(2.0)));
  CHECK(a[2] == doctest::Approx(1.0));
}

TEST_CASE("projection hand example: inside the ball is the identity") {
  ProjectionLayer<double> proj({2.0});
  const Tensord r(1, 1, 8, 8, 4.0);  // norm 32, radius 2 * 8 * 8 = 128
  const double sigma[] = {8.0};
  CHECK(proj.forward(r, sigma) == r);
}

TEST_CASE("projection degenerate cases") {
  ProjectionLayer<double> proj({2.0});
  Rng rng(1);
  const double zero_sigma[] = {0.0};
  const auto r = random_tensor<double>(Shape{1, 3, 4, 4}, rng);
  const auto collapsed = proj.forward(r, zero_sigma);
  for (double v : collapsed.values()) CHECK(v == 0.0);
  const double sigma[] = {5.0};
  const auto zero = proj.forward(Tensord(1, 3, 4, 4), sigma);
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("projection lands on the ball and never expands") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const double alpha = uniform_real(rng, 0.1, 3.0);
    const double sigma = uniform_real(rng, 0.0, 20.0);
    ProjectionLayer<double> proj({alpha});
    const auto r = random_tensor<double>(Shape{1, 3, 5, 5}, rng, -100.0, 100.0);
    const double s[] = {sigma};
    const auto out = proj.forward(r, s);
    const double radius = alpha * sigma * std::sqrt(75.0);
    CHECK(l2(out) <= l2(r) * (1 + 1e-12));
    CHECK(l2(out) <= radius * (1 + 1e-12));
    if (l2(r) > radius) CHECK(l2(out) == doctest::Approx(radius).epsilon(1e-10));
  }
}

TEST_CASE("projection radius is monotone in alpha and sigma") {
  Rng rng(3);
  const auto r = random_tensor<double>(Shape{1, 3, 4, 4}, rng, -50.0, 50.0);
  double prev = -1.0;
  for (double alpha : {0.1, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    ProjectionLayer<double> proj({alpha});
    const double s[] = {3.0};
    const double n = l2(proj.forward(r, s));
    CHECK(n >= prev);
    prev = n;
  }
  prev = -1.0;
  for (double sigma : {0.0, 0.5, 2.0, 8.0, 30.0, 100.0}) {
    ProjectionLayer<double> proj({1.0});
    const double s[] = {sigma};
    const double n = l2(proj.forward(r, s));
    CHECK(n >= prev);
    prev = n;
  }
}

TEST_CASE("projection acts per image and per channel group") {
  Rng rng(4);
  ProjectionLayer<double> proj({2.0, 1.0, 0.5});
  const auto r = random_tensor<double>(Shape{2, 3, 4, 4}, rng, -40.0, 40.0);
  const double sigma[] = {1.0, 3.0};
  const auto out = proj.forward(r, sigma);
  const double alphas[] = {2.0, 1.0, 0.5};
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      double nr = 0.0;
      for (int i = 0; i < 16; ++i) nr += std::pow(r.plane(n, c)[i], 2);
      nr = std::sqrt(nr);
      const double radius = alphas[c] * sigma[n] * 4.0;
      const double scale = std::min(1.0, radius / nr);
      for (int i = 0; i < 16; ++i) {
        CHECK(out.plane(n, c)[i] == doctest::Approx(r.plane(n, c)[i] * scale).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("projection gradients wrt residual and alpha") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    ProjectionLayer<double> proj({uniform_real(rng, 0.5, 2.0)});
    // Half the seeds project, half stay inside the ball.
    const double sigma[] = {seed % 2 ? 0.2 : 5.0};
    const auto r = random_tensor<double>(Shape{1, 2, 3, 3}, rng);
    const auto g = random_tensor<double>(r.shape(), rng);
    proj.alpha().zero_grad();
    proj.forward(r, sigma);
    const auto dr = proj.backward(g);
    auto probe = [&](const Tensord& x) { return dot(proj.forward(x, sigma), g); };
    CHECK(relative_error(to_vector(dr), numeric_gradient(probe, r)) < 1e-4);
    const double analytic = proj.alpha().grad[0];
    const auto numeric = numeric_param_gradient([&] { return probe(r); }, proj.alpha().value);
    CHECK(relative_error({analytic}, numeric) < 1e-4);
  }
}

TEST_CASE("clip_output") {
  Tensorf img(1, 1, 1, 4);
  img[0] = -12.5f;
  img[1] = 300.0f;
  img[2] = 0.0f;
  img[3] = 254.5f;
  const auto out = clip_output(img);
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == 255.0f);
  CHECK(out[2] == 0.0f);
  CHECK(out[3] == 254.5f);
  CHECK(clip_output(out) == out);
}

TEST_CASE("32x32 input gives 128x128 output") {
  Rng rng(0);
  SRGenerator<float> gen(SRGeneratorConfig{}, rng);
  gen.set_recording(false);
  const double sigma[] = {5.0};
  const auto y = gen.forward(random_tensor<float>(Shape{1, 3, 32, 32}, rng, 0, 255), sigma);
  CHECK(y.shape() == Shape{1, 3, 128, 128});
}

TEST_CASE("zero residual reproduces clipped bicubic upsampling") {
  Rng rng(1);
  SRGenerator<float> gen(tiny_generator(), rng);
  gen.decoder().weight().value.zero();
  gen.decoder().bias().value.zero();
  const auto x = random_tensor<float>(Shape{1, 3, 9, 7}, rng, 0, 255);
  const double sigma[] = {6.0};
  const auto y = gen.forward(x, sigma);
  CHECK(max_abs_diff(y, clip_output(resize_bicubic(x, 4.0))) < 1e-4);
}

TEST_CASE("generator output is always in [0, 255]") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    SRGeneratorConfig c = tiny_generator();
    c.alpha_max = uniform_real(rng, 0.5, 50.0);
    SRGenerator<float> gen(c, rng);
    const auto x = random_tensor<float>(Shape{2, 3, 5, 6}, rng, -20, 275);
    const double sigma[] = {uniform_real(rng, 0, 40), uniform_real(rng, 0, 40)};
    const auto y = gen.forward(x, sigma);
    CHECK(y.shape() == Shape{2, 3, 20, 24});
    for (float v : y.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 255.0f);
    }
  }
}

TEST_CASE("generator input validation") {
  Rng rng(0);
  SRGenerator<float> gen(tiny_generator(), rng);
  const double neg[] = {-1.0};
  CHECK_THROWS_AS(gen.forward(Tensorf(1, 3, 4, 4, 10.0f), neg), std::invalid_argument);
  const double ok[] = {1.0};
  CHECK_THROWS_AS(gen.forward(Tensorf(1, 3, 0, 4), ok), ShapeError);
  CHECK_THROWS_AS(gen.forward(Tensorf(1, 1, 4, 4), ok), ShapeError);
}

TEST_CASE("full generator gradient on an 8x8 output") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    SRGenerator<double> gen(tiny_generator(), rng);
    // Mid-range input keeps the output away from the clipping kinks.
    const auto x = random_tensor<double>(Shape{1, 3, 2, 2}, rng, 100, 150);
    const double sigma[] = {seed % 2 ? 0.5 : 3.0};
    const auto y = gen.forward(x, sigma);
    REQUIRE(y.shape() == Shape{1, 3, 8, 8});
    const auto g = random_tensor<double>(y.shape(), rng);
    auto params = gen.parameters();
    zero_grads(params);
    gen.forward(x, sigma);
    const auto dx = gen.backward(g);
    auto probe = [&](const Tensord& in) { return dot(gen.forward(in, sigma), g); };
    CHECK(relative_error(to_vector(dx), numeric_gradient(probe, x)) < 1e-4);
    for (auto& np : params) {
      if (np.name != "projection.alpha" && np.name != "decoder.bias" &&
          np.name != "blocks.0.conv_a.weight") {
        continue;
      }
      CAPTURE(np.name);
      const auto numeric = numeric_param_gradient([&] { return probe(x); }, np.param->value);
      CHECK(relative_error(to_vector(np.param->grad), numeric) < 1e-4);
    }
  }
}

TEST_CASE("tiled inference matches the single pass") {
  Rng rng(7);
  SRGenerator<float> gen(tiny_generator(), rng);
  const auto x = random_tensor<float>(Shape{1, 3, 20, 18}, rng, 0, 255);
  const auto whole = gen.infer(x, 4.0, 0);
  const auto tiled = gen.infer(x, 4.0, 8, 8);
  CHECK(whole.shape() == tiled.shape());
  CHECK(max_abs_diff(whole, tiled) < 1e-2);
}

TEST_CASE("discriminator: one score per image, valid at 128") {
  Rng rng(0);
  SRDiscriminator<float> disc(SRDiscriminatorConfig{}, rng);
  disc.set_recording(false);
  const auto s = disc.forward(random_tensor<float>(Shape{3, 3, 128, 128}, rng, 0, 255));
  CHECK(s.shape() == Shape{3, 1, 1, 1});
  for (float v : s.values()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(disc.forward(Tensorf(1, 3, 96, 128)), ShapeError);
}

TEST_CASE("discriminator: duplicates score equally in eval mode") {
  Rng rng(1);
  SRDiscriminatorConfig c;
  c.channels = {4, 4, 8, 8};
  c.min_input_size = 16;
  SRDiscriminator<float> disc(c, rng);
  disc.forward(random_tensor<float>(Shape{4, 3, 16, 16}, rng, 0, 255));
  disc.set_training(false);
  const auto img = random_tensor<float>(Shape{1, 3, 16, 16}, rng, 0, 255);
  const Tensorf pair[] = {img, img};
  const auto s = disc.forward(stack<float>(pair));
  CHECK(s[0] == s[1]);
}

TEST_CASE("discriminator gradients match finite differences") {
  Rng rng(3);
  SRDiscriminatorConfig c;
  c.channels = {2, 2, 3, 3};
  c.min_input_size = 8;
  SRDiscriminator<double> disc(c, rng);
  const auto x = random_tensor<double>(Shape{2, 3, 8, 8}, rng, 0, 255);
  CHECK(layer_gradient_error(disc, x, rng) < 1e-4);
}

TEST_CASE("config validation") {
  nlohmann::json j = SRGeneratorConfig{};
  CHECK(j.get<SRGeneratorConfig>().num_blocks == 5);
  j["num_alpha"] = 2;
  CHECK_THROWS(j.get<SRGeneratorConfig>());
  j["num_alpha"] = 3;
  CHECK(j.get<SRGeneratorConfig>().num_alpha == 3);
  j["scale"] = 0;
  CHECK_THROWS(j.get<SRGeneratorConfig>());
}

}  // TEST_SUITE
