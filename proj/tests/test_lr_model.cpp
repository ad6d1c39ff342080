#include "doctest.h"
#include "sinesr/lr_model.hpp"
#include "sinesr/optim.hpp"
#include "support.hpp"

using namespace sinesr;
using namespace sinesr::testing;

namespace {

LRGeneratorConfig small_generator() {
  LRGeneratorConfig c;
  c.num_blocks = 2;
  c.channels = 4;
  return c;
}

LRDiscriminatorConfig small_discriminator() {
  LRDiscriminatorConfig c;
  c.channels = {4, 4, 4};
  return c;
}

}  // namespace

TEST_SUITE("lr_model") {

TEST_CASE("generator preserves spatial size for even inputs") {
  Rng rng(0);
  LRGenerator<float> gen(small_generator(), rng);
  for (int side = 32; side <= 256; side *= 2) {
    const auto y = gen.forward(Tensorf(1, 3, side, side + 2, 0.5f));
    CHECK(y.shape() == Shape{1, 3, side, side + 2});
  }
}

TEST_CASE("default generator maps 128x128x3 to 128x128x3") {
  Rng rng(0);
  LRGenerator<float> gen(LRGeneratorConfig{}, rng);
  gen.set_recording(false);
  const auto x = random_tensor<float>(Shape{1, 3, 128, 128}, rng, 0.0, 1.0);
  CHECK(gen.forward(x).shape() == Shape{1, 3, 128, 128});
}

TEST_CASE("generator output lies strictly inside (0, 1)") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    LRGenerator<double> gen(small_generator(), rng);
    const auto y = gen.forward(random_tensor<double>(Shape{2, 3, 8, 8}, rng, -5.0, 5.0));
    for (double v : y.values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("zeroed output conv yields 0.5 everywhere") {
  Rng rng(2);
  LRGenerator<float> gen(small_generator(), rng);
  gen.output_conv().weight().value.zero();
  gen.output_conv().bias().value.zero();
  const auto y = gen.forward(random_tensor<float>(Shape{1, 3, 6, 6}, rng, 0.0, 1.0));
  for (float v : y.values()) CHECK(v == 0.5f);
}

TEST_CASE("generator rejects wrong channel count") {
  Rng rng(2);
  LRGenerator<float> gen(small_generator(), rng);
  CHECK_THROWS_AS(gen.forward(Tensorf(1, 1, 8, 8)), ShapeError);
}

TEST_CASE("generator gradients match finite differences") {
  Rng rng(9);
  LRGeneratorConfig c = small_generator();
  c.num_blocks = 1;
  c.channels = 3;
  LRGenerator<double> gen(c, rng);
  const auto x = random_tensor<double>(Shape{1, 3, 4, 4}, rng, 0.0, 1.0);
  CHECK(layer_gradient_error(gen, x, rng) < 1e-4);
}

TEST_CASE("discriminator receptive field and patch map") {
  Rng rng(0);
  LRDiscriminator<float> disc(LRDiscriminatorConfig{}, rng);
  CHECK(disc.receptive_field() == 13);
  disc.set_training(false);
  disc.set_recording(false);
  const auto s = disc.forward(Tensorf(1, 3, 128, 128, 0.3f));
  CHECK(s.shape() == Shape{1, 1, 116, 116});
  CHECK(disc.output_extent(128) == 116);
}

TEST_CASE("discriminator scores are finite and deterministic in eval mode") {
  Rng rng(1);
  LRDiscriminator<float> disc(small_discriminator(), rng);
  disc.forward(random_tensor<float>(Shape{4, 3, 16, 16}, rng, 0.0, 1.0));
  disc.set_training(false);
  const auto x = random_tensor<float>(Shape{2, 3, 16, 16}, rng, 0.0, 1.0);
  const auto a = disc.forward(x);
  const auto b = disc.forward(x);
  CHECK(a == b);
  for (float v : a.values()) CHECK(std::isfinite(v));
}

TEST_CASE("discriminator rejects inputs below its receptive field") {
  Rng rng(1);
  LRDiscriminator<float> disc(small_discriminator(), rng);
  CHECK_THROWS_AS(disc.forward(Tensorf(1, 3, 12, 20)), ShapeError);
}

TEST_CASE("discriminator gradients match finite differences") {
  Rng rng(4);
  LRDiscriminatorConfig c = small_discriminator();
  c.channels = {2, 2, 2};
  LRDiscriminator<double> disc(c, rng);
  const auto x = random_tensor<double>(Shape{2, 3, 14, 13}, rng, 0.0, 1.0);
  CHECK(layer_gradient_error(disc, x, rng) < 1e-4);
}

TEST_CASE("every learnable tensor gets a gradient and moves after one step") {
  Rng rng(5);
  LRGenerator<float> gen(small_generator(), rng);
  LRDiscriminator<float> disc(small_discriminator(), rng);
  for (Layer<float>* net : std::initializer_list<Layer<float>*>{&gen, &disc}) {
    auto params = net->parameters();
    Adam opt(params, AdamConfig{0.5, 0.999, 1e-8, 0.0});
    std::vector<Tensorf> before;
    for (auto& p : params) before.push_back(p.param->value);
    opt.zero_grad();
    const auto y = net->forward(random_tensor<float>(Shape{2, 3, 16, 16}, rng, 0.0, 1.0));
    net->backward(random_tensor<float>(y.shape(), rng));
    opt.step(1e-3);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].param->trainable) continue;
      CAPTURE(params[i].name);
      CHECK(max_abs_diff(params[i].param->grad, Tensorf(params[i].param->grad.shape())) > 0.0);
      CHECK(max_abs_diff(before[i], params[i].param->value) > 0.0);
    }
  }
}

TEST_CASE("config json round trip and validation") {
  LRGeneratorConfig g;
  g.num_blocks = 3;
  const nlohmann::json j = g;
  CHECK(j.get<LRGeneratorConfig>().num_blocks == 3);
  nlohmann::json bad = j;
  bad["num_blocks"] = 0;
  CHECK_THROWS(bad.get<LRGeneratorConfig>());
  const nlohmann::json d = LRDiscriminatorConfig{};
  CHECK(d.get<LRDiscriminatorConfig>().channels == std::vector<int>{64, 128, 256});
}

}  // TEST_SUITE
