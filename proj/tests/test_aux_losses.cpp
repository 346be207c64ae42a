#include "catch_torch.hpp"

#include "asp/aux_losses.hpp"
#include "oracles.hpp"

using namespace asp;

TEST_CASE("gaussian_pyramid level sizes", "[aux]") {
  auto img = torch::rand({3, 512, 512});
  auto pyr = gaussian_pyramid(img, PyramidConfig::with_levels(3));
  REQUIRE(pyr.size() == 3);
  CHECK(pyr[0].sizes() == torch::IntArrayRef({3, 512, 512}));
  CHECK(pyr[1].sizes() == torch::IntArrayRef({3, 256, 256}));
  CHECK(pyr[2].sizes() == torch::IntArrayRef({3, 128, 128}));
}

TEST_CASE("gaussian_pyramid preserves constants exactly", "[aux]") {
  auto img = torch::full({3, 64, 64}, -0.375);
  auto pyr = gaussian_pyramid(img, PyramidConfig::with_levels(3));
  for (const auto& level : pyr) {
    CHECK(level.min().item<float>() == -0.375f);
    CHECK(level.max().item<float>() == -0.375f);
  }
}

TEST_CASE("gaussian_pyramid with one level is the identity", "[aux]") {
  auto img = torch::rand({3, 30, 46});
  auto pyr = gaussian_pyramid(img, PyramidConfig::with_levels(1));
  REQUIRE(pyr.size() == 1);
  CHECK(torch::equal(pyr[0], img));
}

TEST_CASE("gaussian_pyramid validates input", "[aux]") {
  CHECK_THROWS_AS(
      gaussian_pyramid(torch::rand({3, 65, 64}), PyramidConfig::with_levels(3)),
      ShapeError);
  // levels capped at log2(min(H,W)) - 2
  CHECK_THROWS_AS(
      gaussian_pyramid(torch::rand({3, 16, 16}), PyramidConfig::with_levels(3)),
      ConfigError);
  PyramidConfig bad;
  bad.levels = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("gp_loss basics", "[aux]") {
  auto a = torch::rand({3, 64, 64}) * 2.0 - 1.0;
  auto cfg = PyramidConfig::with_levels(3);
  CHECK(gp_loss(a, a, cfg).item<double>() == 0.0);

  auto b = torch::rand({3, 64, 64}) * 2.0 - 1.0;
  CHECK(gp_loss(a, b, cfg).item<double>() ==
        gp_loss(b, a, cfg).item<double>());
  CHECK(gp_loss(a, b, cfg).item<double>() > 0.0);
  CHECK_THROWS_AS(gp_loss(a, torch::rand({3, 32, 32}), cfg), ShapeError);
}

TEST_CASE("gp_loss on constants differing by c is levels * |c|", "[aux]") {
  auto a = torch::full({3, 64, 64}, 0.10);
  auto b = torch::full({3, 64, 64}, -0.15);
  auto loss = gp_loss(a, b, PyramidConfig::with_levels(3));
  CHECK(loss.item<double>() == Catch::Approx(3.0 * 0.25).margin(1e-6));
}

TEST_CASE("gp_loss gradient matches central differences", "[aux]") {
  torch::manual_seed(7);
  auto a = (torch::rand({3, 16, 16}, torch::kDouble) * 2.0 - 1.0)
               .set_requires_grad(true);
  auto b = torch::rand({3, 16, 16}, torch::kDouble) * 2.0 - 1.0;
  auto cfg = PyramidConfig::with_levels(2);
  gp_loss(a, b, cfg).backward();
  auto fd = oracle::finite_diff_grad(
      [&](const torch::Tensor&) {
        torch::NoGradGuard ng;
        return gp_loss(a.detach(), b, cfg).item<double>();
      },
      a.detach(), 1e-5);
  CHECK(oracle::max_rel_err(a.grad(), fd, 1e-5) < 1e-4);
}

TEST_CASE("least-squares adversarial losses", "[aux]") {
  auto ones = torch::ones({1, 1, 6, 6});
  auto zeros = torch::zeros({1, 1, 6, 6});
  CHECK(adversarial_g_loss(ones).item<double>() == 0.0);
  CHECK(adversarial_g_loss(zeros).item<double>() == Catch::Approx(1.0));
  CHECK(adversarial_d_loss(ones, zeros).item<double>() == 0.0);
  CHECK(adversarial_d_loss(zeros, ones).item<double>() == Catch::Approx(1.0));

  auto nan = torch::full({2, 2}, std::numeric_limits<float>::quiet_NaN());
  CHECK_THROWS_AS(adversarial_g_loss(nan), NumericError);
  CHECK_THROWS_AS(adversarial_d_loss(ones, nan), NumericError);
}
