#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>

#include "sss/noise.hpp"
#include "testutil.hpp"

using sss::GrayImage;
using sss::NoiseSpec;

TEST_CASE("zero-strength noise is the identity", "[noise]") {
  const GrayImage img = testutil::make_phantom(32, 32, 3);
  CHECK(sss::add_gaussian(img, 0.0, 7) == img);
  CHECK(sss::add_speckle(img, 0.0, 7) == img);
  CHECK(sss::add_salt_pepper(img, 0.0, 7) == img);
}

TEST_CASE("generators are deterministic per seed and distinct across seeds", "[noise]") {
  const GrayImage img = testutil::make_phantom(40, 30, 4);
  CHECK(sss::add_gaussian(img, 0.1, 5) == sss::add_gaussian(img, 0.1, 5));
  CHECK(sss::add_salt_pepper(img, 0.2, 5) == sss::add_salt_pepper(img, 0.2, 5));
  CHECK(sss::add_speckle(img, 0.2, 5) == sss::add_speckle(img, 0.2, 5));
  CHECK(sss::add_gaussian(img, 0.1, 5) != sss::add_gaussian(img, 0.1, 6));
  CHECK(sss::add_salt_pepper(img, 0.2, 5) != sss::add_salt_pepper(img, 0.2, 6));
  CHECK(sss::add_speckle(img, 0.2, 5) != sss::add_speckle(img, 0.2, 6));
}

TEST_CASE("outputs stay inside [0,1]", "[noise]") {
  const GrayImage img = testutil::make_random_image(64, 64, 8);
  for (const GrayImage& out : {sss::add_gaussian(img, 0.5, 1), sss::add_salt_pepper(img, 0.5, 1),
                               sss::add_speckle(img, 0.8, 1)}) {
    bool ok = true;
    for (double v : out.data()) ok = ok && v >= 0.0 && v <= 1.0;
    CHECK(ok);
  }
}

TEST_CASE("gaussian noise has the requested standard deviation", "[noise]") {
  const int n = 256 * 256;
  const GrayImage flat(256, 256, 0.5);
  const GrayImage noisy = sss::add_gaussian(flat, 0.1, 21);
  double sum = 0.0, sum2 = 0.0;
  for (std::int64_t i = 0; i < noisy.size(); ++i) {
    const double d = noisy.data()[i] - 0.5;
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  // clamping barely bites at 0.5 +/- 5 sigma
  CHECK(std::abs(sd - 0.1) < 3.0 * 0.1 / std::sqrt(2.0 * n));
}

TEST_CASE("salt-pepper corrupts the requested fraction to extremes", "[noise]") {
  const int n = 256 * 256;
  const GrayImage flat(256, 256, 0.5);
  const GrayImage noisy = sss::add_salt_pepper(flat, 0.1, 22);
  int corrupted = 0, extremes = 0;
  for (double v : noisy.data())
    if (v != 0.5) {
      ++corrupted;
      extremes += (v == 0.0 || v == 1.0) ? 1 : 0;
    }
  CHECK(corrupted == extremes);  // corrupted pixels are exactly 0 or 1
  CHECK(std::abs(corrupted - 0.1 * n) < 3.0 * std::sqrt(0.1 * 0.9 * n));

  const GrayImage all = sss::add_salt_pepper(testutil::make_random_image(64, 64, 1), 1.0, 23);
  bool binary = true;
  for (double v : all.data()) binary = binary && (v == 0.0 || v == 1.0);
  CHECK(binary);
}

TEST_CASE("speckle scales with the signal", "[noise]") {
  const GrayImage zero(64, 64, 0.0);
  CHECK(sss::add_speckle(zero, 0.5, 9) == zero);

  // x*(1+n) on constant 0.5 with sigma 0.2 has std 0.5*0.2 = 0.1
  const int n = 256 * 256;
  const GrayImage flat(256, 256, 0.5);
  const GrayImage noisy = sss::add_speckle(flat, 0.2, 24);
  double sum = 0.0, sum2 = 0.0;
  for (double v : noisy.data()) {
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(sd - 0.1) < 3.0 * 0.1 / std::sqrt(2.0 * n));
}

TEST_CASE("parameter validation", "[noise]") {
  const GrayImage img(4, 4, 0.5);
  CHECK_THROWS_AS(sss::add_gaussian(img, -0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(sss::add_speckle(img, -0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(sss::add_salt_pepper(img, -0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(sss::add_salt_pepper(img, 1.1, 1), std::invalid_argument);
}

TEST_CASE("noise spec parsing and formatting", "[noise]") {
  NoiseSpec g = sss::parse_noise_spec("gaussian:0.1");
  CHECK(g.kind == NoiseSpec::Kind::gaussian);
  CHECK(g.param == 0.1);

  NoiseSpec sp = sss::parse_noise_spec("salt-pepper:0.05");
  CHECK(sp.kind == NoiseSpec::Kind::salt_pepper);
  CHECK(sp.param == 0.05);
  CHECK(sss::parse_noise_spec("saltpepper:0.05").kind == NoiseSpec::Kind::salt_pepper);

  NoiseSpec s = sss::parse_noise_spec("speckle:0.2");
  CHECK(s.kind == NoiseSpec::Kind::speckle);
  CHECK(s.param == 0.2);

  CHECK_THROWS_AS(sss::parse_noise_spec("gaussian"), std::invalid_argument);
  CHECK_THROWS_AS(sss::parse_noise_spec("rician:0.1"), std::invalid_argument);
  CHECK_THROWS_AS(sss::parse_noise_spec("gaussian:x"), std::invalid_argument);
  CHECK_THROWS_AS(sss::parse_noise_spec("gaussian:-0.1"), std::invalid_argument);
  CHECK_THROWS_AS(sss::parse_noise_spec("salt-pepper:1.5"), std::invalid_argument);

  CHECK(sss::format_noise_spec(g) == "gaussian:0.1");
  CHECK(sss::format_noise_spec(sp) == "salt-pepper:0.05");
  CHECK(sss::format_noise_spec(s) == "speckle:0.2");

  // apply_noise dispatches to the matching generator
  const GrayImage img = testutil::make_phantom(32, 32, 5);
  g.seed = 77;
  CHECK(sss::apply_noise(img, g) == sss::add_gaussian(img, 0.1, 77));
  sp.seed = 78;
  CHECK(sss::apply_noise(img, sp) == sss::add_salt_pepper(img, 0.05, 78));
  s.seed = 79;
  CHECK(sss::apply_noise(img, s) == sss::add_speckle(img, 0.2, 79));
}
