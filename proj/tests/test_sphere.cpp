#include <doctest.h>

#include <cmath>
#include <random>

#include "salgail/error.hpp"
#include "salgail/sphere.hpp"

using namespace salgail;

namespace {

// Independent oracle: angle between unit vectors built from scratch.
double dot_oracle(SpherePoint a, SpherePoint b) {
  const double la = a.lat * kPi / 180.0, oa = a.lon * kPi / 180.0;
  const double lb = b.lat * kPi / 180.0, ob = b.lon * kPi / 180.0;
  const double d = std::cos(la) * std::cos(oa) * std::cos(lb) * std::cos(ob) +
                   std::cos(la) * std::sin(oa) * std::cos(lb) * std::sin(ob) + std::sin(la) * std::sin(lb);
  return std::acos(std::clamp(d, -1.0, 1.0));
}

SpherePoint random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> z(-1.0, 1.0), lon(-180.0, 180.0);
  return {std::asin(z(rng)) * 180.0 / kPi, lon(rng)};
}

Image gradient_image(int w, int h) {
  Image img(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      img.at(r, c) = static_cast<float>(0.5 + 0.25 * std::sin(c * 2.0 * kPi / w) + 0.2 * std::cos(r * kPi / h));
  return img;
}

}  // namespace

TEST_SUITE("sphere") {
  TEST_CASE("spherical delta on canonical examples") {
    CHECK(spherical_delta({0, 0}, {0, 0}) == doctest::Approx(0.0));
    CHECK(spherical_delta({0, 0}, {0, -180}) == doctest::Approx(kPi));
    CHECK(spherical_delta({0, 0}, {90, 0}) == doctest::Approx(kPi / 2));
  }

  TEST_CASE("orthodromic distance scales with radius and rejects bad radius") {
    CHECK(orthodromic_distance({0, 0}, {0, 90}, 1.0) == doctest::Approx(kPi / 2));
    CHECK(orthodromic_distance({0, 0}, {0, -180}, 2.0) == doctest::Approx(2 * kPi));
    CHECK(std::abs(orthodromic_distance({45, 10}, {45, 20}, 1.0) - dot_oracle({45, 10}, {45, 20})) < 1e-9);
    CHECK_THROWS_AS(orthodromic_distance({0, 0}, {1, 1}, 0.0), InputError);
    CHECK_THROWS_AS(orthodromic_distance({0, 0}, {1, 1}, -1.0), InputError);
  }

  TEST_CASE("spherical delta agrees with the vector oracle, is symmetric and obeys the triangle inequality") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
      const auto a = random_point(rng), b = random_point(rng), c = random_point(rng);
      const double ab = spherical_delta(a, b);
      CHECK(std::abs(ab - spherical_delta(b, a)) < 1e-12);
      CHECK(std::abs(ab - dot_oracle(a, b)) < 1e-7);  // acos oracle loses precision near 0 and pi
      CHECK(ab <= spherical_delta(a, c) + spherical_delta(c, b) + 1e-9);
      CHECK(ab >= 0.0);
      CHECK(ab <= kPi + 1e-15);
    }
  }

  TEST_CASE("equirectangular mapping examples") {
    auto p = to_equirect({0, 0}, 4000, 2000);
    CHECK(p.x == doctest::Approx(2000));
    CHECK(p.y == doctest::Approx(1000));
    p = to_equirect({90, -180}, 4000, 2000);
    CHECK(p.x == doctest::Approx(0));
    CHECK(p.y == doctest::Approx(2000));
    p = to_equirect({-45, 90}, 360, 180);
    CHECK(p.x == doctest::Approx(270));
    CHECK(p.y == doctest::Approx(45));
  }

  TEST_CASE("inverse mapping examples, bounds and round trip") {
    auto s = from_equirect({2000, 1000}, 4000, 2000);
    CHECK(s.lat == doctest::Approx(0));
    CHECK(s.lon == doctest::Approx(0));
    s = from_equirect({0, 0}, 4, 2);
    CHECK(s.lat == doctest::Approx(-90));
    CHECK(s.lon == doctest::Approx(-180));
    CHECK_THROWS_AS(from_equirect({-0.1, 0}, 4, 2), InputError);
    CHECK_THROWS_AS(from_equirect({0, 2.5}, 4, 2), InputError);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ux(0.0, 4000.0), uy(0.0, 2000.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const PixelCoord px{ux(rng), uy(rng)};
      const auto back = to_equirect(from_equirect(px, 4000, 2000), 4000, 2000);
      worst = std::max({worst, std::abs(back.x - px.x), std::abs(back.y - px.y)});
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("longitude increases strictly with x") {
    double prev = -1e9;
    for (int i = 0; i <= 100; ++i) {
      const double lon = from_equirect({i * 3.6, 90}, 360, 180).lon;
      CHECK(lon > prev);
      prev = lon;
    }
  }

  TEST_CASE("canonicalize keeps bounds, reflects over the poles and is idempotent") {
    const auto p = canonicalize({95, 10});
    CHECK(p.lat == doctest::Approx(85));
    CHECK(p.lon == doctest::Approx(-170));
    CHECK(canonicalize({0, 180}).lon == doctest::Approx(-180));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> big(-1000, 1000);
    for (int i = 0; i < 500; ++i) {
      const auto c = canonicalize({big(rng), big(rng)});
      CHECK(c.lat >= -90.0);
      CHECK(c.lat <= 90.0);
      CHECK(c.lon >= -180.0);
      CHECK(c.lon < 180.0);
      const auto cc = canonicalize(c);
      CHECK(cc.lat == c.lat);
      CHECK(cc.lon == c.lon);
    }
  }

  TEST_CASE("great-circle moves") {
    auto p = move_along({0, 0}, 0.0, 4.0);
    CHECK(p.lat == doctest::Approx(0).epsilon(1e-12));
    CHECK(p.lon == doctest::Approx(4));
    p = move_along({89, 0}, 90.0, 4.0);
    CHECK(p.lat == doctest::Approx(87));
    CHECK(std::abs(p.lon) == doctest::Approx(180));
    std::mt19937_64 rng(9);
    for (int i = 0; i < 200; ++i) {
      const auto a = random_point(rng);
      const auto b = move_along(a, i * 7.0, 4.0);
      CHECK(angular_distance_deg(a, b) == doctest::Approx(4.0).epsilon(1e-9));
    }
  }

  TEST_CASE("viewport of a uniform image is uniform") {
    Image img(64, 32, 1, 0.4F);
    for (auto c : {SpherePoint{0, 0}, SpherePoint{80, 100}, SpherePoint{-30, -179}}) {
      const auto patch = extract_viewport(img, c, {90, 90, 16, 16, Interp::Bilinear});
      for (float v : patch.pixels) CHECK(v == doctest::Approx(0.4F));
    }
  }

  TEST_CASE("bright dot at the view centre appears at the patch centre") {
    Image img(360, 180, 1, 0.0F);
    const auto px = to_equirect({0, 0}, 360, 180);
    for (int dr = -1; dr <= 0; ++dr)
      for (int dc = -1; dc <= 0; ++dc) img.at(180 - static_cast<int>(px.y) + dr, static_cast<int>(px.x) + dc) = 1.0F;
    const auto patch = extract_viewport(img, {0, 0}, {90, 90, 33, 33, Interp::Bilinear});
    int best = 0;
    for (std::size_t i = 0; i < patch.pixels.size(); ++i)
      if (patch.pixels[i] > patch.pixels[best]) best = static_cast<int>(i);
    CHECK(best / 33 == 16);
    CHECK(best % 33 == 16);
  }

  TEST_CASE("antipodal views of a hemisphere-split image differ by the contrast") {
    Image img(360, 180);
    for (int r = 0; r < 180; ++r)
      for (int c = 0; c < 360; ++c) img.at(r, c) = c < 180 ? 0.2F : 0.9F;  // west dark, east bright
    const ViewportSpec spec{60, 60, 16, 16, Interp::Bilinear};
    auto mean = [](const Image& p) {
      double s = 0;
      for (float v : p.pixels) s += v;
      return s / p.pixels.size();
    };
    const double east = mean(extract_viewport(img, {0, 90}, spec));
    const double west = mean(extract_viewport(img, {0, -90}, spec));
    CHECK(east - west == doctest::Approx(0.7).epsilon(1e-6));
  }

  TEST_CASE("viewport is equivariant under longitude rotation") {
    const int w = 360, h = 180;
    const Image img = gradient_image(w, h);
    Image rotated(w, h);
    const int shift = 40;  // degrees, one pixel per degree
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) rotated.at(r, (c + shift) % w) = img.at(r, c);
    for (auto centre : {SpherePoint{10, 20}, SpherePoint{-50, 170}, SpherePoint{70, -60}}) {
      const auto a = extract_viewport(img, centre, {90, 90, 20, 20, Interp::Bilinear});
      const auto b = extract_viewport(rotated, {centre.lat, centre.lon + shift}, {90, 90, 20, 20, Interp::Bilinear});
      double worst = 0;
      for (std::size_t i = 0; i < a.pixels.size(); ++i) worst = std::max(worst, double(std::abs(a.pixels[i] - b.pixels[i])));
      CHECK(worst < 1e-6);
    }
  }

  TEST_CASE("degenerate viewport specs are rejected") {
    Image img(8, 4, 1, 0.5F);
    CHECK_THROWS_AS(extract_viewport(img, {0, 0}, {0, 90, 8, 8, Interp::Bilinear}), ConfigError);
    CHECK_THROWS_AS(extract_viewport(img, {0, 0}, {90, 180, 8, 8, Interp::Bilinear}), ConfigError);
    CHECK_THROWS_AS(extract_viewport(img, {0, 0}, {90, 90, 0, 8, Interp::Bilinear}), ConfigError);
    CHECK_THROWS_AS(extract_viewport(Image{}, {0, 0}, {}), InputError);
  }
}
