#include "tml/poisson_sampler.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace tml;

TEST_CASE("sampling is deterministic in the seed") {
  const TorusPointCloud a = sample(500, 2, 42), b = sample(500, 2, 42), c = sample(500, 2, 43);
  CHECK(a.size() == b.size());
  CHECK(std::equal(a.coords().begin(), a.coords().end(), b.coords().begin(), b.coords().end()));
  CHECK_FALSE(std::equal(a.coords().begin(), a.coords().end(), c.coords().begin(), c.coords().end()));
  for (double x : a.coords()) CHECK((x >= 0.0 && x < 1.0));
}

TEST_CASE("point counts follow Poisson(n)") {
  // mean and variance of the count over many seeds
  const double n = 200;
  double s = 0, s2 = 0;
  const int m = 400;
  for (int i = 0; i < m; ++i) {
    const double c = static_cast<double>(sample(n, 3, derive_seed(9, static_cast<std::uint64_t>(i))).size());
    s += c;
    s2 += c * c;
  }
  const double mean = s / m, var = s2 / m - mean * mean;
  CHECK(std::abs(mean - n) < 4.0 * std::sqrt(n / m));
  CHECK(var / n == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("coordinates are uniform per axis") {
  const TorusPointCloud c = sample(20000, 2, 5);
  std::array<int, 10> bins{};
  for (double x : c.coords()) ++bins[static_cast<std::size_t>(x * 10)];
  const double expect = static_cast<double>(c.coords().size()) / 10.0;
  double chi2 = 0;
  for (int b : bins) chi2 += (b - expect) * (b - expect) / expect;
  CHECK(chi2 < 27.9);  // 99.9% point of chi^2 with 9 dof
}

TEST_CASE("derived seeds differ across streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 0, 1));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("ball queries agree with a linear scan") {
  for (int d = 1; d <= 4; ++d) {
    const TorusPointCloud c = sample(d == 1 ? 200 : 3000, d, 11 + static_cast<std::uint64_t>(d));
    Rng rng(7);
    for (int q = 0; q < 30; ++q) {
      Vec x(d);
      for (int a = 0; a < d; ++a) x[a] = rng.uniform();
      const double r = 0.02 + 0.2 * rng.uniform();
      const std::vector<std::uint32_t> got = c.points_in_ball(TorusPoint(x), r);
      std::vector<std::uint32_t> want;
      for (std::uint32_t id = 0; id < c.size(); ++id) {
        if (torus_distance(TorusPoint(x), c.torus_point(id)) <= r) want.push_back(id);
      }
      CHECK(got == want);
    }
  }
}

TEST_CASE("ball queries wrap around the torus") {
  std::vector<double> coords{0.01, 0.5, 0.99, 0.5, 0.5, 0.5};
  const TorusPointCloud c(2, coords, 3, 0);
  Vec x(2);
  x << 0.0, 0.5;
  CHECK(c.points_in_ball(TorusPoint(x), 0.02) == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("ball queries above twice r_max are refused") {
  const TorusPointCloud c = sample(100, 2, 1);
  Vec x = Vec::Zero(2);
  try {
    c.points_in_ball(TorusPoint(x), 2.0 * kDefaultRmax + 1e-9);
    FAIL("expected radius_too_large");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::radius_too_large);
  }
}

TEST_CASE("clouds validate their input") {
  CHECK_THROWS_AS(TorusPointCloud(2, {0.5, 1.0}, 1, 0), Error);
  CHECK_THROWS_AS(TorusPointCloud(5, std::vector<double>(5, 0.1), 1, 0), Error);
  CHECK_THROWS_AS(sample(-1, 2, 0), Error);
}

TEST_CASE("points CSV round trip") {
  const TorusPointCloud c = sample(50, 3, 8);
  std::stringstream ss;
  write_points_csv(c, ss);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header == "x0,x1,x2");
  const TorusPointCloud back = read_points_csv(ss);
  CHECK(back.dim() == 3);
  CHECK(std::equal(c.coords().begin(), c.coords().end(), back.coords().begin(), back.coords().end()));
}
