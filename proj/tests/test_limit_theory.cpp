#include "tml/limit_theory.hpp"
#include "tml/torus_geom.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace tml;

namespace {

// D_2 in the plane by a deterministic grid over the angles of the second
// and third point on the circle (the first fixed at angle 0).
double d2_plane_by_quadrature(int m = 2000) {
  const double two_pi = 2.0 * std::numbers::pi;
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double a = (i + 0.5) * two_pi / m, b = (j + 0.5) * two_pi / m;
      const double lo = std::min(a, b), hi = std::max(a, b);
      // origin inside iff every arc between consecutive points is below pi
      if (!(lo < std::numbers::pi && hi - lo < std::numbers::pi && two_pi - hi < std::numbers::pi)) continue;
      sum += 0.5 * std::abs(std::sin(a) + std::sin(b - a) - std::sin(b));
    }
  }
  const double mean = sum / (static_cast<double>(m) * m);  // E[area 1{inside}]
  const double pref = bp_constant(2, 2) / (std::tgamma(4.0) * 2 * std::pow(std::numbers::pi, 2));
  return pref * std::pow(two_pi, 3) * mean;
}

}  // namespace

TEST_CASE("radius_for_lambda inverts the threshold") {
  for (int d : {2, 3}) {
    for (int k = 1; k <= d; ++k) {
      const double n = 2e4, l = 0.7;
      const double r = radius_for_lambda(n, d, k, l);
      CHECK(lambda_of(n, d, r) == doctest::Approx(std::log(n) + (k - 1) * std::log(std::log(n)) + l));
      CHECK(delta_kn(n, d, k, r) == doctest::Approx(std::exp(-l)));
    }
  }
  CHECK_THROWS_AS(radius_for_lambda(1.0, 2, 1, 0.0), Error);
  try {
    radius_for_lambda(100, 2, 1, 1e3);
    FAIL("expected radius_exceeds_rmax");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::radius_exceeds_rmax);
  }
}

TEST_CASE("closed-form constants") {
  CHECK(D1_closed_form(2) == 2.0);
  CHECK(D1_closed_form(3) == 4.0);
  CHECK(sphere_area(1) == 2.0);
  CHECK(sphere_area(2) == doctest::Approx(2 * std::numbers::pi));
  CHECK(sphere_area(3) == doctest::Approx(4 * std::numbers::pi));
  CHECK(grassmannian_volume(3, 1) == doctest::Approx(3 * unit_ball_volume(3) / 2));
  CHECK(grassmannian_volume(2, 2) == doctest::Approx(1.0));
}

TEST_CASE("the k = 1 estimator reproduces 2^(d-1)") {
  for (int d : {2, 3}) {
    const DkEstimate e = estimate_Dk(d, 1, 200000, 4);
    CHECK(std::abs(e.mean - D1_closed_form(d)) < 4 * e.std_error);
  }
}

TEST_CASE("D_2 in the plane agrees with quadrature") {
  const double q = d2_plane_by_quadrature();
  const DkEstimate e = estimate_Dk(2, 2, 400000, 8);
  CHECK(std::abs(e.mean - q) < 4 * e.std_error);
  CHECK(e.std_error < 0.01);
}

TEST_CASE("estimator is deterministic and independent of worker count") {
  const DkEstimate a = estimate_Dk(3, 2, 100000, 5, 1);
  const DkEstimate b = estimate_Dk(3, 2, 100000, 5, 3);
  const DkEstimate s = estimate_Dk_serial(3, 2, 100000, 5);
  CHECK(a.mean == b.mean);
  CHECK(a.mean == s.mean);
  CHECK(a.std_error == s.std_error);
  CHECK(a.samples == 100000);
  CHECK(estimate_Dk(3, 2, 100000, 6).mean != a.mean);
  CHECK_THROWS_AS(estimate_Dk(2, 0, 10, 1), Error);
  CHECK_THROWS_AS(estimate_Dk(2, 3, 10, 1), Error);
}

TEST_CASE("exact mean") {
  const double n = 5000, D = 2.0;
  const double r = radius_for_lambda(n, 2, 1, 0.0);
  const double L = lambda_of(n, 2, r), Lmax = lambda_of(n, 2, kDefaultRmax);
  CHECK(exact_mean_F(n, 2, 1, r, kDefaultRmax, D) == doctest::Approx(D * n * (std::exp(-L) - std::exp(-Lmax))));
  CHECK(exact_mean_F(n, 2, 2, kDefaultRmax, kDefaultRmax, 1.0) == 0.0);
  // k = 2 carries the (1 + Lambda) factor
  CHECK(exact_mean_F(n, 2, 2, r, kDefaultRmax, 1.0) ==
        doctest::Approx(n * (std::exp(-L) * (1 + L) - std::exp(-Lmax) * (1 + Lmax))));
}

TEST_CASE("limiting probabilities") {
  CHECK(limit_prob_Hk(2, 2, 0.0, 1.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(limit_prob_Hk(2, 1, 0.0, 1.0) == doctest::Approx(2 * std::exp(-1.0)));
  CHECK(limit_prob_Hk(3, 1, 50.0, 4.0) == doctest::Approx(1.0));
}

TEST_CASE("torus and sphere integral identities hold at small sample sizes") {
  for (auto [d, k] : {std::pair{2, 1}, {2, 2}, {3, 2}}) {
    const BpCheck t = verify_bp_torus(d, k, 0.1, 300000, 3);
    CHECK(t.rel_error < 0.02);
  }
  for (int k : {2, 3}) {
    const BpCheck s = verify_bp_sphere(k, 300000, 3);
    CHECK(s.rel_error < 0.02);
    const BpCheck one = verify_bp_sphere(k, 300000, 3, 0.0, BpTestFunction::one);
    CHECK(one.rel_error < 0.02);
  }
  const BpCheck z = verify_bp_sphere(2, 1000, 1, 0.5, BpTestFunction::zero);
  CHECK(z.lhs == 0.0);
  CHECK(z.rel_error == 0.0);
  CHECK_THROWS_AS(verify_bp_torus(2, 1, 0.2, 10, 1), Error);
}

TEST_CASE("center norm distribution") {
  const std::vector<double> alphas{0.1, 0.5, 0.9, 1.0};
  const auto cdf = center_norm_cdf(2, alphas, 100000, 2);
  for (std::size_t i = 1; i < cdf.size(); ++i) CHECK(cdf[i] >= cdf[i - 1]);
  CHECK(cdf.back() == doctest::Approx(1.0));
}
