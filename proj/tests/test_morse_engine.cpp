#include "oracles.hpp"
#include "tml/morse_engine.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace tml;

namespace {

// Critical iff the circumcenter is inside and no other point is in the open
// circumball, checked by a scan over all points.
bool brute_critical(const TorusPointCloud& c, std::span<const std::uint32_t> ids) {
  if (ids.size() == 1) return true;
  const auto pts = lift_simplex(c, ids);
  const auto cs = try_circumsphere(pts);
  if (!cs) return false;
  for (int i = 0; i < cs->barycentric.size(); ++i) {
    if (!(cs->barycentric[i] > 0.0)) return false;
  }
  const Vec center = c.point_vec(ids[0]) + cs->center;
  for (std::uint32_t q = 0; q < c.size(); ++q) {
    if (std::find(ids.begin(), ids.end(), q) != ids.end()) continue;
    if (minimal_image(center, c.point_vec(q)).norm() < cs->radius) return false;
  }
  return true;
}

// Distance from p to the intersection of balls, by a raster of the plane.
double raster_distance(const Vec& p, const std::vector<Vec>& centers, double r, int m = 800) {
  double best = INFINITY;
  const Vec& o = centers[0];
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      Vec x(2);
      x << o[0] - r + 2 * r * i / m, o[1] - r + 2 * r * j / m;
      bool in = true;
      for (const Vec& c : centers) in = in && (x - c).norm() <= r;
      if (in) best = std::min(best, (x - p).norm());
    }
  }
  return best;
}

struct Pipeline {
  TorusPointCloud cloud;
  Filtration f;
  std::vector<CriticalFace> cr;
  Persistence pers;
};

Pipeline run(double n, int d, std::uint64_t seed, bool full = false) {
  Pipeline p;
  p.cloud = sample(n, d, seed);
  p.f = full ? build_filtration(p.cloud, d + 1, kDefaultRmax) : build_delaunay_cech_filtration(p.cloud, kDefaultRmax);
  p.cr = detect_critical_faces(p.f, p.cloud);
  p.pers = reduce_persistence(p.f);
  assign_signs(p.cr, p.pers);
  return p;
}

}  // namespace

TEST_CASE("critical faces match a direct check of every simplex") {
  const Pipeline p = run(150, 2, 3, true);
  std::set<std::uint32_t> got;
  for (const CriticalFace& c : p.cr) got.insert(c.simplex);
  for (std::uint32_t i = 0; i < p.f.size(); ++i) {
    if (p.f[i].dim > 2) continue;
    CHECK(brute_critical(p.cloud, p.f[i].vertices()) == (got.count(i) == 1));
  }
  for (const CriticalFace& c : p.cr) {
    CHECK(c.rho == p.f[c.simplex].value);
    if (c.dim == 1) CHECK(c.phi == doctest::Approx(1.0));
    if (c.dim >= 2) CHECK((c.phi > 0.0 && c.phi < 1.0));
  }
}

TEST_CASE("persistence Betti numbers equal rank computations on every prefix") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Pipeline p = run(25, 2, seed, true);
    for (std::size_t m = 0; m <= p.f.size(); ++m) {
      CHECK(betti_numbers_prefix(p.f, p.pers, m) == oracle::betti_by_rank(p.f, m));
    }
  }
}

TEST_CASE("covered torus: Euler sum, sign bookkeeping and Betti numbers") {
  for (int d : {2, 3}) {
    const Pipeline p = run(3000, d, 9);
    REQUIRE(is_covered(p.f, p.pers));
    CHECK(euler_alternating_sum(p.cr, true) == 0);
    const FaceCounts fc = classify_and_count(p.cr, -1.0);
    const std::int64_t binom[4][4] = {{1}, {1, 1}, {1, 2, 1}, {1, 3, 3, 1}};
    for (int k = 0; k <= d; ++k) {
      CHECK(fc.positive[static_cast<std::size_t>(k)] - fc.negative[static_cast<std::size_t>(k + 1)] == binom[d][k]);
      CHECK(fc.total[static_cast<std::size_t>(k)] ==
            fc.positive[static_cast<std::size_t>(k)] + fc.negative[static_cast<std::size_t>(k)]);
    }
    CHECK(fc.positive[static_cast<std::size_t>(d)] == 1);
    const auto b = betti_numbers(p.f, p.pers, kDefaultRmax);
    for (int k = 0; k <= d; ++k) CHECK(b[static_cast<std::size_t>(k)] == binom[d][k]);
  }
}

TEST_CASE("counters are right-continuous step functions") {
  const Pipeline p = run(2000, 2, 4);
  const std::vector<double> grid{0.0, 0.01, 0.02, 0.03, 0.05, 0.125};
  const auto counts = classify_and_count(p.cr, grid);
  REQUIRE(counts.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const FaceCounts one = classify_and_count(p.cr, grid[i]);
    CHECK(one.total == counts[i].total);
    if (i > 0) {
      for (int k = 0; k <= 2; ++k) CHECK(counts[i].total[static_cast<std::size_t>(k)] <= counts[i - 1].total[static_cast<std::size_t>(k)]);
    }
  }
  CHECK(counts.back().total[1] == 0);
  // exactly at a critical radius the face is no longer counted
  const CriticalFace& any = *std::find_if(p.cr.begin(), p.cr.end(), [](const CriticalFace& c) { return c.dim == 2; });
  CHECK(classify_and_count(p.cr, any.rho).total[2] + 1 ==
        classify_and_count(p.cr, std::nextafter(any.rho, 0.0)).total[2]);
  for (const FaceCounts& fc : counts) CHECK(fc.positive[2] <= 1);
}

TEST_CASE("hitting times on a covered cloud") {
  const Pipeline p = run(3000, 2, 12);
  const HittingTimes ht = hitting_times(p.f, p.pers, p.cr, p.cloud);
  double last_d = 0;
  for (const CriticalFace& c : p.cr) if (c.dim == 2) last_d = std::max(last_d, c.rho);
  CHECK(ht.coverage_radius == last_d);
  CHECK(ht.T[2] == last_d);
  CHECK(ht.T[1] <= ht.T[2]);
  CHECK(ht.T[0] <= ht.T[1] + 1e-3);
  for (int k = 1; k <= 2; ++k) CHECK(ht.T_iso[static_cast<std::size_t>(k)] > 0.0);
  // beta_k stays at its final value from T_k on
  const auto b = betti_numbers(p.f, p.pers, ht.T[1]);
  CHECK(b[1] == 2);
  CHECK(betti_numbers(p.f, p.pers, std::nextafter(ht.T[1], 0.0))[1] != 2);
}

TEST_CASE("sparse clouds are not covered") {
  const Pipeline p = run(30, 2, 1, true);
  CHECK_FALSE(is_covered(p.f, p.pers));
  CHECK_THROWS_AS(hitting_times(p.f, p.pers, p.cr, p.cloud), Error);
  CHECK_THROWS_AS(euler_alternating_sum(p.cr, false), Error);
}

TEST_CASE("a point on the sphere of a critical edge is rejected") {
  // C sits on the circle with diameter AB
  const double t = 0.3;
  const std::vector<double> xy = {0.5, 0.5, 0.52, 0.5, 0.51 + 0.01 * std::cos(t), 0.5 + 0.01 * std::sin(t)};
  const TorusPointCloud c(2, xy, 3.0, 0);
  const Filtration f = build_filtration(c, 1, kDefaultRmax);
  try {
    detect_critical_faces(f, c);
    FAIL("expected ambiguous_boundary");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ambiguous_boundary);
  }
  // nudged outside, the edge is critical again
  const std::vector<double> out = {0.5, 0.5, 0.52, 0.5, 0.51 + 0.0101 * std::cos(t), 0.5 + 0.0101 * std::sin(t)};
  const TorusPointCloud c2(2, out, 3.0, 0);
  CHECK(detect_critical_faces(build_filtration(c2, 1, kDefaultRmax), c2).size() == 6);
}

TEST_CASE("first coface value equals the minimum over every extra point") {
  const Pipeline p = run(400, 2, 17);
  int checked = 0;
  for (const CriticalFace& c : p.cr) {
    if (c.dim != 1 || checked > 30) continue;
    ++checked;
    const auto v = p.f[c.simplex].vertices();
    double best = INFINITY;
    for (std::uint32_t q = 0; q < p.cloud.size(); ++q) {
      if (q == v[0] || q == v[1]) continue;
      if (minimal_image(p.cloud.point_vec(v[0]), p.cloud.point_vec(q)).norm() > 0.3) continue;
      std::vector<std::uint32_t> ids{v[0], v[1], q};
      std::sort(ids.begin(), ids.end());
      best = std::min(best, cech_value(p.cloud, ids));
    }
    CHECK(first_coface_value(p.f, c.simplex, p.cloud, 0.125) == (best <= 0.125 ? best : INFINITY));
  }
}

TEST_CASE("distance to an intersection of discs matches a raster") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Vec> centers;
    for (int i = 0; i < 2 + rep % 2; ++i) {
      Vec c(2);
      c << 0.3 * rng.uniform(), 0.3 * rng.uniform();
      centers.push_back(c);
    }
    const double r = 0.3;
    Vec p(2);
    p << -0.5 + 1.3 * rng.uniform(), -0.5 + 1.3 * rng.uniform();
    const double want = raster_distance(p, centers, r);
    if (!std::isfinite(want)) continue;
    CHECK(std::abs(distance_to_ball_intersection(p, centers, r) - want) < 2e-3);
  }
}

TEST_CASE("isolation of a critical pair matches a raster of the neighbourhood") {
  const Pipeline p = run(2000, 2, 23);
  int agree = 0, checked = 0;
  for (const CriticalFace& neg : p.cr) {
    if (neg.dim != 2 || neg.sign != Sign::negative || checked >= 60) continue;
    const auto face = std::lower_bound(p.cr.begin(), p.cr.end(), neg.nearest_facet,
                                       [](const CriticalFace& c, std::int64_t s) { return c.simplex < s; });
    if (face == p.cr.end() || face->simplex != neg.nearest_facet) continue;
    ++checked;
    const double rho = neg.rho;
    const auto fv = p.f[face->simplex].vertices();
    const auto xv = p.f[neg.simplex].vertices();
    const Vec anchor = p.cloud.point_vec(fv[0]);
    const auto lifted = lift_simplex(p.cloud, fv);
    const std::vector<Vec> centers(lifted.begin(), lifted.end());
    // isolated iff no other point comes within rho of the lens
    bool raster_iso = true;
    double margin = INFINITY;
    for (std::uint32_t q = 0; q < p.cloud.size(); ++q) {
      if (std::find(xv.begin(), xv.end(), q) != xv.end()) continue;
      const Vec off = minimal_image(anchor, p.cloud.point_vec(q));
      if (off.norm() > 3 * rho) continue;
      const double dist = raster_distance(off, centers, rho, 300);
      margin = std::min(margin, std::abs(dist - rho));
      if (dist < rho) raster_iso = false;
    }
    if (margin < 0.02 * rho) continue;  // too close for the raster to decide
    agree += isolation_check(*face, neg, p.f, p.cloud) == raster_iso ? 1 : 0;
    CHECK(isolation_check(*face, neg, p.f, p.cloud) == raster_iso);
  }
  CHECK(agree > 0);
}

TEST_CASE("pairing fraction is a fraction") {
  const Pipeline p = run(3000, 3, 2);
  const PairingFraction pf = pairing_fraction(p.cr, 1, 0.05);
  CHECK(pf.paired <= pf.negatives);
  CHECK((pf.fraction >= 0.0 && pf.fraction <= 1.0));
  const PairingFraction none = pairing_fraction(p.cr, 1, 0.124);
  if (none.negatives == 0) CHECK(none.fraction == 1.0);
}

TEST_CASE("critical face and persistence CSV layouts") {
  const Pipeline p = run(500, 2, 6);
  std::stringstream a, b;
  write_critical_faces_csv(p.cr, 2, a);
  write_persistence_csv(p.f, p.pers, b);
  std::string h;
  std::getline(a, h);
  CHECK(h == "dim,rho,phi,sign,nearest_facet_rho,c0,c1");
  std::getline(b, h);
  CHECK(h == "k,birth,death");
  int inf = 0;
  for (std::string line; std::getline(b, line);) inf += line.ends_with(",inf") ? 1 : 0;
  CHECK(inf == (is_covered(p.f, p.pers) ? 4 : inf));
}
