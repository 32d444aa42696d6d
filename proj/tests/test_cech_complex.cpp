#include "tml/cech_complex.hpp"
#include "tml/delaunay.hpp"
#include "tml/morse_engine.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace tml;

namespace {

// Smallest enclosing ball radius of the lifted subset, by Welzl.
double brute_value(const TorusPointCloud& c, const std::vector<std::uint32_t>& ids) {
  std::vector<Vec> pts;
  const Vec a = c.point_vec(ids[0]);
  for (std::uint32_t id : ids) pts.push_back(minimal_image(a, c.point_vec(id)));
  return min_enclosing_ball(pts).radius;
}

// Every subset of size <= max_dim + 1 whose enclosing ball is at most r_max.
std::map<std::vector<std::uint32_t>, double> brute_cech(const TorusPointCloud& c, int max_dim, double r_max) {
  std::map<std::vector<std::uint32_t>, double> out;
  const std::uint32_t n = static_cast<std::uint32_t>(c.size());
  std::vector<std::uint32_t> cur;
  auto rec = [&](auto&& self, std::uint32_t start) -> void {
    if (!cur.empty()) {
      // all pairs must be close for the subset to be small
      const double v = brute_value(c, cur);
      if (v > r_max) return;
      out[cur] = v;
      if (static_cast<int>(cur.size()) == max_dim + 1) return;
    }
    for (std::uint32_t i = start; i < n; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

bool raster_common_point(const std::vector<Vec>& centers, double r, int m = 500) {
  Vec lo = centers[0], hi = centers[0];
  for (const Vec& c : centers) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      Vec x(2);
      x << lo[0] - r + (hi[0] - lo[0] + 2 * r) * i / m, lo[1] - r + (hi[1] - lo[1] + 2 * r) * j / m;
      bool in = true;
      for (const Vec& c : centers) in = in && (x - c).norm() <= r;
      if (in) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("full Cech filtration equals a brute-force subset enumeration") {
  for (int d : {2, 3}) {
    const TorusPointCloud c = sample(d == 2 ? 120 : 80, d, 100 + static_cast<std::uint64_t>(d));
    const Filtration f = build_filtration(c, d, kDefaultRmax);
    const auto want = brute_cech(c, d, kDefaultRmax);
    REQUIRE(f.size() == want.size());
    for (const FiltrationSimplex& s : f.simplices()) {
      const std::vector<std::uint32_t> ids(s.vertices().begin(), s.vertices().end());
      auto it = want.find(ids);
      REQUIRE(it != want.end());
      CHECK(s.value == doctest::Approx(it->second).epsilon(1e-12));
    }
  }
}

TEST_CASE("points chained around the torus span no simplex") {
  // three points a third apart: pairwise close, no common lift
  const TorusPointCloud c(2, {0.0, 0.5, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.5}, 3, 0, 0.2);
  const std::uint32_t ids[] = {0, 1, 2};
  CHECK(std::isinf(cech_value(c, ids)));
  const Filtration f = build_filtration(c, 2, 0.2);
  CHECK(f.size() == 6);
}

TEST_CASE("filtration order is facet monotone") {
  const TorusPointCloud c = sample(300, 2, 4);
  for (const Filtration& f : {build_filtration(c, 3, 0.1), build_delaunay_cech_filtration(c, 0.125)}) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      for (std::uint32_t b : f.boundary(i)) {
        CHECK(b < i);
        CHECK(f[b].value <= f[i].value);
      }
      if (i > 0) CHECK(f[i - 1].value <= f[i].value);
    }
  }
}

TEST_CASE("cech_value agrees with Welzl on random subsets") {
  const TorusPointCloud c = sample(400, 3, 21);
  Rng rng(2);
  for (int rep = 0; rep < 300; ++rep) {
    const std::uint32_t a = static_cast<std::uint32_t>(rng.uniform() * static_cast<double>(c.size()));
    auto near = c.points_in_ball(c.torus_point(a), 0.15);
    if (near.size() < 5) continue;
    std::vector<std::uint32_t> ids{near.begin(), near.begin() + 2 + rep % 4};
    std::sort(ids.begin(), ids.end());
    CHECK(cech_value(c, ids) == doctest::Approx(brute_value(c, ids)).epsilon(1e-12));
  }
}

TEST_CASE("nerve membership matches a rasterised ball intersection") {
  const TorusPointCloud c = sample(200, 2, 33);
  const Filtration f = build_filtration(c, 2, 0.125);
  int checked = 0;
  for (const FiltrationSimplex& s : f.simplices()) {
    if (s.dim != 2 || checked >= 40) continue;
    ++checked;
    const auto pts = lift_simplex(c, s.vertices());
    const std::vector<Vec> centers(pts.begin(), pts.end());
    CHECK(raster_common_point(centers, s.value * 1.02));
    CHECK_FALSE(raster_common_point(centers, s.value * 0.98));
  }
  CHECK(checked == 40);
}

TEST_CASE("complex_at returns prefixes and rejects bad radii") {
  const TorusPointCloud c = sample(100, 2, 5);
  const Filtration f = build_filtration(c, 2, 0.1);
  const FiltrationPrefix p = complex_at(f, 0.05);
  for (const FiltrationSimplex& s : p.simplices()) CHECK(s.value <= 0.05);
  if (p.end < f.size()) CHECK(f[p.end].value > 0.05);
  CHECK(complex_at(f, 0.0).size() == c.size());
  CHECK_THROWS_AS(complex_at(f, -0.01), Error);
  CHECK_THROWS_AS(complex_at(f, 0.11), Error);
}

TEST_CASE("periodic Delaunay cells tile the torus and have empty circumballs") {
  for (int d : {2, 3}) {
    const TorusPointCloud c = sample(d == 2 ? 300 : 200, d, 70 + static_cast<std::uint64_t>(d));
    const auto cells = periodic_delaunay(c);
    double vol = 0;
    for (const DelaunayCell& cell : cells) {
      std::vector<std::uint32_t> ids(cell.ids.begin(), cell.ids.begin() + d + 1);
      const auto pts = lift_simplex(c, ids);
      vol += simplex_volume(pts);
      const Circumsphere cs = circumsphere(pts);
      CHECK(cs.radius == doctest::Approx(cell.circumradius));
      const Vec center = c.point_vec(ids[0]) + cs.center;
      for (std::uint32_t q = 0; q < c.size(); ++q) {
        if (std::find(ids.begin(), ids.end(), q) != ids.end()) continue;
        CHECK(minimal_image(center, c.point_vec(q)).norm() > cs.radius);
      }
    }
    CHECK(vol == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("Delaunay-Cech and full Cech share critical faces") {
  for (int d : {2, 3}) {
    const TorusPointCloud c = sample(d == 2 ? 300 : 120, d, 50 + static_cast<std::uint64_t>(d));
    const double r = d == 2 ? 0.125 : 0.1;
    const Filtration full = build_filtration(c, d + 1, r);
    const Filtration del = build_delaunay_cech_filtration(c, r);
    auto crit = [&](const Filtration& f) {
      std::set<std::pair<std::vector<std::uint32_t>, double>> out;
      for (const CriticalFace& cf : detect_critical_faces(f, c)) {
        const auto v = f[cf.simplex].vertices();
        out.insert({std::vector<std::uint32_t>(v.begin(), v.end()), cf.rho});
      }
      return out;
    };
    CHECK(crit(full) == crit(del));
  }
}

TEST_CASE("filtration CSV layout") {
  const TorusPointCloud c = sample(20, 2, 1);
  const Filtration f = build_filtration(c, 2, 0.1);
  std::stringstream ss;
  write_filtration_csv(f, ss);
  std::string header, first;
  std::getline(ss, header);
  std::getline(ss, first);
  CHECK(header == "dim,value,v0,v1,v2");
  CHECK(first.rfind("0,0,", 0) == 0);
}

TEST_CASE("a filtration with a missing facet is refused") {
  FiltrationSimplex a, b, e;
  a.v[0] = 0;
  b.v[0] = 1;
  e.dim = 1;
  e.v[0] = 0;
  e.v[1] = 2;
  e.value = 0.1;
  CHECK_THROWS_AS(Filtration(2, 1, 0.125, {a, b, e}), Error);
}
