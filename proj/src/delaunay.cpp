#include "tml/delaunay.hpp"

#include "tml/cech_complex.hpp"
#include "tml/torus_geom.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_map>
#include <unordered_set>

namespace tml {

namespace {

constexpr double kQueryLimit = 0.49;

struct Cell {
  std::array<std::uint32_t, kMaxDim + 1> ids{};
  std::array<Vec, kMaxDim + 1> pts;
  Vec center;
  double radius = 0.0;
};

struct Hit {
  std::uint32_t id = 0;
  Vec p;
  double t = 0.0;
};

// Among the spheres through G centred at c + t u (t >= 0), finds the first
// one that meets another point. c is equidistant from G at squared
// distance r2, and the sphere at t = 0 is empty. A point p with a_p > 0 is
// inside the sphere at t iff t > t_p, so scanning the sphere of the best
// candidate certifies it.
Hit grow(const TorusPointCloud& cloud, std::span<const std::uint32_t> g_ids, const Vec& g0, const Vec& c,
         double r2, const Vec& u, double rq) {
  const double drift = u.dot(c - g0);
  Vec q = c;
  Hit hit;
  double best = std::numeric_limits<double>::infinity();
  double second = best;
  for (;;) {
    cloud.for_each_in_ball(q, rq, [&](std::uint32_t id, const Vec& off) {
      if (std::find(g_ids.begin(), g_ids.end(), id) != g_ids.end()) return;
      const Vec p = q + off;
      const double a = u.dot(p - g0);
      if (!(a > 1e-14)) return;
      const double t = ((p - c).squaredNorm() - r2) / (2.0 * a);
      if (t < best) {
        if (id != hit.id || !std::isfinite(best)) second = best;
        best = t;
        hit.id = id;
        hit.p = p;
      } else if (t < second && id != hit.id) {
        second = t;
      }
    });
    if (!std::isfinite(best)) {
      if (rq >= kQueryLimit) throw Error(ErrorKind::not_covered, "no point beyond a facet");
      rq = std::min(2.0 * rq, kQueryLimit);
      continue;
    }
    const double rho = std::sqrt(std::max(0.0, r2 + 2.0 * best * drift + best * best));
    const Vec cert = c + best * u;
    if ((cert - q).norm() + rho <= rq) break;
    if (rho > 2.0 * rq) {
      // A flat candidate; look wider before trusting its huge ball.
      if (rq >= kQueryLimit) throw Error(ErrorKind::not_covered, "empty ball exceeds the lift range");
      rq = std::min(2.0 * rq, kQueryLimit);
      continue;
    }
    q = cert;
    rq = rho * (1.0 + 1e-9) + 1e-15;
  }
  const double rho = std::sqrt(std::max(0.0, r2 + 2.0 * best * drift + best * best));
  if (second - best <= 1e-11 * std::max(rho, 1e-300)) {
    throw Error(ErrorKind::degenerate_configuration, "cospherical points in the Delaunay search");
  }
  hit.t = best;
  return hit;
}

// Unit vector orthogonal to aff(pts) (pts.size() <= d), turned away from
// `away` when given.
Vec normal_of(std::span<const Vec> pts, int d, const Vec* away) {
  std::array<Vec, kMaxDim> basis;
  int nb = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    Vec e = pts[i] - pts[0];
    for (int j = 0; j < nb; ++j) e -= basis[j].dot(e) * basis[j];
    const double len = e.norm();
    if (!(len > 0.0)) throw Error(ErrorKind::degenerate_configuration, "repeated point");
    basis[nb++] = e / len;
  }
  Vec best;
  if (away) {
    best = *away - pts[0];
    for (int j = 0; j < nb; ++j) best -= basis[j].dot(best) * basis[j];
    best = -best;
  } else {
    double best_len = -1.0;
    for (int a = 0; a < d; ++a) {
      Vec e = Vec::Zero(d);
      e[a] = 1.0;
      for (int j = 0; j < nb; ++j) e -= basis[j].dot(e) * basis[j];
      if (e.norm() > best_len) {
        best_len = e.norm();
        best = e;
      }
    }
  }
  const double len = best.norm();
  if (!(len > 0.0)) throw Error(ErrorKind::degenerate_configuration, "flat simplex");
  return best / len;
}

SimplexKey sorted_key(std::span<const std::uint32_t> ids) {
  std::array<std::uint32_t, kMaxVertices> tmp{};
  std::copy(ids.begin(), ids.end(), tmp.begin());
  std::sort(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(ids.size()));
  return make_key(std::span<const std::uint32_t>(tmp.data(), ids.size()));
}

void reframe(Cell& c, int d) {
  Vec shift(d);
  for (int a = 0; a < d; ++a) shift[a] = std::floor(c.center[a]);
  c.center -= shift;
  for (int i = 0; i <= d; ++i) c.pts[i] -= shift;
}

}  // namespace

std::vector<DelaunayCell> periodic_delaunay(const TorusPointCloud& cloud, double max_circumradius) {
  const int d = cloud.dim();
  const std::size_t n = cloud.size();
  if (n < static_cast<std::size_t>(d + 1)) throw Error(ErrorKind::not_covered, "too few points");
  if (!(max_circumradius < 0.25)) {
    throw Error(ErrorKind::parameter_out_of_range, "circumradius limit must stay below 1/4");
  }
  const double spacing = std::pow(1.0 / static_cast<double>(n), 1.0 / d);

  // First cell: grow an empty ball from point 0.
  Cell first;
  {
    std::array<std::uint32_t, kMaxDim + 1> ids{};
    std::array<Vec, kMaxDim + 1> pts;
    ids[0] = 0;
    pts[0] = cloud.point_vec(0);
    Vec c = pts[0];
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) {
      std::span<const Vec> g(pts.data(), static_cast<std::size_t>(k + 1));
      const Vec u = normal_of(g, d, nullptr);
      Hit h = grow(cloud, std::span<const std::uint32_t>(ids.data(), k + 1), pts[0], c, r2, u,
                   std::sqrt(r2) + spacing);
      ids[k + 1] = h.id;
      pts[k + 1] = h.p;
      c = c + h.t * u;
      r2 = (c - pts[0]).squaredNorm();
    }
    first.ids = ids;
    first.pts = pts;
    auto cs = circumsphere(std::span<const Vec>(pts.data(), static_cast<std::size_t>(d + 1)));
    first.center = cs.center;
    first.radius = cs.radius;
  }

  std::vector<Cell> cells;
  std::unordered_map<SimplexKey, std::uint32_t, SimplexKeyHash> by_key;
  std::unordered_set<SimplexKey, SimplexKeyHash> walked;
  auto add = [&](Cell c) {
    if (c.radius >= max_circumradius) throw Error(ErrorKind::not_covered, "Delaunay ball too large");
    reframe(c, d);
    const SimplexKey key = sorted_key(std::span<const std::uint32_t>(c.ids.data(), d + 1));
    auto [it, fresh] = by_key.emplace(key, static_cast<std::uint32_t>(cells.size()));
    if (fresh) cells.push_back(std::move(c));
  };
  add(first);

  std::array<Vec, kMaxDim> facet;
  std::array<std::uint32_t, kMaxDim> facet_ids{};
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (int skip = 0; skip <= d; ++skip) {
      const Cell& cell = cells[ci];
      int m = 0;
      for (int j = 0; j <= d; ++j) {
        if (j == skip) continue;
        facet[m] = cell.pts[j];
        facet_ids[m++] = cell.ids[j];
      }
      const SimplexKey fkey = sorted_key(std::span<const std::uint32_t>(facet_ids.data(), d));
      if (!walked.insert(fkey).second) continue;
      const Vec u = normal_of(std::span<const Vec>(facet.data(), static_cast<std::size_t>(d)), d, &cell.pts[skip]);
      const Vec center = cell.center;
      const double r = cell.radius;
      Hit h = grow(cloud, std::span<const std::uint32_t>(facet_ids.data(), d), facet[0], center, r * r, u,
                   r + 0.5 * spacing);
      Cell next;
      for (int j = 0; j < d; ++j) {
        next.ids[j] = facet_ids[j];
        next.pts[j] = facet[j];
      }
      next.ids[d] = h.id;
      next.pts[d] = h.p;
      next.center = center + h.t * u;
      next.radius = (next.center - facet[0]).norm();
      add(std::move(next));
    }
  }

  // The cells must tile the torus exactly once.
  double volume = 0.0;
  for (const Cell& c : cells) volume += simplex_volume(std::span<const Vec>(c.pts.data(), static_cast<std::size_t>(d + 1)));
  if (std::abs(volume - 1.0) > 1e-9) {
    throw Error(ErrorKind::degenerate_configuration, "periodic Delaunay cells do not tile the torus");
  }

  std::vector<DelaunayCell> out;
  out.reserve(cells.size());
  for (const Cell& c : cells) {
    DelaunayCell dc;
    dc.ids = c.ids;
    std::sort(dc.ids.begin(), dc.ids.begin() + d + 1);
    dc.circumradius = c.radius;
    out.push_back(dc);
  }
  std::sort(out.begin(), out.end(), [](const DelaunayCell& a, const DelaunayCell& b) { return a.ids < b.ids; });
  return out;
}

}  // namespace tml
