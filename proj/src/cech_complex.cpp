#include "tml/cech_complex.hpp"

#include "tml/delaunay.hpp"
#include "tml/torus_geom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <ostream>
#include <unordered_set>

namespace tml {

namespace {

constexpr std::uint32_t kUnused = std::numeric_limits<std::uint32_t>::max();

bool filtration_less(const FiltrationSimplex& a, const FiltrationSimplex& b) {
  if (a.value != b.value) return a.value < b.value;
  if (a.dim != b.dim) return a.dim < b.dim;
  return std::lexicographical_compare(a.v.begin(), a.v.begin() + a.dim + 1, b.v.begin(), b.v.begin() + b.dim + 1);
}

}  // namespace

SimplexKey make_key(std::span<const std::uint32_t> sorted_ids) {
  SimplexKey k;
  k.fill(kUnused);
  std::copy(sorted_ids.begin(), sorted_ids.end(), k.begin());
  return k;
}

std::size_t SimplexKeyHash::operator()(const SimplexKey& k) const noexcept {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint32_t x : k) {
    if (x == kUnused) break;
    h = mix_seed(h ^ x);
  }
  return static_cast<std::size_t>(h);
}

Filtration::Filtration(int ambient_dim, int max_dim, double r_max, std::vector<FiltrationSimplex> simplices)
    : ambient_dim_(ambient_dim), max_dim_(max_dim), r_max_(r_max), simplices_(std::move(simplices)) {
  std::sort(simplices_.begin(), simplices_.end(), [](const FiltrationSimplex& a, const FiltrationSimplex& b) {
    if (a.dim != b.dim) return a.dim < b.dim;
    return std::lexicographical_compare(a.v.begin(), a.v.begin() + a.dim + 1, b.v.begin(),
                                        b.v.begin() + b.dim + 1);
  });
  index_.reserve(simplices_.size() * 2);
  for (std::size_t i = 0; i < simplices_.size(); ++i) {
    index_.emplace(make_key(simplices_[i].vertices()), static_cast<std::uint32_t>(i));
  }
  // Rounding must never put a simplex before one of its facets.
  std::array<std::uint32_t, kMaxVertices> facet{};
  for (FiltrationSimplex& s : simplices_) {
    if (s.dim == 0) continue;
    for (int skip = 0; skip <= s.dim; ++skip) {
      int m = 0;
      for (int j = 0; j <= s.dim; ++j) {
        if (j != skip) facet[m++] = s.v[j];
      }
      auto it = index_.find(make_key(std::span<const std::uint32_t>(facet.data(), m)));
      if (it == index_.end()) throw Error(ErrorKind::parameter_out_of_range, "filtration is missing a facet");
      s.value = std::max(s.value, simplices_[it->second].value);
    }
  }
  std::sort(simplices_.begin(), simplices_.end(), filtration_less);
  for (std::size_t i = 0; i < simplices_.size(); ++i) index_[make_key(simplices_[i].vertices())] = static_cast<std::uint32_t>(i);
}

std::optional<std::uint32_t> Filtration::find(std::span<const std::uint32_t> sorted_ids) const {
  auto it = index_.find(make_key(sorted_ids));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint32_t> Filtration::boundary(std::size_t i) const {
  const FiltrationSimplex& s = simplices_[i];
  std::vector<std::uint32_t> out;
  if (s.dim == 0) return out;
  out.reserve(static_cast<std::size_t>(s.dim + 1));
  std::array<std::uint32_t, kMaxVertices> facet{};
  for (int skip = 0; skip <= s.dim; ++skip) {
    int m = 0;
    for (int j = 0; j <= s.dim; ++j) {
      if (j != skip) facet[m++] = s.v[j];
    }
    auto pos = find(std::span<const std::uint32_t>(facet.data(), m));
    if (!pos) throw Error(ErrorKind::parameter_out_of_range, "filtration is missing a facet");
    out.push_back(*pos);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t Filtration::prefix_end(double r) const {
  auto it = std::upper_bound(simplices_.begin(), simplices_.end(), r,
                             [](double x, const FiltrationSimplex& s) { return x < s.value; });
  return static_cast<std::size_t>(it - simplices_.begin());
}

FiltrationPrefix complex_at(const Filtration& filtration, double r) {
  if (!(r >= 0.0 && r <= filtration.r_max())) {
    throw Error(ErrorKind::parameter_out_of_range, "radius outside [0, r_max]");
  }
  return FiltrationPrefix{&filtration, filtration.prefix_end(r)};
}

std::vector<Vec> lift_simplex(const TorusPointCloud& cloud, std::span<const std::uint32_t> ids) {
  std::vector<Vec> out;
  out.reserve(ids.size());
  auto anchor = cloud.point(ids[0]);
  for (std::uint32_t id : ids) out.push_back(minimal_image(anchor, cloud.point(id)));
  return out;
}

double cech_value(const TorusPointCloud& cloud, std::span<const std::uint32_t> ids) {
  const int m = static_cast<int>(ids.size());
  if (m <= 1) return 0.0;
  if (m > kMaxVertices) throw Error(ErrorKind::parameter_out_of_range, "too many vertices");
  // rel[a][i]: point i seen from point a.
  std::array<std::array<Vec, kMaxVertices>, kMaxVertices> rel;
  for (int a = 0; a < m; ++a) {
    for (int i = a; i < m; ++i) rel[a][i] = minimal_image(cloud.point(ids[a]), cloud.point(ids[i]));
  }
  // Points that only chain together around the torus have no common lift,
  // so their balls (radius < 1/4) never meet.
  for (int a = 1; a < m; ++a) {
    for (int i = a + 1; i < m; ++i) {
      if ((rel[0][i] - rel[0][a] - rel[a][i]).cwiseAbs().maxCoeff() > 1e-9) {
        return std::numeric_limits<double>::infinity();
      }
    }
  }
  // Subsets in increasing mask order: every proper subset comes first. The
  // ball of a subset is its circumball when the circumcenter lies in the
  // hull, and otherwise the largest ball among its facets.
  std::array<double, 1u << kMaxVertices> val{};
  std::array<Vec, kMaxVertices> sub;
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    if (std::popcount(mask) < 2) continue;
    const int a = std::countr_zero(mask);
    int c = 0;
    for (int i = a; i < m; ++i) {
      if (mask & (1u << i)) sub[c++] = rel[a][i];
    }
    auto cs = try_circumsphere(std::span<const Vec>(sub.data(), static_cast<std::size_t>(c)));
    if (cs && cs->barycentric.minCoeff() >= 0.0) {
      val[mask] = cs->radius;
      continue;
    }
    double v = 0.0;
    for (unsigned rest = mask; rest; rest &= rest - 1) v = std::max(v, val[mask & ~(rest & -rest)]);
    val[mask] = v;
  }
  return val[(1u << m) - 1];
}

namespace {

void expand(const TorusPointCloud& cloud, const std::vector<std::vector<std::uint32_t>>& up, int max_dim,
            double r_max, std::array<std::uint32_t, kMaxVertices>& cur, int len,
            const std::vector<std::uint32_t>& cand, std::vector<FiltrationSimplex>& out) {
  std::vector<std::uint32_t> next;
  for (std::size_t ci = 0; ci < cand.size(); ++ci) {
    const std::uint32_t c = cand[ci];
    cur[len] = c;
    std::span<const std::uint32_t> ids(cur.data(), static_cast<std::size_t>(len + 1));
    const double value = cech_value(cloud, ids);
    if (value > r_max) continue;
    FiltrationSimplex s;
    std::copy(ids.begin(), ids.end(), s.v.begin());
    s.dim = len;
    s.value = value;
    out.push_back(s);
    if (len < max_dim) {
      next.clear();
      const auto& nb = up[c];
      std::set_intersection(cand.begin() + static_cast<std::ptrdiff_t>(ci) + 1, cand.end(), nb.begin(), nb.end(),
                            std::back_inserter(next));
      if (!next.empty()) expand(cloud, up, max_dim, r_max, cur, len + 1, next, out);
    }
  }
}

}  // namespace

Filtration build_filtration(const TorusPointCloud& cloud, int max_dim, double r_max) {
  const int d = cloud.dim();
  if (max_dim < 0 || max_dim > d + 1) throw Error(ErrorKind::parameter_out_of_range, "max_dim must be in [0, d+1]");
  if (!(r_max > 0.0 && 2.0 * r_max < 0.5)) {
    throw Error(ErrorKind::lift_out_of_range, "r_max too large for unique lifts");
  }
  const std::size_t n = cloud.size();
  std::vector<std::vector<std::uint32_t>> up(n);
  for (std::uint32_t v = 0; v < n; ++v) {
    cloud.for_each_in_ball(cloud.point_vec(v), 2.0 * r_max, [&](std::uint32_t id, const Vec&) {
      if (id > v) up[v].push_back(id);
    });
    std::sort(up[v].begin(), up[v].end());
  }
  std::vector<FiltrationSimplex> simplices;
  std::array<std::uint32_t, kMaxVertices> cur{};
  for (std::uint32_t v = 0; v < n; ++v) {
    FiltrationSimplex s;
    s.v[0] = v;
    simplices.push_back(s);
    if (max_dim > 0 && !up[v].empty()) {
      cur[0] = v;
      expand(cloud, up, max_dim, r_max, cur, 1, up[v], simplices);
    }
  }
  return Filtration(d, max_dim, r_max, std::move(simplices));
}

Filtration build_filtration(const TorusPointCloud& cloud) {
  return build_filtration(cloud, cloud.dim() + 1, cloud.r_max());
}

Filtration build_delaunay_cech_filtration(const TorusPointCloud& cloud, double r_max) {
  const int d = cloud.dim();
  const auto cells = periodic_delaunay(cloud);
  // Faces grouped by dimension so every facet is valued before its cofaces.
  std::vector<std::vector<SimplexKey>> faces(static_cast<std::size_t>(d + 1));
  std::unordered_set<SimplexKey, SimplexKeyHash> seen;
  seen.reserve(cells.size() * (1u << (d + 1)));
  std::array<std::uint32_t, kMaxVertices> ids{};
  for (const DelaunayCell& cell : cells) {
    for (unsigned mask = 1; mask < (1u << (d + 1)); ++mask) {
      if (std::popcount(mask) < 2) continue;
      int m = 0;
      for (int i = 0; i <= d; ++i) {
        if (mask & (1u << i)) ids[m++] = cell.ids[i];
      }
      SimplexKey key = make_key(std::span<const std::uint32_t>(ids.data(), static_cast<std::size_t>(m)));
      if (seen.insert(key).second) faces[static_cast<std::size_t>(m - 1)].push_back(key);
    }
  }
  seen.clear();

  // The smallest enclosing ball of X is its circumball when the circumcenter
  // lies in conv(X), and otherwise the largest facet ball.
  std::unordered_map<SimplexKey, double, SimplexKeyHash> value;
  value.reserve(cells.size() * (1u << (d + 1)));
  std::vector<FiltrationSimplex> simplices;
  for (std::uint32_t v = 0; v < cloud.size(); ++v) {
    FiltrationSimplex s;
    s.v[0] = v;
    simplices.push_back(s);
    value.emplace(make_key(std::span<const std::uint32_t>(&v, 1)), 0.0);
  }
  std::array<std::uint32_t, kMaxVertices> facet{};
  for (int k = 1; k <= d; ++k) {
    for (const SimplexKey& key : faces[static_cast<std::size_t>(k)]) {
      std::span<const std::uint32_t> face(key.data(), static_cast<std::size_t>(k + 1));
      const auto lift = lift_simplex(cloud, face);
      auto cs = try_circumsphere(lift);
      if (!cs) throw Error(ErrorKind::degenerate_configuration, "flat Delaunay face");
      double val;
      if (cs->barycentric.minCoeff() >= 0.0) {
        val = cs->radius;
      } else {
        val = 0.0;
        for (int skip = 0; skip <= k; ++skip) {
          int m = 0;
          for (int j = 0; j <= k; ++j) {
            if (j != skip) facet[m++] = face[j];
          }
          val = std::max(val, value.at(make_key(std::span<const std::uint32_t>(facet.data(), m))));
        }
      }
      value.emplace(key, val);
      if (val > r_max) continue;
      FiltrationSimplex s;
      std::copy(face.begin(), face.end(), s.v.begin());
      s.dim = k;
      s.value = val;
      simplices.push_back(s);
    }
  }
  return Filtration(d, d, r_max, std::move(simplices));
}

void write_filtration_csv(const Filtration& filtration, std::ostream& out) {
  out << "dim,value";
  for (int j = 0; j <= filtration.max_dim(); ++j) out << ",v" << j;
  out << '\n' << std::setprecision(17);
  for (const FiltrationSimplex& s : filtration.simplices()) {
    out << s.dim << ',' << s.value;
    for (std::uint32_t v : s.vertices()) out << ',' << v;
    out << '\n';
  }
}

void write_filtration_csv(const Filtration& filtration, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_failure, "cannot open " + path);
  write_filtration_csv(filtration, out);
  if (!out) throw Error(ErrorKind::io_failure, "write failed: " + path);
}

}  // namespace tml
