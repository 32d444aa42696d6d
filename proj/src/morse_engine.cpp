#include "tml/morse_engine.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace tml {

std::string_view to_string(Sign s) noexcept {
  switch (s) {
    case Sign::positive: return "positive";
    case Sign::negative: return "negative";
    case Sign::unset: break;
  }
  return "unset";
}

namespace {

// points this close to a critical sphere can sit inside a coface ball of the
// same radius (the inclusion test allows 1e-12)
constexpr double kSphereBand = 1e-11;

bool has_vertex(std::span<const std::uint32_t> vs, std::uint32_t id) {
  return std::find(vs.begin(), vs.end(), id) != vs.end();
}

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t b = 1;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

}  // namespace

std::vector<CriticalFace> detect_critical_faces(const Filtration& filtration, const TorusPointCloud& cloud) {
  const int d = cloud.dim();
  std::vector<CriticalFace> out;
  std::array<std::uint32_t, kMaxVertices> facet{};
  for (std::size_t i = 0; i < filtration.size(); ++i) {
    const FiltrationSimplex& s = filtration[i];
    if (s.dim == 0) {
      CriticalFace cf;
      cf.simplex = static_cast<std::uint32_t>(i);
      cf.center = cloud.torus_point(s.v[0]);
      out.push_back(std::move(cf));
      continue;
    }
    if (s.dim > d) continue;
    const auto verts = s.vertices();
    const auto lift = lift_simplex(cloud, verts);
    const Circumsphere cs = circumsphere(lift);
    if (!contains_center(cs)) continue;
    const Vec center = cloud.point_vec(s.v[0]) + cs.center;
    bool empty = true, on_sphere = false;
    const double inner = cs.radius * (1.0 - kSphereBand);
    cloud.for_each_in_ball(center, cs.radius * (1.0 + kSphereBand), [&](std::uint32_t id, const Vec& off) {
      if (has_vertex(verts, id)) return;
      if (off.norm() < inner) {
        empty = false;
      } else {
        on_sphere = true;
      }
    });
    if (!empty) continue;
    if (on_sphere) throw Error(ErrorKind::ambiguous_boundary, "cloud point on the sphere of a critical face");

    CriticalFace cf;
    cf.simplex = static_cast<std::uint32_t>(i);
    cf.dim = s.dim;
    cf.rho = s.value;
    cf.center = TorusPoint::wrap(center);
    // Both endpoints of an edge are equally far from its midpoint.
    const NearestFace nf = s.dim == 1 ? nearest_face(lift, cs) : phi_and_nearest_face(lift, cs);
    cf.phi = nf.phi;
    int m = 0;
    for (int j = 0; j <= s.dim; ++j) {
      if (j != nf.index) facet[m++] = s.v[j];
    }
    const auto pos = filtration.find(std::span<const std::uint32_t>(facet.data(), m));
    if (!pos) throw Error(ErrorKind::parameter_out_of_range, "nearest facet missing from the filtration");
    cf.nearest_facet = *pos;
    cf.nearest_facet_rho = filtration[*pos].value;
    out.push_back(std::move(cf));
  }
  return out;
}

Persistence reduce_persistence(const Filtration& filtration) {
  const std::size_t n = filtration.size();
  std::vector<std::vector<std::uint32_t>> by_dim(static_cast<std::size_t>(filtration.max_dim() + 2));
  for (std::size_t i = 0; i < n; ++i) by_dim[static_cast<std::size_t>(filtration[i].dim)].push_back(static_cast<std::uint32_t>(i));

  std::vector<std::int64_t> pivot_of(n, -1);
  std::vector<std::vector<std::uint32_t>> reduced(n);
  std::vector<char> cleared(n, 0);
  std::vector<std::uint32_t> col, tmp;
  for (int k = static_cast<int>(by_dim.size()) - 1; k >= 1; --k) {
    for (std::uint32_t j : by_dim[static_cast<std::size_t>(k)]) {
      if (cleared[j]) continue;
      col = filtration.boundary(j);
      while (!col.empty()) {
        const std::int64_t p = pivot_of[col.back()];
        if (p < 0) break;
        const auto& other = reduced[static_cast<std::size_t>(p)];
        tmp.clear();
        std::set_symmetric_difference(col.begin(), col.end(), other.begin(), other.end(), std::back_inserter(tmp));
        col.swap(tmp);
      }
      if (col.empty()) continue;
      pivot_of[col.back()] = j;
      cleared[col.back()] = 1;
      reduced[j] = col;
    }
  }

  Persistence out;
  out.sign.assign(n, Sign::positive);
  for (std::size_t j = 0; j < n; ++j) {
    if (!reduced[j].empty()) out.sign[j] = Sign::negative;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.sign[i] != Sign::positive) continue;
    out.pairs.push_back(PersistencePair{static_cast<std::uint32_t>(i), pivot_of[i], filtration[i].dim});
  }
  return out;
}

void assign_signs(std::vector<CriticalFace>& criticals, const Persistence& persistence) {
  for (CriticalFace& cf : criticals) cf.sign = persistence.sign[cf.simplex];
}

FaceCounts classify_and_count(std::span<const CriticalFace> criticals, double r) {
  FaceCounts c;
  for (const CriticalFace& cf : criticals) {
    if (!(cf.rho > r)) continue;
    const auto k = static_cast<std::size_t>(cf.dim);
    ++c.total[k];
    if (cf.sign == Sign::positive) ++c.positive[k];
    if (cf.sign == Sign::negative) ++c.negative[k];
  }
  return c;
}

std::vector<FaceCounts> classify_and_count(std::span<const CriticalFace> criticals, std::span<const double> r_grid) {
  std::vector<FaceCounts> out;
  out.reserve(r_grid.size());
  for (double r : r_grid) out.push_back(classify_and_count(criticals, r));
  return out;
}

PairingFraction pairing_fraction(std::span<const CriticalFace> criticals, int k, double r) {
  PairingFraction pf;
  auto find_critical = [&](std::int64_t simplex) -> const CriticalFace* {
    auto it = std::lower_bound(criticals.begin(), criticals.end(), simplex,
                               [](const CriticalFace& c, std::int64_t s) { return c.simplex < s; });
    if (it == criticals.end() || it->simplex != simplex) return nullptr;
    return &*it;
  };
  for (const CriticalFace& cf : criticals) {
    if (cf.dim != k + 1 || cf.sign != Sign::negative || !(cf.rho > r)) continue;
    ++pf.negatives;
    const CriticalFace* nf = find_critical(cf.nearest_facet);
    if (nf && nf->sign == Sign::positive) ++pf.paired;
  }
  if (pf.negatives > 0) pf.fraction = static_cast<double>(pf.paired) / static_cast<double>(pf.negatives);
  return pf;
}

double distance_to_ball_intersection(const Vec& p, std::span<const Vec> centers, double r, double tol) {
  const double r2 = r * r;
  bool inside = true;
  for (const Vec& c : centers) inside = inside && (p - c).squaredNorm() <= r2;
  if (inside) return 0.0;
  const std::size_t m = centers.size();
  std::vector<Vec> incr(m, Vec::Zero(p.size()));
  Vec x = p;
  for (int iter = 0; iter < 200000; ++iter) {
    const Vec prev = x;
    for (std::size_t i = 0; i < m; ++i) {
      const Vec y = x + incr[i];
      const Vec off = y - centers[i];
      const double len = off.norm();
      const Vec z = len > r ? Vec(centers[i] + off * (r / len)) : y;
      incr[i] = y - z;
      x = z;
    }
    if ((x - prev).norm() <= 0.01 * tol) break;
  }
  return (p - x).norm();
}

bool isolation_check(const CriticalFace& face, const CriticalFace& coface, const Filtration& filtration,
                     const TorusPointCloud& cloud) {
  const FiltrationSimplex& fs = filtration[face.simplex];
  const FiltrationSimplex& xs = filtration[coface.simplex];
  const double rho = coface.rho;
  const auto centers = lift_simplex(cloud, fs.vertices());
  const Vec anchor = cloud.point_vec(fs.v[0]);
  const Vec hat_center = minimal_image(anchor, face.center.coords());
  bool isolated = true;
  // I(X) lies within 2 rho of every vertex of its base face.
  cloud.for_each_in_ball(anchor, 2.0 * rho, [&](std::uint32_t id, const Vec& off) {
    if (!isolated || has_vertex(xs.vertices(), id)) return;
    if ((off - hat_center).norm() < rho) {
      isolated = false;
      return;
    }
    if (distance_to_ball_intersection(off, centers, rho) < rho) isolated = false;
  });
  return isolated;
}

bool is_covered(const Filtration& filtration, const Persistence& persistence) {
  const int d = filtration.ambient_dim();
  std::vector<std::int64_t> ess(static_cast<std::size_t>(filtration.max_dim() + 2), 0);
  for (const PersistencePair& p : persistence.pairs) {
    if (p.death == kEssential) ++ess[static_cast<std::size_t>(p.degree)];
  }
  // Degrees above d are not resolved by a complex truncated at d+1.
  for (std::size_t k = 0; k < ess.size() && static_cast<int>(k) <= d; ++k) {
    if (ess[k] != binomial(d, static_cast<int>(k))) return false;
  }
  return true;
}

double first_coface_value(const Filtration& filtration, std::uint32_t simplex, const TorusPointCloud& cloud,
                          double r_limit) {
  const FiltrationSimplex& s = filtration[simplex];
  const auto verts = s.vertices();
  const auto lift = lift_simplex(cloud, verts);
  const Ball meb = min_enclosing_ball(lift);
  const double rho = s.value;
  const Vec anchor = cloud.point_vec(s.v[0]);
  // A ball holding the simplex and a point at distance D from its center
  // has radius at least (D^2 + rho^2) / (2D).
  auto lower = [rho](double dist) { return dist <= rho ? rho : (dist * dist + rho * rho) / (2.0 * dist); };
  std::vector<std::pair<double, std::uint32_t>> cand;
  std::array<std::uint32_t, kMaxVertices> ids{};
  double best = std::numeric_limits<double>::infinity();
  double reach = 2.0 * rho + 1e-12;
  for (;;) {
    reach = std::min(reach, 0.49);
    cand.clear();
    cloud.for_each_in_ball(anchor + meb.center, reach, [&](std::uint32_t id, const Vec& off) {
      if (!has_vertex(verts, id)) cand.emplace_back(lower(off.norm()), id);
    });
    std::sort(cand.begin(), cand.end());
    for (const auto& [lb, id] : cand) {
      if (lb >= best) break;
      int m = 0;
      bool placed = false;
      for (std::uint32_t v : verts) {
        if (!placed && id < v) {
          ids[m++] = id;
          placed = true;
        }
        ids[m++] = v;
      }
      if (!placed) ids[m++] = id;
      best = std::min(best, cech_value(cloud, std::span<const std::uint32_t>(ids.data(), m)));
    }
    const double beyond = lower(reach);
    if (best <= beyond) break;
    if (beyond > r_limit || reach >= 0.49) break;
    reach *= 2.0;
  }
  return best <= r_limit ? best : std::numeric_limits<double>::infinity();
}

HittingTimes hitting_times(const Filtration& filtration, const Persistence& persistence,
                           std::span<const CriticalFace> criticals, const TorusPointCloud& cloud) {
  if (!is_covered(filtration, persistence)) {
    throw Error(ErrorKind::not_covered, "the torus is not covered at r_max");
  }
  const int d = cloud.dim();
  HittingTimes ht;
  ht.T.assign(static_cast<std::size_t>(d + 1), 0.0);
  ht.T_iso.assign(static_cast<std::size_t>(d + 1), 0.0);
  ht.never_joined.assign(static_cast<std::size_t>(d + 1), 0);
  for (const PersistencePair& p : persistence.pairs) {
    if (p.degree > d) continue;
    double& t = ht.T[static_cast<std::size_t>(p.degree)];
    const double birth = filtration[p.birth].value;
    if (p.death == kEssential) {
      t = std::max(t, birth);
    } else {
      const double death = filtration[static_cast<std::size_t>(p.death)].value;
      if (death > birth) t = std::max(t, death);
    }
  }
  for (const CriticalFace& cf : criticals) {
    if (cf.dim == d) ht.coverage_radius = std::max(ht.coverage_radius, cf.rho);
    if (cf.dim < 1 || cf.sign != Sign::positive) continue;
    const auto k = static_cast<std::size_t>(cf.dim);
    const double joined = first_coface_value(filtration, cf.simplex, cloud, filtration.r_max());
    if (std::isinf(joined)) {
      ++ht.never_joined[k];
      ht.T_iso[k] = std::numeric_limits<double>::infinity();
    } else {
      ht.T_iso[k] = std::max(ht.T_iso[k], joined);
    }
  }
  return ht;
}

std::int64_t euler_alternating_sum(std::span<const CriticalFace> criticals, bool covered) {
  if (!covered) throw Error(ErrorKind::not_covered, "Euler sum needs a covered filtration");
  std::int64_t chi = 0;
  for (const CriticalFace& cf : criticals) chi += (cf.dim % 2 == 0) ? 1 : -1;
  return chi;
}

std::vector<std::int64_t> betti_numbers(const Filtration& filtration, const Persistence& persistence, double r) {
  std::vector<std::int64_t> b(static_cast<std::size_t>(filtration.max_dim() + 1), 0);
  for (const PersistencePair& p : persistence.pairs) {
    if (!(filtration[p.birth].value <= r)) continue;
    if (p.death != kEssential && filtration[static_cast<std::size_t>(p.death)].value <= r) continue;
    ++b[static_cast<std::size_t>(p.degree)];
  }
  return b;
}

std::vector<std::int64_t> betti_numbers_prefix(const Filtration& filtration, const Persistence& persistence,
                                               std::size_t prefix) {
  std::vector<std::int64_t> b(static_cast<std::size_t>(filtration.max_dim() + 1), 0);
  for (const PersistencePair& p : persistence.pairs) {
    if (p.birth >= prefix) continue;
    if (p.death != kEssential && static_cast<std::size_t>(p.death) < prefix) continue;
    ++b[static_cast<std::size_t>(p.degree)];
  }
  return b;
}

void write_critical_faces_csv(std::span<const CriticalFace> criticals, int d, std::ostream& out) {
  out << "dim,rho,phi,sign,nearest_facet_rho";
  for (int a = 0; a < d; ++a) out << ",c" << a;
  out << '\n' << std::setprecision(17);
  for (const CriticalFace& cf : criticals) {
    out << cf.dim << ',' << cf.rho << ',' << cf.phi << ',' << to_string(cf.sign) << ',' << cf.nearest_facet_rho;
    for (int a = 0; a < d; ++a) out << ',' << cf.center[a];
    out << '\n';
  }
}

void write_persistence_csv(const Filtration& filtration, const Persistence& persistence, std::ostream& out) {
  out << "k,birth,death\n" << std::setprecision(17);
  for (const PersistencePair& p : persistence.pairs) {
    const double birth = filtration[p.birth].value;
    if (p.death == kEssential) {
      out << p.degree << ',' << birth << ",inf\n";
      continue;
    }
    const double death = filtration[static_cast<std::size_t>(p.death)].value;
    if (death > birth) out << p.degree << ',' << birth << ',' << death << '\n';
  }
}

}  // namespace tml
