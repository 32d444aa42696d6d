#include "tml/torus_geom.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tml {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::lift_out_of_range: return "lift-out-of-range";
    case ErrorKind::degenerate_configuration: return "degenerate-configuration";
    case ErrorKind::ambiguous_boundary: return "ambiguous-boundary";
    case ErrorKind::tie_detected: return "tie-detected";
    case ErrorKind::parameter_out_of_range: return "parameter-out-of-range";
    case ErrorKind::radius_too_large: return "radius-too-large";
    case ErrorKind::radius_exceeds_rmax: return "radius-exceeds-rmax";
    case ErrorKind::not_covered: return "not-covered";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::config: return "config";
    case ErrorKind::io_failure: return "io-failure";
  }
  return "unknown";
}

TorusPoint::TorusPoint(const Vec& coords) : coords_(coords) {
  if (coords.size() < 1 || coords.size() > kMaxDim) {
    throw Error(ErrorKind::parameter_out_of_range, "torus point dimension must be in [1, 4]");
  }
  for (int i = 0; i < coords.size(); ++i) {
    if (!(coords[i] >= 0.0 && coords[i] < 1.0)) {
      throw Error(ErrorKind::parameter_out_of_range, "torus coordinate outside [0, 1)");
    }
  }
}

TorusPoint TorusPoint::wrap(const Vec& coords) {
  Vec c = coords;
  for (int i = 0; i < c.size(); ++i) {
    double x = c[i] - std::floor(c[i]);
    if (x >= 1.0) x = 0.0;  // floor rounding for tiny negatives
    c[i] = x;
  }
  return TorusPoint(c);
}

namespace {

inline double wrap_delta(double diff) {
  // Map to (-1/2, 1/2].
  double v = diff - std::round(diff);
  if (v <= -0.5) v += 1.0;
  return v;
}

}  // namespace

Vec minimal_image(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (int i = 0; i < a.size(); ++i) out[i] = wrap_delta(b[i] - a[i]);
  return out;
}

Vec minimal_image(std::span<const double> a, std::span<const double> b) {
  Vec out(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) out[static_cast<Eigen::Index>(i)] = wrap_delta(b[i] - a[i]);
  return out;
}

double torus_distance(const TorusPoint& a, const TorusPoint& b) {
  return minimal_image(a.coords(), b.coords()).norm();
}

EuclideanLift local_lift(const TorusPoint& anchor, std::span<const TorusPoint> pts) {
  EuclideanLift lift{anchor, {}};
  lift.points.reserve(pts.size());
  for (const auto& p : pts) {
    Vec v = minimal_image(anchor.coords(), p.coords());
    if (v.norm() >= 0.5) {
      throw Error(ErrorKind::lift_out_of_range, "point at toroidal distance >= 1/2 from the anchor");
    }
    lift.points.push_back(std::move(v));
  }
  return lift;
}

std::optional<Circumsphere> try_circumsphere(std::span<const Vec> pts) {
  const int m = static_cast<int>(pts.size());
  if (m == 0) return std::nullopt;
  const int d = static_cast<int>(pts[0].size());
  const int k = m - 1;
  Circumsphere cs;
  if (k == 0) {
    cs.center = pts[0];
    cs.radius = 0.0;
    cs.barycentric = Vec::Ones(1);
    return cs;
  }
  if (k > d) return std::nullopt;

  // Equidistance constraints in the affine frame: 2 (p_i - p_0) . y = |p_i - p_0|^2.
  Mat edges(d, k);
  for (int i = 0; i < k; ++i) edges.col(i) = pts[i + 1] - pts[0];
  Mat gram = edges.transpose() * edges;
  double diag_prod = 1.0;
  for (int i = 0; i < k; ++i) diag_prod *= gram(i, i);
  if (!(diag_prod > 0.0)) return std::nullopt;
  Eigen::LDLT<Mat> ldlt(gram);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  // Hadamard ratio det(G) / prod(diag) is scale-free and 1 for orthogonal edges.
  const double det = ldlt.vectorD().prod();
  if (!(det > kDegeneracyTol * diag_prod)) return std::nullopt;

  Vec rhs = 0.5 * gram.diagonal();
  Vec y = ldlt.solve(rhs);
  cs.center = pts[0] + edges * y;
  cs.radius = (cs.center - pts[0]).norm();
  cs.barycentric.resize(m);
  cs.barycentric[0] = 1.0 - y.sum();
  for (int i = 0; i < k; ++i) cs.barycentric[i + 1] = y[i];
  return cs;
}

Circumsphere circumsphere(std::span<const Vec> pts) {
  auto cs = try_circumsphere(pts);
  if (!cs) throw Error(ErrorKind::degenerate_configuration, "points are affinely dependent");
  return *cs;
}

namespace {

constexpr double kInclusionTol = 1e-12;

bool in_ball(const Ball& b, const Vec& p) {
  const double r = b.radius;
  return (p - b.center).squaredNorm() <= r * r * (1.0 + 2.0 * kInclusionTol) + 1e-300;
}

Ball ball_through(const Vec* support, int count, int d) {
  if (count == 0) return Ball{Vec::Zero(d), -1.0};
  std::span<const Vec> s(support, static_cast<std::size_t>(count));
  if (auto cs = try_circumsphere(s)) return Ball{cs->center, cs->radius};
  // Affinely dependent support: only reachable for degenerate inputs. Fall
  // back to the largest pairwise diameter ball, which contains the set
  // whenever the support is collinear.
  Ball best{support[0], 0.0};
  for (int i = 0; i < count; ++i) {
    for (int j = i + 1; j < count; ++j) {
      const double r = 0.5 * (support[i] - support[j]).norm();
      if (r > best.radius) best = Ball{0.5 * (support[i] + support[j]), r};
    }
  }
  return best;
}

Ball welzl(const Vec* pts, int n, Vec* support, int nsupport, int d) {
  if (n == 0 || nsupport == d + 1) return ball_through(support, nsupport, d);
  const Vec& p = pts[n - 1];
  Ball b = welzl(pts, n - 1, support, nsupport, d);
  if (b.radius >= 0.0 && in_ball(b, p)) return b;
  support[nsupport] = p;
  return welzl(pts, n - 1, support, nsupport + 1, d);
}

}  // namespace

Ball min_enclosing_ball(std::span<const Vec> pts) {
  if (pts.empty()) throw Error(ErrorKind::parameter_out_of_range, "min_enclosing_ball of an empty set");
  const int d = static_cast<int>(pts[0].size());
  if (static_cast<int>(pts.size()) > d + 2) {
    throw Error(ErrorKind::parameter_out_of_range, "min_enclosing_ball supports at most d+2 points");
  }
  std::array<Vec, kMaxVertices + 1> support;
  Ball b = welzl(pts.data(), static_cast<int>(pts.size()), support.data(), 0, d);
  if (b.radius < 0.0) b.radius = 0.0;
  return b;
}

bool contains_center(const Circumsphere& cs) {
  bool inside = true;
  for (int i = 0; i < cs.barycentric.size(); ++i) {
    const double l = cs.barycentric[i];
    if (std::abs(l) <= kDegeneracyTol) {
      throw Error(ErrorKind::ambiguous_boundary, "circumcenter on the boundary of the simplex");
    }
    if (l < 0.0) inside = false;
  }
  return inside;
}

double simplex_volume(std::span<const Vec> pts) {
  const int m = static_cast<int>(pts.size());
  if (m <= 1) return 0.0;
  const int d = static_cast<int>(pts[0].size());
  const int k = m - 1;
  if (k > d) return 0.0;
  Mat edges(d, k);
  for (int i = 0; i < k; ++i) edges.col(i) = pts[i + 1] - pts[0];
  const double det = (edges.transpose() * edges).determinant();
  if (!(det > 0.0)) return 0.0;
  return std::sqrt(det) / std::tgamma(k + 1.0);
}

NearestFace nearest_face(std::span<const Vec> pts, const Circumsphere& cs) {
  const int m = static_cast<int>(pts.size());
  NearestFace out;
  if (m < 2 || !(cs.radius > 0.0)) return out;
  std::array<Vec, kMaxVertices> facet;
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    int c = 0;
    for (int j = 0; j < m; ++j) {
      if (j != i) facet[c++] = pts[j];
    }
    // The projection of the center onto aff(facet) is the facet's own center.
    double dist;
    if (auto fc = try_circumsphere(std::span<const Vec>(facet.data(), static_cast<std::size_t>(c)))) {
      dist = (cs.center - fc->center).norm();
    } else {
      dist = 0.0;
    }
    if (dist < best) {
      second = best;
      best = dist;
      out.index = i;
    } else if (dist < second) {
      second = dist;
    }
  }
  out.phi = std::clamp(best / cs.radius, 0.0, 1.0);
  out.tie = (second - best) <= kDegeneracyTol * std::max(second, cs.radius);
  return out;
}

NearestFace phi_and_nearest_face(std::span<const Vec> pts, const Circumsphere& cs) {
  NearestFace nf = nearest_face(pts, cs);
  if (nf.tie) throw Error(ErrorKind::tie_detected, "two facets are equally near the center");
  return nf;
}

double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

SphericalVolumes::SphericalVolumes(int d)
    : d_(d), omega_d_(unit_ball_volume(d)), omega_dm1_(d >= 1 ? unit_ball_volume(d - 1) : 0.0) {
  if (d < 1) throw Error(ErrorKind::parameter_out_of_range, "dimension must be >= 1");
}

double SphericalVolumes::cap_volume(double delta) const {
  if (!(delta >= -1.0 && delta <= 1.0)) {
    throw Error(ErrorKind::parameter_out_of_range, "cap height must be in [-1, 1]");
  }
  if (delta < 0.0) return omega_d_ - cap_volume(-delta);
  if (delta == 1.0) return 0.0;
  const double e = 0.5 * (d_ - 1);
  auto f = [e](double rho) { return std::pow(std::max(0.0, 1.0 - rho * rho), e); };
  double err = 0.0;
  const double integral =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, delta, 1.0, 25, 1e-13, &err);
  return omega_dm1_ * integral;
}

double SphericalVolumes::lens_volume(double r1, double r2, double delta) const {
  if (r1 < 0.0 || r2 < 0.0 || delta < 0.0) {
    throw Error(ErrorKind::parameter_out_of_range, "lens_volume needs nonnegative arguments");
  }
  if (delta >= r1 + r2) return 0.0;
  if (delta <= std::abs(r1 - r2)) return omega_d_ * std::pow(std::min(r1, r2), d_);
  // Distances from each center to the radical plane (signed).
  const double h1 = (delta * delta + r1 * r1 - r2 * r2) / (2.0 * delta);
  const double h2 = delta - h1;
  return std::pow(r1, d_) * cap_volume(std::clamp(h1 / r1, -1.0, 1.0)) +
         std::pow(r2, d_) * cap_volume(std::clamp(h2 / r2, -1.0, 1.0));
}

double SphericalVolumes::diff_volume(double eps, double alpha) const {
  if (!(eps > 0.0 && eps < 1.0 && alpha > 0.0 && alpha < 1.0) ||
      eps > 2.0 * alpha / (1.0 + alpha * alpha)) {
    throw Error(ErrorKind::parameter_out_of_range, "diff_volume requires eps <= 2 alpha / (1 + alpha^2)");
  }
  const double small = 1.0 - alpha * eps;
  const double plane = alpha - 0.5 * eps * (1.0 + alpha * alpha);
  const double outer = std::pow(small, d_) * cap_volume(std::clamp(plane / small, -1.0, 1.0));
  const double inner = cap_volume(std::clamp(plane + eps, -1.0, 1.0));
  return std::max(0.0, outer - inner);
}

}  // namespace tml
