#pragma once

// Geometry on the flat torus [0,1)^d and in local Euclidean lifts.

#include "tml/common.hpp"

#include <optional>
#include <span>
#include <vector>

namespace tml {

/// A point of T^d = R^d / Z^d; every coordinate lies in [0, 1).
class TorusPoint {
 public:
  TorusPoint() = default;
  /// Throws parameter_out_of_range unless every coordinate is in [0, 1).
  explicit TorusPoint(const Vec& coords);

  /// Reduces arbitrary real coordinates modulo 1.
  static TorusPoint wrap(const Vec& coords);

  int dim() const noexcept { return static_cast<int>(coords_.size()); }
  const Vec& coords() const noexcept { return coords_; }
  double operator[](int i) const { return coords_[i]; }

  friend bool operator==(const TorusPoint& a, const TorusPoint& b) { return a.coords_ == b.coords_; }

 private:
  Vec coords_;
};

/// Coordinate difference b - a reduced to (-1/2, 1/2] on every axis.
Vec minimal_image(const Vec& a, const Vec& b);
Vec minimal_image(std::span<const double> a, std::span<const double> b);

double torus_distance(const TorusPoint& a, const TorusPoint& b);

/// Points expressed as vectors of R^d relative to an anchor.
struct EuclideanLift {
  TorusPoint center;
  std::vector<Vec> points;
};

/// Throws lift_out_of_range if some point is at toroidal distance >= 1/2.
EuclideanLift local_lift(const TorusPoint& anchor, std::span<const TorusPoint> pts);

struct Circumsphere {
  Vec center;
  double radius = 0.0;
  /// Coordinates of the center in the affine frame of the points.
  Vec barycentric;
};

/// Smallest sphere through the points: its center is the point of the
/// equidistant set E(X) nearest to them, so it lies in their affine hull.
/// Throws degenerate_configuration if the points are affinely dependent.
Circumsphere circumsphere(std::span<const Vec> pts);
std::optional<Circumsphere> try_circumsphere(std::span<const Vec> pts);

struct Ball {
  Vec center;
  double radius = 0.0;
};

/// Smallest enclosing ball of 1..d+2 points (Welzl's recursion).
Ball min_enclosing_ball(std::span<const Vec> pts);

/// True iff the center lies in the open simplex. Throws ambiguous_boundary
/// when a barycentric coordinate is within tolerance of zero.
bool contains_center(const Circumsphere& cs);

/// k-volume of the simplex spanned by k+1 points (0 when degenerate).
double simplex_volume(std::span<const Vec> pts);

struct NearestFace {
  double phi = 0.0;
  /// Index of the vertex opposite the nearest facet.
  int index = -1;
  /// Two facets sit at the same distance within tolerance.
  bool tie = false;
};

/// phi = min over facets of dist(center, aff(facet)) / radius, together with
/// the facet attaining it. Never throws; ties are reported in the result.
NearestFace nearest_face(std::span<const Vec> pts, const Circumsphere& cs);

/// Same as nearest_face but throws tie_detected when the minimum is not unique.
NearestFace phi_and_nearest_face(std::span<const Vec> pts, const Circumsphere& cs);

/// Volume of the unit ball in R^d (omega_d).
double unit_ball_volume(int d);

/// Spherical volume functions of a d-dimensional unit ball.
class SphericalVolumes {
 public:
  explicit SphericalVolumes(int d);

  int dim() const noexcept { return d_; }
  double ball() const noexcept { return omega_d_; }

  /// Volume of {x in B_1 : x_d >= delta}, by adaptive Gauss-Kronrod
  /// quadrature (absolute error <= 1e-10).
  double cap_volume(double delta) const;

  /// Volume of B_{r1}(c1) cap B_{r2}(c2) with |c1 - c2| = delta.
  double lens_volume(double r1, double r2, double delta) const;

  /// vol(B_{1 - alpha eps}(x2) \ B_1(x1)) for |x1 - x2| = eps, valid for
  /// eps <= 2 alpha / (1 + alpha^2).
  double diff_volume(double eps, double alpha) const;

 private:
  int d_;
  double omega_d_;
  double omega_dm1_;
};

}  // namespace tml
