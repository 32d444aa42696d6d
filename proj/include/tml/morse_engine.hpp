#pragma once

// Critical faces of the distance function, Z2 persistence and the
// counters and hitting times built from them.

#include "tml/cech_complex.hpp"
#include "tml/common.hpp"
#include "tml/poisson_sampler.hpp"
#include "tml/torus_geom.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace tml {

enum class Sign : std::int8_t { unset = 0, positive = 1, negative = -1 };

std::string_view to_string(Sign s) noexcept;

struct CriticalFace {
  /// Position of the simplex in the filtration.
  std::uint32_t simplex = 0;
  int dim = 0;
  double rho = 0.0;
  double phi = 0.0;
  TorusPoint center;
  /// Filtration position of the facet nearest to the center (absent for vertices).
  std::int64_t nearest_facet = -1;
  double nearest_facet_rho = 0.0;
  Sign sign = Sign::unset;
};

/// Direct test on every simplex: the circumcenter lies in the open
/// simplex and the open circumball holds no other point. Vertices are
/// always critical. The result is in filtration order.
std::vector<CriticalFace> detect_critical_faces(const Filtration& filtration, const TorusPointCloud& cloud);

inline constexpr std::int64_t kEssential = -1;

struct PersistencePair {
  std::uint32_t birth = 0;
  /// Filtration position of the destroyer, or kEssential.
  std::int64_t death = kEssential;
  int degree = 0;
};

struct Persistence {
  /// All pairs including zero-persistence ones, by birth position.
  std::vector<PersistencePair> pairs;
  std::vector<Sign> sign;
};

/// Column reduction of the boundary matrix over Z2 with clearing.
Persistence reduce_persistence(const Filtration& filtration);

/// Copies the simplex signs onto the critical faces.
void assign_signs(std::vector<CriticalFace>& criticals, const Persistence& persistence);

struct FaceCounts {
  /// Indexed by dimension 0..kMaxDim+1.
  std::array<std::int64_t, kMaxDim + 2> total{}, positive{}, negative{};
};

/// Critical faces with rho in (r, r_max], split by sign.
FaceCounts classify_and_count(std::span<const CriticalFace> criticals, double r);
std::vector<FaceCounts> classify_and_count(std::span<const CriticalFace> criticals, std::span<const double> r_grid);

struct PairingFraction {
  /// Negative critical (k+1)-faces in the window whose nearest facet is a positive critical k-face.
  std::int64_t paired = 0;
  std::int64_t negatives = 0;
  /// paired / negatives, or 1 when there are no negatives.
  double fraction = 1.0;
};

PairingFraction pairing_fraction(std::span<const CriticalFace> criticals, int k, double r);

/// True iff no cloud point outside `coface` lies in the open rho-neighbourhood
/// of the intersection of the rho-balls around the vertices of `face`, where
/// rho is the coface radius and `face` is a facet of `coface`.
bool isolation_check(const CriticalFace& face, const CriticalFace& coface, const Filtration& filtration,
                     const TorusPointCloud& cloud);

/// Distance from p to the intersection of the balls B(c_i, r), by Dykstra's
/// alternating projections. Returns 0 for points inside.
double distance_to_ball_intersection(const Vec& p, std::span<const Vec> centers, double r, double tol = 1e-10);

struct HittingTimes {
  /// T_k for k = 0..d.
  std::vector<double> T;
  /// T_k^iso for k = 1..d (index 0 unused).
  std::vector<double> T_iso;
  /// Positive critical faces still isolated at r_max, per degree.
  std::vector<std::int64_t> never_joined;
  double coverage_radius = 0.0;
};

/// True iff the essential classes at r_max have the Betti numbers of T^d.
bool is_covered(const Filtration& filtration, const Persistence& persistence);

/// Throws not_covered unless is_covered.
HittingTimes hitting_times(const Filtration& filtration, const Persistence& persistence,
                           std::span<const CriticalFace> criticals, const TorusPointCloud& cloud);

/// Smallest entry radius of a coface of the simplex in the full Cech
/// filtration, or +inf if none is found below r_limit.
double first_coface_value(const Filtration& filtration, std::uint32_t simplex, const TorusPointCloud& cloud,
                          double r_limit);

/// Sum over k of (-1)^k times the number of critical k-faces. Throws
/// not_covered when the filtration never covers the torus.
std::int64_t euler_alternating_sum(std::span<const CriticalFace> criticals, bool covered);

/// Betti numbers of C_r, k = 0..max_dim.
std::vector<std::int64_t> betti_numbers(const Filtration& filtration, const Persistence& persistence, double r);
/// Betti numbers of the first `prefix` simplices.
std::vector<std::int64_t> betti_numbers_prefix(const Filtration& filtration, const Persistence& persistence,
                                               std::size_t prefix);

/// CSV dim,rho,phi,sign,nearest_facet_rho,c0,...
void write_critical_faces_csv(std::span<const CriticalFace> criticals, int d, std::ostream& out);
/// CSV k,birth,death of the pairs with positive persistence; inf for essential classes.
void write_persistence_csv(const Filtration& filtration, const Persistence& persistence, std::ostream& out);

}  // namespace tml
