#pragma once

// Cech filtrations of point clouds on the flat torus.

#include "tml/common.hpp"
#include "tml/poisson_sampler.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tml {

struct FiltrationSimplex {
  /// Sorted point ids; entries past dim are unused.
  std::array<std::uint32_t, kMaxVertices> v{};
  int dim = 0;
  /// Entry radius: the radius of the smallest enclosing ball of the lifted vertices.
  double value = 0.0;

  std::span<const std::uint32_t> vertices() const noexcept {
    return {v.data(), static_cast<std::size_t>(dim + 1)};
  }
};

/// Key of a vertex tuple; unused slots are filled with a sentinel.
using SimplexKey = std::array<std::uint32_t, kMaxVertices>;
SimplexKey make_key(std::span<const std::uint32_t> sorted_ids);

struct SimplexKeyHash {
  std::size_t operator()(const SimplexKey& k) const noexcept;
};

/// Simplices in (value, dim, lexicographic) order together with an index
/// from vertex tuples to positions.
class Filtration {
 public:
  Filtration() = default;
  /// Sorts, indexes and makes values facet-monotone. Throws
  /// parameter_out_of_range if some facet is missing.
  Filtration(int ambient_dim, int max_dim, double r_max, std::vector<FiltrationSimplex> simplices);

  int ambient_dim() const noexcept { return ambient_dim_; }
  int max_dim() const noexcept { return max_dim_; }
  double r_max() const noexcept { return r_max_; }
  std::size_t size() const noexcept { return simplices_.size(); }
  const FiltrationSimplex& operator[](std::size_t i) const { return simplices_[i]; }
  std::span<const FiltrationSimplex> simplices() const noexcept { return simplices_; }

  std::optional<std::uint32_t> find(std::span<const std::uint32_t> sorted_ids) const;
  /// Positions of the facets, ascending.
  std::vector<std::uint32_t> boundary(std::size_t i) const;
  /// Number of simplices with value <= r.
  std::size_t prefix_end(double r) const;

 private:
  int ambient_dim_ = 0;
  int max_dim_ = 0;
  double r_max_ = 0.0;
  std::vector<FiltrationSimplex> simplices_;
  std::unordered_map<SimplexKey, std::uint32_t, SimplexKeyHash> index_;
};

/// The subcomplex C_r as a prefix of the filtration.
struct FiltrationPrefix {
  const Filtration* filtration = nullptr;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end; }
  std::span<const FiltrationSimplex> simplices() const { return filtration->simplices().first(end); }
};

/// Throws parameter_out_of_range unless 0 <= r <= r_max.
FiltrationPrefix complex_at(const Filtration& filtration, double r);

/// Lifts of the given points relative to the first one.
std::vector<Vec> lift_simplex(const TorusPointCloud& cloud, std::span<const std::uint32_t> ids);

/// Smallest enclosing ball radius of the points, computed as the least
/// circumradius over vertex subsets whose circumball holds all of them.
/// Each subset is lifted from its own smallest id, so equal supports give
/// bitwise equal radii.
double cech_value(const TorusPointCloud& cloud, std::span<const std::uint32_t> sorted_ids);

/// Full Cech filtration: every simplex with at most max_dim+1 vertices and
/// entry radius <= r_max, enumerated by clique expansion of the neighbour
/// graph at 2 r_max.
Filtration build_filtration(const TorusPointCloud& cloud, int max_dim, double r_max);
Filtration build_filtration(const TorusPointCloud& cloud);

/// Delaunay-Cech filtration: faces of the periodic Delaunay triangulation
/// with Cech entry radii, truncated at r_max. Homotopy equivalent to the
/// Cech complex at every radius and has the same critical faces.
Filtration build_delaunay_cech_filtration(const TorusPointCloud& cloud, double r_max);

/// CSV with columns dim,value,v0,...,v{dim} in filtration order.
void write_filtration_csv(const Filtration& filtration, std::ostream& out);
void write_filtration_csv(const Filtration& filtration, const std::string& path);

}  // namespace tml
