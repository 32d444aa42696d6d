#pragma once

// Delaunay triangulation of a periodic point set by gift wrapping.

#include "tml/poisson_sampler.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace tml {

struct DelaunayCell {
  /// Sorted point ids of the d+1 vertices.
  std::array<std::uint32_t, kMaxDim + 1> ids{};
  double circumradius = 0.0;
};

/// Top-dimensional cells of the Delaunay triangulation of the cloud on T^d.
/// Throws not_covered if some empty circumball reaches max_circumradius
/// (which must stay below 1/4 so all cells lift uniquely) and
/// degenerate_configuration on cospherical ties.
std::vector<DelaunayCell> periodic_delaunay(const TorusPointCloud& cloud, double max_circumradius = 0.24);

}  // namespace tml
