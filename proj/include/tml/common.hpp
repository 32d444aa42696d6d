#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tml {

/// Largest ambient dimension supported by the sampler and the kernels.
inline constexpr int kMaxDim = 4;
/// A simplex of the filtration has at most d+2 vertices.
inline constexpr int kMaxVertices = kMaxDim + 2;

/// Relative tolerance used for every degeneracy decision (affine
/// independence, barycentric boundary, facet-distance ties, cospherical
/// points).
inline constexpr double kDegeneracyTol = 1e-12;

/// Default filtration cutoff on the flat torus.
inline constexpr double kDefaultRmax = 0.125;

// Small vectors never allocate: the maximum size covers R^d and the
// barycentric coordinates of a (d+1)-simplex.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxVertices, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxVertices, kMaxVertices>;

enum class ErrorKind {
  lift_out_of_range,
  degenerate_configuration,
  ambiguous_boundary,
  tie_detected,
  parameter_out_of_range,
  radius_too_large,
  radius_exceeds_rmax,
  not_covered,
  unsupported,
  config,
  io_failure,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tml
