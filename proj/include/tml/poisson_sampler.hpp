#pragma once

// Homogeneous Poisson processes on T^d and a periodic cell grid for
// neighbourhood queries.

#include "tml/common.hpp"
#include "tml/torus_geom.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tml {

/// splitmix64 finaliser; used to derive independent seeds for every
/// (master seed, stream, substream) triple.
std::uint64_t mix_seed(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t substream = 0) noexcept;

/// Seedable random source. Each trial or Monte Carlo batch owns one.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() { return normal_(engine_); }
  std::uint64_t poisson(double mean) {
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(engine_);
  }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Cells of side 1/m per axis; each point registered in exactly one cell.
class PeriodicGrid {
 public:
  PeriodicGrid() = default;
  PeriodicGrid(std::span<const double> coords, int d, int cells_per_axis);

  int cells_per_axis() const noexcept { return m_; }
  double cell_side() const noexcept { return 1.0 / m_; }
  std::size_t cell_count() const noexcept { return cell_start_.empty() ? 0 : cell_start_.size() - 1; }
  std::size_t cell_of_point(std::uint32_t id) const { return point_cell_[id]; }
  std::span<const std::uint32_t> cell(std::size_t c) const {
    return {cell_points_.data() + cell_start_[c], cell_points_.data() + cell_start_[c + 1]};
  }

  /// Calls f(id, offset) for every point within closed distance r of x,
  /// where offset is the minimal-image vector from x to the point. No
  /// ordering guarantee. Requires r < 1/2.
  template <class F>
  void for_each_in_ball(std::span<const double> coords, const Vec& x, double r, F&& f) const;

 private:
  int d_ = 0;
  int m_ = 1;
  std::vector<std::size_t> cell_start_;
  std::vector<std::uint32_t> cell_points_;
  std::vector<std::size_t> point_cell_;
};

class TorusPointCloud {
 public:
  TorusPointCloud() = default;
  /// coords is row-major, size = count * d, all entries in [0, 1).
  TorusPointCloud(int d, std::vector<double> coords, double intensity, std::uint64_t seed,
                  double r_max = kDefaultRmax);

  int dim() const noexcept { return d_; }
  std::size_t size() const noexcept { return d_ == 0 ? 0 : coords_.size() / static_cast<std::size_t>(d_); }
  double intensity() const noexcept { return intensity_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double r_max() const noexcept { return r_max_; }
  /// Largest radius accepted by points_in_ball.
  double grid_reach() const noexcept { return 2.0 * r_max_; }

  std::span<const double> coords() const noexcept { return coords_; }
  std::span<const double> point(std::uint32_t id) const {
    return {coords_.data() + static_cast<std::size_t>(id) * d_, static_cast<std::size_t>(d_)};
  }
  Vec point_vec(std::uint32_t id) const;
  TorusPoint torus_point(std::uint32_t id) const { return TorusPoint(point_vec(id)); }

  /// Minimal-image vector from `anchor` to point `id`.
  Vec lift(const Vec& anchor, std::uint32_t id) const { return minimal_image(anchor, point_vec(id)); }

  const PeriodicGrid& grid() const noexcept { return grid_; }

  /// Ids with torus distance <= r from center, ascending. Throws
  /// radius_too_large if r exceeds 2 r_max.
  std::vector<std::uint32_t> points_in_ball(const TorusPoint& center, double r) const;

  /// Unchecked neighbourhood visitor for kernels (any r < 1/2).
  template <class F>
  void for_each_in_ball(const Vec& x, double r, F&& f) const {
    grid_.for_each_in_ball(coords_, x, r, std::forward<F>(f));
  }

 private:
  int d_ = 0;
  std::vector<double> coords_;
  double intensity_ = 0.0;
  std::uint64_t seed_ = 0;
  double r_max_ = kDefaultRmax;
  PeriodicGrid grid_;
};

/// Poisson(n) many i.i.d. uniform points of [0,1)^d. Deterministic in
/// (n, d, seed).
TorusPointCloud sample(double n, int d, std::uint64_t seed, double r_max = kDefaultRmax);

/// CSV with header x0,...,x{d-1} and one row per point.
void write_points_csv(const TorusPointCloud& cloud, std::ostream& out);
void write_points_csv(const TorusPointCloud& cloud, const std::string& path);
TorusPointCloud read_points_csv(std::istream& in, double r_max = kDefaultRmax);
TorusPointCloud read_points_csv(const std::string& path, double r_max = kDefaultRmax);

// ---------------------------------------------------------------------------

template <class F>
void PeriodicGrid::for_each_in_ball(std::span<const double> coords, const Vec& x, double r, F&& f) const {
  if (cell_start_.empty()) return;
  const int reach = static_cast<int>(std::ceil(r * m_));
  // Offsets -reach..reach, collapsed when they would wrap onto themselves.
  std::array<int, kMaxDim> lo{}, span_{}, base{};
  std::array<double, kMaxDim> xw{};
  std::array<bool, kMaxDim> full{};
  for (int a = 0; a < d_; ++a) {
    xw[a] = x[a] - std::floor(x[a]);
    base[a] = std::min(static_cast<int>(xw[a] * m_), m_ - 1);
    full[a] = 2 * reach + 1 >= m_;
    if (full[a]) {
      lo[a] = -base[a];
      span_[a] = m_;
    } else {
      lo[a] = -reach;
      span_[a] = 2 * reach + 1;
    }
  }
  const double r2 = r * r;
  const double h = 1.0 / m_;
  std::array<int, kMaxDim> idx{};
  for (;;) {
    std::size_t cell = 0;
    double gap2 = 0.0;
    for (int a = d_ - 1; a >= 0; --a) {
      const int o = base[a] + lo[a] + idx[a];
      if (!full[a]) {
        const double g = std::max({0.0, o * h - xw[a], xw[a] - (o + 1) * h});
        gap2 += g * g;
      }
      int c = o % m_;
      if (c < 0) c += m_;
      cell = cell * static_cast<std::size_t>(m_) + static_cast<std::size_t>(c);
    }
    if (gap2 <= r2) {
      for (std::size_t s = cell_start_[cell]; s < cell_start_[cell + 1]; ++s) {
        const std::uint32_t id = cell_points_[s];
        const double* p = coords.data() + static_cast<std::size_t>(id) * d_;
        std::array<double, kMaxDim> v{};
        double n2 = 0.0;
        for (int a = 0; a < d_ && n2 <= r2; ++a) {
          double t = p[a] - x[a];
          t -= std::floor(t + 0.5);
          if (t <= -0.5) t += 1.0;
          v[a] = t;
          n2 += t * t;
        }
        if (n2 <= r2) {
          Vec off(d_);
          for (int a = 0; a < d_; ++a) off[a] = v[a];
          f(id, off);
        }
      }
    }
    int a = 0;
    while (a < d_ && ++idx[a] == span_[a]) idx[a++] = 0;
    if (a == d_) break;
  }
}

}  // namespace tml
