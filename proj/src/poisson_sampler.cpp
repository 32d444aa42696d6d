#include "tml/poisson_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace tml {

std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t substream) noexcept {
  return mix_seed(mix_seed(mix_seed(master) ^ stream) ^ (substream * 0xd1b54a32d192ed03ULL));
}

PeriodicGrid::PeriodicGrid(std::span<const double> coords, int d, int cells_per_axis)
    : d_(d), m_(std::max(1, cells_per_axis)) {
  const std::size_t n = coords.size() / static_cast<std::size_t>(d);
  std::size_t cells = 1;
  for (int a = 0; a < d; ++a) cells *= static_cast<std::size_t>(m_);
  point_cell_.resize(n);
  std::vector<std::size_t> counts(cells + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cell = 0;
    for (int a = d - 1; a >= 0; --a) {
      const int c = std::min(static_cast<int>(coords[i * d + a] * m_), m_ - 1);
      cell = cell * static_cast<std::size_t>(m_) + static_cast<std::size_t>(c);
    }
    point_cell_[i] = cell;
    ++counts[cell + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) counts[c + 1] += counts[c];
  cell_start_ = counts;
  cell_points_.resize(n);
  for (std::size_t i = 0; i < n; ++i) cell_points_[counts[point_cell_[i]]++] = static_cast<std::uint32_t>(i);
}

namespace {

int default_cells_per_axis(std::size_t count, int d) {
  // About two points per cell, capped so the table stays small.
  const double target = std::pow(std::max<double>(1.0, static_cast<double>(count) / 2.0), 1.0 / d);
  const double cap = std::pow(4.0e6, 1.0 / d);
  return std::max(1, static_cast<int>(std::min(target, cap)));
}

}  // namespace

TorusPointCloud::TorusPointCloud(int d, std::vector<double> coords, double intensity, std::uint64_t seed,
                                 double r_max)
    : d_(d), coords_(std::move(coords)), intensity_(intensity), seed_(seed), r_max_(r_max) {
  if (d < 1 || d > kMaxDim) throw Error(ErrorKind::parameter_out_of_range, "dimension must be in [1, 4]");
  if (coords_.size() % static_cast<std::size_t>(d) != 0) {
    throw Error(ErrorKind::parameter_out_of_range, "coordinate count is not a multiple of d");
  }
  for (double x : coords_) {
    if (!(x >= 0.0 && x < 1.0)) throw Error(ErrorKind::parameter_out_of_range, "coordinate outside [0, 1)");
  }
  grid_ = PeriodicGrid(coords_, d_, default_cells_per_axis(size(), d_));
}

Vec TorusPointCloud::point_vec(std::uint32_t id) const {
  Vec v(d_);
  for (int a = 0; a < d_; ++a) v[a] = coords_[static_cast<std::size_t>(id) * d_ + a];
  return v;
}

std::vector<std::uint32_t> TorusPointCloud::points_in_ball(const TorusPoint& center, double r) const {
  if (r > grid_reach()) {
    throw Error(ErrorKind::radius_too_large, "query radius exceeds the grid reach 2*r_max");
  }
  std::vector<std::uint32_t> out;
  for_each_in_ball(center.coords(), r, [&](std::uint32_t id, const Vec&) { out.push_back(id); });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TorusPointCloud sample(double n, int d, std::uint64_t seed, double r_max) {
  if (!(n > 0.0)) throw Error(ErrorKind::parameter_out_of_range, "intensity must be positive");
  if (d < 1 || d > kMaxDim) throw Error(ErrorKind::parameter_out_of_range, "dimension must be in [1, 4]");
  Rng rng(seed);
  const std::uint64_t count = rng.poisson(n);
  std::vector<double> coords(count * static_cast<std::uint64_t>(d));
  for (double& x : coords) x = rng.uniform();
  return TorusPointCloud(d, std::move(coords), n, seed, r_max);
}

void write_points_csv(const TorusPointCloud& cloud, std::ostream& out) {
  const int d = cloud.dim();
  for (int a = 0; a < d; ++a) out << (a ? "," : "") << 'x' << a;
  out << '\n' << std::setprecision(17);
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    auto p = cloud.point(i);
    for (int a = 0; a < d; ++a) out << (a ? "," : "") << p[a];
    out << '\n';
  }
}

void write_points_csv(const TorusPointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_failure, "cannot open " + path);
  write_points_csv(cloud, out);
  if (!out) throw Error(ErrorKind::io_failure, "write failed: " + path);
}

TorusPointCloud read_points_csv(std::istream& in, double r_max) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::io_failure, "empty point CSV");
  const int d = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<double> coords;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int cols = 0;
    while (std::getline(row, cell, ',')) {
      coords.push_back(std::stod(cell));
      ++cols;
    }
    if (cols != d) throw Error(ErrorKind::io_failure, "ragged row in point CSV");
  }
  return TorusPointCloud(d, std::move(coords), static_cast<double>(coords.size() / d), 0, r_max);
}

TorusPointCloud read_points_csv(const std::string& path, double r_max) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_failure, "cannot open " + path);
  return read_points_csv(in, r_max);
}

}  // namespace tml
