#include "tml/limit_theory.hpp"

#include "tml/poisson_sampler.hpp"
#include "tml/torus_geom.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace tml {

double lambda_of(double n, int d, double r) { return unit_ball_volume(d) * n * std::pow(r, d); }

double radius_for_lambda(double n, int d, int k, double lambda, double r_max) {
  if (!(n > 1.0)) throw Error(ErrorKind::parameter_out_of_range, "radius_for_lambda needs n > 1");
  const double L = std::log(n) + (k - 1) * std::log(std::log(n)) + lambda;
  if (!(L > 0.0)) throw Error(ErrorKind::parameter_out_of_range, "Lambda must be positive");
  const double r = std::pow(L / (unit_ball_volume(d) * n), 1.0 / d);
  if (r > r_max) throw Error(ErrorKind::radius_exceeds_rmax, "radius above r_max");
  return r;
}

double delta_kn(double n, int d, int k, double r) {
  return n * std::pow(std::log(n), k - 1) * std::exp(-lambda_of(n, d, r));
}

double omega_product(int k) {
  double p = 1.0;
  for (int i = 1; i <= k; ++i) p *= unit_ball_volume(i);
  return p;
}

double grassmannian_volume(int d, int k) {
  const double binom = std::tgamma(d + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(d - k + 1.0));
  return binom * omega_product(d) / (omega_product(k) * omega_product(d - k));
}

double bp_constant(int d, int k) { return std::pow(std::tgamma(k + 1.0), d - k + 1) * grassmannian_volume(d, k); }

double sphere_area(int k) { return k == 1 ? 2.0 : k * unit_ball_volume(k); }

double D1_closed_form(int d) { return std::ldexp(1.0, d - 1); }

namespace {

constexpr std::uint64_t kBatch = 1u << 16;

struct Moments {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
  void merge(const Moments& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(count + o.count);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.count) / n;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / n;
    count += o.count;
  }
  double std_error() const {
    if (count < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count));
  }
};

template <class Kernel>
Moments run_batches(std::uint64_t samples, std::uint64_t seed, std::uint64_t stream, int workers, bool parallel,
                    Kernel kernel) {
  const std::uint64_t nb = (samples + kBatch - 1) / kBatch;
  std::vector<Moments> parts(nb);
  auto one = [&](std::uint64_t b) {
    Rng rng(derive_seed(seed, b, stream));
    const std::uint64_t count = std::min(kBatch, samples - b * kBatch);
    Moments m;
    for (std::uint64_t i = 0; i < count; ++i) m.add(kernel(rng));
    parts[b] = m;
  };
  if (parallel) {
    const long long nbl = static_cast<long long>(nb);
    if (workers > 0) {
#pragma omp parallel for schedule(static) num_threads(workers)
      for (long long b = 0; b < nbl; ++b) one(static_cast<std::uint64_t>(b));
    } else {
#pragma omp parallel for schedule(static)
      for (long long b = 0; b < nbl; ++b) one(static_cast<std::uint64_t>(b));
    }
  } else {
    for (std::uint64_t b = 0; b < nb; ++b) one(b);
  }
  Moments total;
  for (const Moments& m : parts) total.merge(m);
  return total;
}

Vec sphere_point(Rng& rng, int k) {
  Vec v(k);
  if (k == 1) {
    v[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return v;
  }
  double len = 0.0;
  do {
    for (int i = 0; i < k; ++i) v[i] = rng.normal();
    len = v.norm();
  } while (!(len > 0.0));
  return v / len;
}

// Volume of the simplex spanned by k+1 points of R^k.
double full_simplex_volume(std::span<const Vec> pts) {
  const int k = static_cast<int>(pts.size()) - 1;
  Mat e(k, k);
  for (int i = 0; i < k; ++i) e.col(i) = pts[i + 1] - pts[0];
  return std::abs(e.determinant()) / std::tgamma(k + 1.0);
}

// Origin strictly inside the hull of k+1 points of R^k.
bool origin_inside(std::span<const Vec> pts) {
  const int k = static_cast<int>(pts.size()) - 1;
  Mat a(k + 1, k + 1);
  Vec b = Vec::Zero(k + 1);
  for (int j = 0; j <= k; ++j) {
    a.block(0, j, k, 1) = pts[j];
    a(k, j) = 1.0;
  }
  b[k] = 1.0;
  Eigen::FullPivLU<Mat> lu(a);
  if (!lu.isInvertible()) return false;
  const Vec lam = lu.solve(b);
  return lam.minCoeff() > kDegeneracyTol;
}

DkEstimate estimate_Dk_impl(int d, int k, std::uint64_t samples, std::uint64_t seed, int workers, bool parallel) {
  if (k == 0) throw Error(ErrorKind::unsupported, "vertices need no constant");
  if (k < 0 || k > d || d > kMaxDim) throw Error(ErrorKind::parameter_out_of_range, "need 1 <= k <= d <= 4");
  DkEstimate est;
  est.d = d;
  est.k = k;
  est.seed = seed;
  const double prefactor = bp_constant(d, k) / (std::tgamma(k + 2.0) * d * std::pow(unit_ball_volume(d), k));
  if (samples == 0) throw Error(ErrorKind::parameter_out_of_range, "samples must be positive");
  const int power = d - k + 1;
  Moments m = run_batches(samples, seed, 0, workers, parallel, [k, power](Rng& rng) {
    std::array<Vec, kMaxDim + 1> pts;
    for (int i = 0; i <= k; ++i) pts[i] = sphere_point(rng, k);
    std::span<const Vec> s(pts.data(), static_cast<std::size_t>(k + 1));
    if (!origin_inside(s)) return 0.0;
    return std::pow(full_simplex_volume(s), power);
  });
  const double scale = prefactor * std::pow(sphere_area(k), k + 1);
  est.samples = samples;
  est.mean = scale * m.mean;
  est.std_error = scale * m.std_error();
  return est;
}

}  // namespace

DkEstimate estimate_Dk(int d, int k, std::uint64_t samples, std::uint64_t seed, int workers) {
  return estimate_Dk_impl(d, k, samples, seed, workers, true);
}

DkEstimate estimate_Dk_serial(int d, int k, std::uint64_t samples, std::uint64_t seed) {
  return estimate_Dk_impl(d, k, samples, seed, 1, false);
}

double exact_mean_F(double n, int d, int k, double r, double r_max, double Dk) {
  if (k < 1) throw Error(ErrorKind::parameter_out_of_range, "exact_mean_F needs k >= 1");
  const double L = lambda_of(n, d, r);
  const double Lmax = lambda_of(n, d, r_max);
  auto tail = [k](double x) {
    double term = 1.0, sum = 0.0;
    for (int j = 0; j < k; ++j) {
      sum += term;
      term *= x / (j + 1);
    }
    return std::exp(-x) * sum;
  };
  return Dk * std::tgamma(static_cast<double>(k)) * n * (tail(L) - tail(Lmax));
}

double limit_prob_Hk(int d, int k, double lambda, double D) {
  const double mu = D * std::exp(-lambda);
  if (k == d - 1) return std::exp(-mu) * (1.0 + mu);
  return std::exp(-mu);
}

namespace {

BpCheck finish(const Moments& lhs, double lhs_scale, const Moments& rhs, double rhs_scale) {
  BpCheck c;
  c.lhs = lhs.mean * lhs_scale;
  c.lhs_se = lhs.std_error() * lhs_scale;
  c.rhs = rhs.mean * rhs_scale;
  c.rhs_se = rhs.std_error() * rhs_scale;
  if (c.rhs != 0.0) {
    c.rel_error = std::abs(c.lhs - c.rhs) / std::abs(c.rhs);
  } else {
    c.rel_error = c.lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return c;
}

}  // namespace

BpCheck verify_bp_torus(int d, int k, double R, std::uint64_t samples, std::uint64_t seed, BpTestFunction f,
                        int workers) {
  if (k < 1 || k > d || d > kMaxDim) throw Error(ErrorKind::parameter_out_of_range, "need 1 <= k <= d <= 4");
  if (!(R > 0.0 && R <= kDefaultRmax)) throw Error(ErrorKind::parameter_out_of_range, "R must be in (0, r_max]");
  if (f == BpTestFunction::one) throw Error(ErrorKind::unsupported, "f = 1 is not integrable against rho^{dk-1}");
  if (samples == 0) throw Error(ErrorKind::parameter_out_of_range, "samples must be positive");
  const bool zero = f == BpTestFunction::zero;

  Moments lhs = run_batches(samples, seed, 1, workers, true, [d, k, R, zero](Rng& rng) {
    if (zero) return 0.0;
    std::array<Vec, kMaxDim + 1> pts;
    pts[0] = Vec::Zero(d);
    for (int i = 1; i <= k; ++i) pts[i] = sphere_point(rng, d) * (2.0 * R * std::pow(rng.uniform(), 1.0 / d));
    auto cs = try_circumsphere(std::span<const Vec>(pts.data(), static_cast<std::size_t>(k + 1)));
    return (cs && cs->radius <= R) ? 1.0 : 0.0;
  });
  const double lhs_scale = std::pow(unit_ball_volume(d) * std::pow(2.0 * R, d), k);

  Moments rhs = run_batches(samples, seed, 2, workers, true, [d, k, R, zero](Rng& rng) {
    if (zero) return 0.0;
    const double rho = R * rng.uniform();
    const double radial = R * std::pow(rho, d * k - 1);
    if (k == 1) return radial * 2.0 * std::pow(2.0, d) / 4.0;
    std::array<Vec, kMaxDim + 1> th;
    for (int i = 0; i <= k; ++i) th[i] = sphere_point(rng, k);
    return radial * std::pow(full_simplex_volume(std::span<const Vec>(th.data(), static_cast<std::size_t>(k + 1))),
                             d - k + 1);
  });
  const double rhs_scale = bp_constant(d, k) * std::pow(sphere_area(k), k + 1);
  return finish(lhs, lhs_scale, rhs, rhs_scale);
}

BpCheck verify_bp_sphere(int k, std::uint64_t samples, std::uint64_t seed, double t0, BpTestFunction f, int workers) {
  if (k < 2 || k > kMaxDim) throw Error(ErrorKind::parameter_out_of_range, "need 2 <= k <= 4");
  if (samples == 0) throw Error(ErrorKind::parameter_out_of_range, "samples must be positive");
  if (f == BpTestFunction::indicator && !(t0 >= 0.0 && t0 < 1.0)) {
    throw Error(ErrorKind::parameter_out_of_range, "t0 must be in [0, 1)");
  }
  const double lo = f == BpTestFunction::indicator ? t0 : 0.0;
  const bool zero = f == BpTestFunction::zero;

  Moments lhs = run_batches(samples, seed, 1, workers, true, [k, lo, zero](Rng& rng) {
    if (zero) return 0.0;
    std::array<Vec, kMaxDim> th;
    for (int i = 0; i < k; ++i) th[i] = sphere_point(rng, k);
    auto cs = try_circumsphere(std::span<const Vec>(th.data(), static_cast<std::size_t>(k)));
    return (cs && cs->radius >= lo) ? 1.0 : 0.0;
  });
  const double lhs_scale = std::pow(sphere_area(k), k);

  const double u0 = std::asin(lo);
  const double width = std::numbers::pi / 2.0 - u0;
  Moments rhs = run_batches(samples, seed, 2, workers, true, [k, u0, width, zero](Rng& rng) {
    if (zero) return 0.0;
    const double u = u0 + width * rng.uniform();
    const double radial = width * std::pow(std::sin(u), k * k - 2 * k);
    // k points on S^{k-2}, spanning a (k-1)-simplex in R^{k-1}.
    std::array<Vec, kMaxDim> ph;
    for (int i = 0; i < k; ++i) ph[i] = sphere_point(rng, k - 1);
    return radial * full_simplex_volume(std::span<const Vec>(ph.data(), static_cast<std::size_t>(k)));
  });
  const double rhs_scale = std::tgamma(k + 1.0) * unit_ball_volume(k) * std::pow(sphere_area(k - 1), k);
  return finish(lhs, lhs_scale, rhs, rhs_scale);
}

std::vector<double> center_norm_cdf(int k, std::span<const double> alphas, std::uint64_t samples,
                                    std::uint64_t seed) {
  if (k < 2 || k > kMaxDim) throw Error(ErrorKind::parameter_out_of_range, "need 2 <= k <= 4");
  std::vector<double> hits(alphas.size(), 0.0);
  Rng rng(derive_seed(seed, 0, 3));
  std::array<Vec, kMaxDim> th;
  for (std::uint64_t s = 0; s < samples; ++s) {
    for (int i = 0; i < k; ++i) th[i] = sphere_point(rng, k);
    auto cs = try_circumsphere(std::span<const Vec>(th.data(), static_cast<std::size_t>(k)));
    if (!cs) continue;
    const double c = cs->center.norm();
    for (std::size_t a = 0; a < alphas.size(); ++a) hits[a] += c <= alphas[a] ? 1.0 : 0.0;
  }
  for (double& h : hits) h /= static_cast<double>(samples);
  return hits;
}

}  // namespace tml
