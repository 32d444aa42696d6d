#pragma once

// Analytic quantities of the critical window: Lambda, Delta_{k,n}, the
// constants D_k, exact means and limit probabilities, and Monte Carlo
// self-tests of the Blaschke-Petkantschin formulas.

#include "tml/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace tml {

/// Lambda = omega_d n r^d.
double lambda_of(double n, int d, double r);

/// Solves omega_d n r^d = log n + (k-1) log log n + lambda. Throws
/// radius_exceeds_rmax when the radius is above r_max.
double radius_for_lambda(double n, int d, int k, double lambda, double r_max = kDefaultRmax);

/// Delta_{k,n}(r) = n (log n)^{k-1} exp(-omega_d n r^d).
double delta_kn(double n, int d, int k, double r);

/// Omega_k = omega_1 ... omega_k.
double omega_product(int k);
/// Volume of the Grassmannian Gr(d, k).
double grassmannian_volume(int d, int k);
/// (k!)^{d-k+1} Gamma_{d,k}.
double bp_constant(int d, int k);
/// Surface measure of S^{k-1}; 2 for the two-atom sphere S^0.
double sphere_area(int k);

struct DkEstimate {
  int d = 0;
  int k = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
};

/// Monte Carlo over (k+1) uniform points of S^{k-1}: the indicator that the
/// origin lies in their open hull times (simplex volume)^{d-k+1}, scaled to
/// D_k. For k = 1 the four configurations of S^0 are summed exactly.
/// The sample is split into fixed seeded batches merged in index order, so
/// the result does not depend on `workers` (0 = OpenMP default).
DkEstimate estimate_Dk(int d, int k, std::uint64_t samples, std::uint64_t seed, int workers = 0);
/// Single-threaded reference with the same batches; bitwise equal to estimate_Dk.
DkEstimate estimate_Dk_serial(int d, int k, std::uint64_t samples, std::uint64_t seed);

/// D_1 = 2^{d-1}, from the exact sum over S^0.
double D1_closed_form(int d);

/// E F_{k,r} = D_k (k-1)! n (e^{-L} sum_{j<k} L^j/j! - same at L_max).
double exact_mean_F(double n, int d, int k, double r, double r_max, double Dk);

/// exp(-D e^{-lambda}), times (1 + D e^{-lambda}) when k = d-1 (then D = D_d).
double limit_prob_Hk(int d, int k, double lambda, double D);

struct BpCheck {
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double rhs_se = 0.0;
  /// |lhs - rhs| / rhs (0 when both vanish).
  double rel_error = 0.0;
};

enum class BpTestFunction { indicator, zero, one };

/// Both sides of the torus BP formula for f = 1{rho(x) <= R}. The left side
/// fixes x_1 and draws the other k points in B(x_1, 2R); the right side
/// draws rho uniformly on [0, R] and theta on (S^{k-1})^{k+1}.
BpCheck verify_bp_torus(int d, int k, double R, std::uint64_t samples, std::uint64_t seed,
                        BpTestFunction f = BpTestFunction::indicator, int workers = 0);

/// Both sides of the sphere BP formula on (S^{k-1})^k for
/// f = 1{rho(theta) >= t0}.
BpCheck verify_bp_sphere(int k, std::uint64_t samples, std::uint64_t seed, double t0 = 0.5,
                         BpTestFunction f = BpTestFunction::indicator, int workers = 0);

/// Monte Carlo measure of {theta in (S^{k-1})^k : |c(theta)| <= alpha}
/// relative to the total, for several alphas at once from one sample.
std::vector<double> center_norm_cdf(int k, std::span<const double> alphas, std::uint64_t samples,
                                    std::uint64_t seed);

}  // namespace tml
