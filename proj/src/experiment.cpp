#include "tml/experiment.hpp"

#include "tml/cech_complex.hpp"
#include "tml/limit_theory.hpp"
#include "tml/poisson_sampler.hpp"

#include <boost/math/distributions/beta.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace tml {

namespace {

using json = nlohmann::json;

constexpr int kMaxAttempts = 16;
constexpr double kFloorLambda = -4.0;

std::string complex_name(ComplexKind k) { return k == ComplexKind::cech ? "cech" : "delaunay-cech"; }

ComplexKind complex_from(const std::string& s) {
  if (s == "cech") return ComplexKind::cech;
  if (s == "delaunay-cech" || s == "delaunay") return ComplexKind::delaunay_cech;
  throw Error(ErrorKind::config, "unknown complex '" + s + "'");
}

int threshold_degree(int d, int k) { return k == d - 1 ? d : k; }

std::int64_t binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t b = 1;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

// Radius for lambda, 0 when Lambda is not positive and r_max above the cap.
double radius_or_zero(double n, int d, int k, double lambda, double r_max) {
  try {
    return radius_for_lambda(n, d, k, lambda, r_max);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::parameter_out_of_range) return 0.0;
    if (e.kind() == ErrorKind::radius_exceeds_rmax) return r_max;
    throw;
  }
}

std::int64_t count_above(const std::vector<double>& xs, double r) {
  return static_cast<std::int64_t>(xs.end() - std::upper_bound(xs.begin(), xs.end(), r));
}

bool resamplable(ErrorKind k) {
  return k == ErrorKind::degenerate_configuration || k == ErrorKind::ambiguous_boundary ||
         k == ErrorKind::tie_detected;
}

double get_number(const json& j, const char* key) {
  if (!j.at(key).is_number()) throw Error(ErrorKind::config, std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

std::int64_t get_integer(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_integer() && !(v.is_number() && std::floor(v.get<double>()) == v.get<double>())) {
    throw Error(ErrorKind::config, std::string("'") + key + "' must be an integer");
  }
  return v.is_number_integer() ? v.get<std::int64_t>() : static_cast<std::int64_t>(v.get<double>());
}

double nan_safe(double x) { return std::isfinite(x) ? x : 0.0; }

}  // namespace

// ---------------------------------------------------------------------------
// config

void ExperimentConfig::validate() const {
  if (d < 1 || d > kMaxDim) throw Error(ErrorKind::config, "d must be in [1, " + std::to_string(kMaxDim) + "]");
  if (k < 1 || k > d) throw Error(ErrorKind::config, "k must be in [1, d]");
  if (!(n > 1.0)) throw Error(ErrorKind::config, "n must exceed 1");
  if (trials < 1) throw Error(ErrorKind::config, "trials must be at least 1");
  if (r_grid < 2) throw Error(ErrorKind::config, "r_grid must be at least 2");
  if (!(r_max > 0.0 && r_max < 0.25)) throw Error(ErrorKind::config, "r_max must be in (0, 1/4)");
  if (workers < 0) throw Error(ErrorKind::config, "workers must be non-negative");
  if (process_intervals < 1 || !(process_t0 > 0.0)) throw Error(ErrorKind::config, "bad process partition");
  if (r) {
    if (!(*r > 0.0)) throw Error(ErrorKind::config, "r must be positive");
    if (*r > r_max) throw Error(ErrorKind::radius_exceeds_rmax, "r = " + std::to_string(*r) + " above r_max");
    return;
  }
  if (lambdas.empty()) throw Error(ErrorKind::config, "no lambda given");
  for (double l : lambdas) {
    try {
      radius_for_lambda(n, d, k, l, r_max);
      radius_for_lambda(n, d, threshold_degree(d, k), l, r_max);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::radius_exceeds_rmax) {
        throw Error(ErrorKind::radius_exceeds_rmax, "lambda = " + std::to_string(l) + " gives a radius above r_max");
      }
      throw Error(ErrorKind::config, std::string("lambda = ") + std::to_string(l) + ": " + e.what());
    }
  }
}

ExperimentConfig config_from_json(const json& j, ExperimentConfig c) {
  if (!j.is_object()) throw Error(ErrorKind::config, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "d") c.d = static_cast<int>(get_integer(j, "d"));
      else if (key == "k") c.k = static_cast<int>(get_integer(j, "k"));
      else if (key == "n") c.n = get_number(j, "n");
      else if (key == "lambda") {
        c.lambdas.clear();
        if (v.is_array()) {
          for (const json& x : v) c.lambdas.push_back(x.get<double>());
        } else {
          c.lambdas.push_back(get_number(j, "lambda"));
        }
      } else if (key == "r") {
        if (v.is_null()) c.r.reset();
        else c.r = get_number(j, "r");
      } else if (key == "trials") c.trials = static_cast<int>(get_integer(j, "trials"));
      else if (key == "seed") c.seed = static_cast<std::uint64_t>(get_integer(j, "seed"));
      else if (key == "r_grid") c.r_grid = static_cast<int>(get_integer(j, "r_grid"));
      else if (key == "r_max") c.r_max = get_number(j, "r_max");
      else if (key == "out") c.out = v.get<std::string>();
      else if (key == "workers") c.workers = static_cast<int>(get_integer(j, "workers"));
      else if (key == "complex") c.complex = complex_from(v.get<std::string>());
      else if (key == "dk_samples") c.dk_samples = static_cast<std::uint64_t>(get_integer(j, "dk_samples"));
      else if (key == "process_t0") c.process_t0 = get_number(j, "process_t0");
      else if (key == "process_intervals") c.process_intervals = static_cast<int>(get_integer(j, "process_intervals"));
      else throw Error(ErrorKind::config, "unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, e.what());
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["d"] = c.d;
  j["k"] = c.k;
  j["n"] = c.n;
  j["lambda"] = c.lambdas;
  j["r"] = c.r ? json(*c.r) : json(nullptr);
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["r_grid"] = c.r_grid;
  j["r_max"] = c.r_max;
  j["complex"] = complex_name(c.complex);
  j["dk_samples"] = c.dk_samples;
  j["process_t0"] = c.process_t0;
  j["process_intervals"] = c.process_intervals;
  return j;
}

// ---------------------------------------------------------------------------
// trials

std::int64_t TrialRecord::count_pos(int dim, double r) const {
  if (dim < 0 || dim >= static_cast<int>(pos.size())) return 0;
  return count_above(pos[static_cast<std::size_t>(dim)], r);
}

std::int64_t TrialRecord::count_neg(int dim, double r) const {
  if (dim < 0 || dim >= static_cast<int>(neg.size())) return 0;
  return count_above(neg[static_cast<std::size_t>(dim)], r);
}

std::int64_t TrialRecord::count(int dim, double r) const { return count_pos(dim, r) + count_neg(dim, r); }

PairingFraction TrialRecord::pairing(int k, double r) const {
  PairingFraction pf;
  const int j = k + 1;
  if (j >= static_cast<int>(neg.size())) return pf;
  const auto& radii = neg[static_cast<std::size_t>(j)];
  const auto& paired = neg_paired[static_cast<std::size_t>(j)];
  for (auto it = std::upper_bound(radii.begin(), radii.end(), r); it != radii.end(); ++it) {
    ++pf.negatives;
    if (paired[static_cast<std::size_t>(it - radii.begin())]) ++pf.paired;
  }
  if (pf.negatives > 0) pf.fraction = static_cast<double>(pf.paired) / static_cast<double>(pf.negatives);
  return pf;
}

TrialSpec make_trial_spec(const ExperimentConfig& c) {
  TrialSpec s;
  s.d = c.d;
  s.n = c.n;
  s.r_max = c.r_max;
  s.complex = c.complex;
  double floor_lambda = std::min(kFloorLambda, -std::log(c.process_t0) - 1.0);
  for (double l : c.lambdas) floor_lambda = std::min(floor_lambda, l - 1.0);
  double floor = c.r_max;
  for (int j = 1; j <= c.d; ++j) floor = std::min(floor, radius_or_zero(c.n, c.d, j, floor_lambda, c.r_max));
  if (c.r) floor = std::min(floor, *c.r);
  const double lo = radius_or_zero(c.n, c.d, c.k, -3.0, c.r_max);
  s.r_floor = std::min(floor, lo);
  s.r_grid.resize(static_cast<std::size_t>(c.r_grid));
  for (int i = 0; i < c.r_grid; ++i) {
    s.r_grid[static_cast<std::size_t>(i)] = lo + (c.r_max - lo) * i / (c.r_grid - 1);
  }
  return s;
}

Filtration build_trial_filtration(const TrialSpec& spec, const TorusPointCloud& cloud) {
  if (spec.complex == ComplexKind::cech) return build_filtration(cloud, spec.d + 1, spec.r_max);
  try {
    return build_delaunay_cech_filtration(cloud, spec.r_max);
  } catch (const Error& e) {
    // sparse clouds leave Delaunay cells too large for the torus
    if (e.kind() != ErrorKind::not_covered) throw;
    return build_filtration(cloud, spec.d + 1, spec.r_max);
  }
}

namespace {

// Equal doubles can hide a positive length: when the extra vertex of the
// death simplex is just outside the birth ball, the radius gap is second
// order in that distance and rounds away.
bool tied_but_distinct(const Filtration& f, const TorusPointCloud& cloud, std::uint32_t birth, std::uint32_t death) {
  const auto bv = f[birth].vertices();
  const auto dv = f[death].vertices();
  if (!std::includes(dv.begin(), dv.end(), bv.begin(), bv.end())) return false;
  const std::vector<Vec> pts = lift_simplex(cloud, dv);
  std::vector<Vec> inner, extra;
  for (std::size_t i = 0; i < dv.size(); ++i) {
    if (std::binary_search(bv.begin(), bv.end(), dv[i])) {
      inner.push_back(pts[i]);
    } else {
      extra.push_back(pts[i]);
    }
  }
  const Ball b = min_enclosing_ball(inner);
  for (const Vec& p : extra) {
    if ((p - b.center).norm() > b.radius * (1.0 + 1e-12)) return true;
  }
  return false;
}

void check_invariants(const Filtration& f, const TorusPointCloud& cloud, std::span<const CriticalFace> cr,
                      const Persistence& pers, bool covered, InvariantReport& inv) {
  const int d = cloud.dim();
  auto fail = [&](std::string msg) {
    ++inv.violations;
    if (inv.messages.size() < 8) inv.messages.push_back(std::move(msg));
  };
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i].dim == 0) continue;
    for (std::uint32_t b : f.boundary(i)) {
      if (b >= i || f[b].value > f[i].value) fail("facet order broken at simplex " + std::to_string(i));
    }
  }
  for (const CriticalFace& c : cr) {
    if (c.sign == Sign::unset) fail("unsigned critical face " + std::to_string(c.simplex));
    if (c.dim == 0) continue;
    const auto ids = f[c.simplex].vertices();
    const std::vector<Vec> pts = lift_simplex(cloud, ids);
    const Circumsphere cs = circumsphere(pts);
    for (const Vec& p : pts) {
      const double e = std::abs((p - cs.center).norm() - cs.radius) / cs.radius;
      inv.max_equidistance = std::max(inv.max_equidistance, e);
      if (e > 1e-9) fail("circumsphere residual " + std::to_string(e));
    }
  }
  if (covered) {
    inv.euler = euler_alternating_sum(cr, covered);
    if (inv.euler != 0) fail("Euler sum " + std::to_string(inv.euler));
    const FaceCounts fc = classify_and_count(cr, -1.0);
    for (int k = 0; k <= d; ++k) {
      const std::int64_t diff = fc.positive[static_cast<std::size_t>(k)] - fc.negative[static_cast<std::size_t>(k + 1)];
      if (diff != binom(d, k)) fail("pos_" + std::to_string(k) + " - neg_" + std::to_string(k + 1) + " = " + std::to_string(diff));
    }
  }
  // simplices in pairs of positive length are exactly the critical faces
  std::vector<std::uint32_t> crit;
  crit.reserve(cr.size());
  for (const CriticalFace& c : cr) crit.push_back(c.simplex);
  auto is_crit = [&](std::uint32_t x) { return std::binary_search(crit.begin(), crit.end(), x); };
  std::vector<std::uint32_t> events;
  for (const PersistencePair& p : pers.pairs) {
    if (p.degree > d) continue;
    if (p.death == kEssential) {
      events.push_back(p.birth);
      continue;
    }
    const auto death = static_cast<std::uint32_t>(p.death);
    // a tie is only trusted between two critical faces; elsewhere the float
    // order may pair differently from the exact one
    if (f[death].value > f[p.birth].value ||
        (is_crit(p.birth) && is_crit(death) && tied_but_distinct(f, cloud, p.birth, death))) {
      events.push_back(p.birth);
      events.push_back(death);
    }
  }
  std::sort(events.begin(), events.end());
  if (covered && events != crit) {
    std::vector<std::uint32_t> odd;
    std::set_symmetric_difference(events.begin(), events.end(), crit.begin(), crit.end(), std::back_inserter(odd));
    std::ostringstream o;
    for (std::size_t i = 0; i < std::min<std::size_t>(odd.size(), 4); ++i) {
      o << ' ' << odd[i] << "(dim " << f[odd[i]].dim << ", r " << f[odd[i]].value << ')';
    }
    fail("persistence events (" + std::to_string(events.size()) + ") differ from critical faces (" +
         std::to_string(crit.size()) + "):" + o.str());
  }
}

std::vector<std::vector<std::int64_t>> betti_on_grid(const Filtration& f, const Persistence& pers, int d,
                                                     std::span<const double> grid) {
  const std::size_t g = grid.size();
  std::vector<std::vector<std::int64_t>> diff(static_cast<std::size_t>(d + 1), std::vector<std::int64_t>(g + 1, 0));
  for (const PersistencePair& p : pers.pairs) {
    if (p.degree > d) continue;
    const double b = f[p.birth].value;
    const double e = p.death == kEssential ? INFINITY : f[static_cast<std::size_t>(p.death)].value;
    if (!(e > b)) continue;
    const std::size_t i0 = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), b) - grid.begin());
    const std::size_t i1 = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), e) - grid.begin());
    if (i0 >= i1) continue;
    diff[static_cast<std::size_t>(p.degree)][i0] += 1;
    diff[static_cast<std::size_t>(p.degree)][i1] -= 1;
  }
  std::vector<std::vector<std::int64_t>> out(g, std::vector<std::int64_t>(static_cast<std::size_t>(d + 1), 0));
  for (int k = 0; k <= d; ++k) {
    std::int64_t run = 0;
    for (std::size_t i = 0; i < g; ++i) {
      run += diff[static_cast<std::size_t>(k)][i];
      out[i][static_cast<std::size_t>(k)] = run;
    }
  }
  return out;
}

}  // namespace

TrialRecord analyze_cloud(const TrialSpec& spec, const TorusPointCloud& cloud) {
  const int d = spec.d;
  TrialRecord rec;
  rec.seed = cloud.seed();
  rec.points = cloud.size();
  rec.r_floor = spec.r_floor;
  const Filtration f = build_trial_filtration(spec, cloud);
  std::vector<CriticalFace> cr = detect_critical_faces(f, cloud);
  const Persistence pers = reduce_persistence(f);
  assign_signs(cr, pers);
  rec.covered = is_covered(f, pers);
  if (rec.covered) {
    const HittingTimes ht = hitting_times(f, pers, cr, cloud);
    rec.T = ht.T;
    rec.T_iso = ht.T_iso;
    rec.never_joined = ht.never_joined;
    rec.coverage = ht.coverage_radius;
  }
  check_invariants(f, cloud, cr, pers, rec.covered, rec.invariants);

  const std::size_t dims = static_cast<std::size_t>(d + 2);
  rec.pos.assign(dims, {});
  rec.neg.assign(dims, {});
  rec.neg_paired.assign(dims, {});
  std::vector<std::vector<std::pair<double, char>>> negs(dims);
  auto find_critical = [&](std::int64_t simplex) -> const CriticalFace* {
    auto it = std::lower_bound(cr.begin(), cr.end(), simplex,
                               [](const CriticalFace& c, std::int64_t s) { return c.simplex < s; });
    return it != cr.end() && it->simplex == simplex ? &*it : nullptr;
  };
  for (const CriticalFace& c : cr) {
    if (!(c.rho > spec.r_floor)) continue;
    const std::size_t k = static_cast<std::size_t>(c.dim);
    if (c.sign == Sign::positive) {
      rec.pos[k].push_back(c.rho);
    } else {
      const CriticalFace* nf = find_critical(c.nearest_facet);
      negs[k].emplace_back(c.rho, static_cast<char>(nf != nullptr && nf->sign == Sign::positive));
    }
  }
  for (std::size_t k = 0; k < dims; ++k) {
    std::sort(rec.pos[k].begin(), rec.pos[k].end());
    std::sort(negs[k].begin(), negs[k].end());
    for (const auto& [rho, paired] : negs[k]) {
      rec.neg[k].push_back(rho);
      rec.neg_paired[k].push_back(paired);
    }
  }
  rec.betti = betti_on_grid(f, pers, d, spec.r_grid);
  return rec;
}

TrialRecord run_trial(const TrialSpec& spec, std::uint64_t master_seed, std::uint64_t index,
                      std::vector<Rejection>* rejections) {
  std::string last;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t seed = derive_seed(master_seed, index, static_cast<std::uint64_t>(attempt));
    try {
      const TorusPointCloud cloud = sample(spec.n, spec.d, seed, spec.r_max);
      TrialRecord rec = analyze_cloud(spec, cloud);
      rec.index = index;
      rec.attempts = attempt;
      return rec;
    } catch (const Error& e) {
      if (!resamplable(e.kind())) throw;
      last = e.what();
      if (rejections) rejections->push_back({index, attempt, seed, e.what()});
    }
  }
  throw Error(ErrorKind::degenerate_configuration,
              "trial " + std::to_string(index) + " rejected " + std::to_string(kMaxAttempts) + " times; last: " + last);
}

// ---------------------------------------------------------------------------
// statistics

SampleSummary summarize(std::span<const double> xs) {
  SampleSummary s;
  s.count = static_cast<std::int64_t>(xs.size());
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.var = ss / static_cast<double>(xs.size() - 1);
    s.se = std::sqrt(s.var / static_cast<double>(xs.size()));
  }
  return s;
}

PoissonFit poisson_fit(std::span<const double> samples, double mu) {
  PoissonFit fit;
  if (samples.empty()) return fit;
  std::size_t top = 0;
  for (double x : samples) top = std::max(top, static_cast<std::size_t>(std::llround(x)));
  fit.pmf.assign(top + 1, 0.0);
  for (double x : samples) fit.pmf[static_cast<std::size_t>(std::llround(x))] += 1.0;
  const double m = static_cast<double>(samples.size());
  for (double& p : fit.pmf) p /= m;
  double tv = 0.0, mass = 0.0;
  for (std::size_t j = 0; j <= top; ++j) {
    const double pj = std::exp(-mu + static_cast<double>(j) * std::log(mu) - std::lgamma(j + 1.0));
    const double p = mu > 0.0 ? pj : (j == 0 ? 1.0 : 0.0);
    mass += p;
    tv += std::abs(fit.pmf[j] - p);
  }
  tv += std::max(0.0, 1.0 - mass);
  fit.tv = std::clamp(0.5 * tv, 0.0, 1.0);
  const SampleSummary s = summarize(samples);
  fit.mean_ratio = mu > 0.0 ? s.mean / mu : 0.0;
  fit.var_ratio = mu > 0.0 ? s.var / mu : 0.0;
  return fit;
}

ProcessFit process_fit(std::span<const TrialRecord> trials, int k, double n, int d, double Dk, double t0,
                       int intervals) {
  ProcessFit pf;
  pf.k = k;
  pf.t0 = t0;
  const std::size_t m = static_cast<std::size_t>(intervals);
  for (std::size_t i = 0; i <= m; ++i) pf.edges.push_back(t0 * static_cast<double>(i) / static_cast<double>(m));
  std::vector<std::vector<double>> counts(m);
  for (const TrialRecord& t : trials) {
    if (!t.covered) continue;
    std::vector<double> c(m, 0.0);
    for (const auto* list : {&t.pos, &t.neg}) {
      if (k >= static_cast<int>(list->size())) continue;
      for (double rho : (*list)[static_cast<std::size_t>(k)]) {
        const double x = delta_kn(n, d, k, rho);
        if (x > t0) continue;
        std::size_t i = static_cast<std::size_t>(x / t0 * static_cast<double>(m));
        c[std::min(i, m - 1)] += 1.0;
      }
    }
    for (std::size_t i = 0; i < m; ++i) counts[i].push_back(c[i]);
  }
  pf.corr.assign(m, std::vector<double>(m, 0.0));
  std::vector<SampleSummary> sums;
  for (std::size_t i = 0; i < m; ++i) {
    const SampleSummary s = summarize(counts[i]);
    sums.push_back(s);
    pf.mean.push_back(s.mean);
    pf.se.push_back(s.se);
    pf.expected.push_back(Dk * (pf.edges[i + 1] - pf.edges[i]));
    pf.var_ratio.push_back(s.mean > 0.0 ? s.var / s.mean : 0.0);
  }
  const std::size_t T = counts.empty() ? 0 : counts[0].size();
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b) {
        pf.corr[a][b] = 1.0;
        continue;
      }
      double cov = 0.0;
      for (std::size_t t = 0; t < T; ++t) cov += (counts[a][t] - sums[a].mean) * (counts[b][t] - sums[b].mean);
      const double den = std::sqrt(sums[a].var * sums[b].var);
      pf.corr[a][b] = T > 1 && den > 0.0 ? cov / static_cast<double>(T - 1) / den : 0.0;
      pf.max_abs_corr = std::max(pf.max_abs_corr, std::abs(pf.corr[a][b]));
    }
  }
  return pf;
}

HittingFit hitting_time_fit(std::span<const TrialRecord> trials, double n, int d, int k, double D) {
  HittingFit h;
  h.k = k;
  const bool gamma = k == d - 1;
  h.law = gamma ? "gamma2" : "exponential";
  h.target_mean = gamma ? 2.0 / D : 1.0 / D;
  const int j = threshold_degree(d, k);
  const double shift = std::log(n) + (j - 1) * std::log(std::log(n));
  std::vector<double> xs;
  std::int64_t equal = 0;
  for (const TrialRecord& t : trials) {
    if (!t.covered) continue;
    const double T = t.T[static_cast<std::size_t>(k)];
    xs.push_back(std::exp(-n * unit_ball_volume(d) * std::pow(T, d) + shift));
    if (std::abs(T - t.T_iso[static_cast<std::size_t>(k)]) <= 1e-9 * T) ++equal;
  }
  const SampleSummary s = summarize(xs);
  h.samples = s.count;
  h.mean = s.mean;
  h.se = s.se;
  if (xs.empty()) return h;
  h.iso_equal_freq = static_cast<double>(equal) / static_cast<double>(xs.size());
  std::sort(xs.begin(), xs.end());
  auto cdf = [&](double x) { return gamma ? 1.0 - std::exp(-D * x) * (1.0 + D * x) : 1.0 - std::exp(-D * x); };
  const double m = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    h.ks = std::max({h.ks, std::abs(F - static_cast<double>(i) / m), std::abs(static_cast<double>(i + 1) / m - F)});
  }
  return h;
}

std::pair<double, double> binomial_interval(std::int64_t successes, std::int64_t trials, double level) {
  if (trials <= 0 || successes < 0 || successes > trials || !(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::parameter_out_of_range, "binomial_interval arguments");
  }
  const double a = 0.5 * (1.0 - level);
  const double x = static_cast<double>(successes), m = static_cast<double>(trials);
  const double lo = successes == 0 ? 0.0 : boost::math::quantile(boost::math::beta_distribution<>(x, m - x + 1.0), a);
  const double hi =
      successes == trials ? 1.0 : boost::math::quantile(boost::math::beta_distribution<>(x + 1.0, m - x), 1.0 - a);
  return {lo, hi};
}

LambdaStats lambda_stats(std::span<const TrialRecord> trials, const ExperimentConfig& c, double lambda,
                         std::span<const double> Dk) {
  const int d = c.d, k = c.k;
  const int j = threshold_degree(d, k);
  LambdaStats s;
  s.lambda = lambda;
  if (c.r) {
    s.r = s.r_h = *c.r;
    s.lambda = lambda_of(c.n, d, *c.r) - std::log(c.n) - (k - 1) * std::log(std::log(c.n));
  } else {
    s.r = radius_for_lambda(c.n, d, k, lambda, c.r_max);
    s.r_h = radius_for_lambda(c.n, d, j, lambda, c.r_max);
  }
  std::vector<double> F, Fp, Fn, Fo, frac;
  std::int64_t hits = 0, equal = 0;
  for (const TrialRecord& t : trials) {
    F.push_back(static_cast<double>(t.count(k, s.r)));
    Fp.push_back(static_cast<double>(t.count_pos(k, s.r)));
    Fn.push_back(static_cast<double>(t.count_neg(k, s.r)));
    const PairingFraction pf = t.pairing(k, s.r);
    Fo.push_back(static_cast<double>(pf.paired));
    frac.push_back(pf.fraction);
    if (t.count_pos(k, s.r) == t.count_neg(k + 1, s.r)) ++equal;
    if (t.covered) {
      ++s.covered;
      if (t.T[static_cast<std::size_t>(k)] <= s.r_h) ++hits;
    }
  }
  s.F = summarize(F);
  s.F_pos = summarize(Fp);
  s.F_neg = summarize(Fn);
  s.F_of = summarize(Fo);
  const double D = Dk[static_cast<std::size_t>(k)];
  s.exact_mean = exact_mean_F(c.n, d, k, s.r, c.r_max, D);
  s.mu = D * std::exp(-s.lambda);
  s.fit = poisson_fit(F, s.mu);
  const double m = trials.empty() ? 1.0 : static_cast<double>(trials.size());
  s.p_H = static_cast<double>(hits) / m;
  s.p_H_limit = limit_prob_Hk(d, k, s.lambda, Dk[static_cast<std::size_t>(j)]);
  s.pairing_fraction = summarize(frac).mean;
  s.pos_eq_neg_freq = static_cast<double>(equal) / m;
  return s;
}

std::vector<DkEstimate> dk_table(int d, std::uint64_t samples, std::uint64_t seed, int workers) {
  std::vector<DkEstimate> out;
  // D_1 in closed form
  out.push_back({d, 1, D1_closed_form(d), 0.0, 0, seed});
  for (int k = 2; k <= d; ++k) {
    out.push_back(estimate_Dk(d, k, samples, derive_seed(seed, 0x446b, static_cast<std::uint64_t>(k)), workers));
  }
  return out;
}

AggregateStats aggregate(const ExperimentConfig& c, std::span<const TrialRecord> trials,
                         std::span<const Rejection> rejections, std::span<const DkEstimate> dk) {
  AggregateStats s;
  s.trials = static_cast<std::int64_t>(trials.size());
  s.rejected = static_cast<std::int64_t>(rejections.size());
  s.Dk.assign(static_cast<std::size_t>(c.d + 1), 0.0);
  s.Dk_se.assign(static_cast<std::size_t>(c.d + 1), 0.0);
  for (const DkEstimate& e : dk) {
    s.Dk[static_cast<std::size_t>(e.k)] = e.mean;
    s.Dk_se[static_cast<std::size_t>(e.k)] = e.std_error;
  }
  for (const TrialRecord& t : trials) {
    s.covered += t.covered ? 1 : 0;
    s.invariant_violations += t.invariants.violations;
  }
  if (c.r) {
    s.per_lambda.push_back(lambda_stats(trials, c, 0.0, s.Dk));
  } else {
    std::vector<double> ls = c.lambdas;
    std::sort(ls.begin(), ls.end());
    for (double l : ls) s.per_lambda.push_back(lambda_stats(trials, c, l, s.Dk));
  }
  s.hitting = hitting_time_fit(trials, c.n, c.d, c.k, s.Dk[static_cast<std::size_t>(threshold_degree(c.d, c.k))]);
  s.process = process_fit(trials, c.k, c.n, c.d, s.Dk[static_cast<std::size_t>(c.k)], c.process_t0, c.process_intervals);
  const TrialSpec spec = make_trial_spec(c);
  s.r_grid = spec.r_grid;
  const std::size_t g = s.r_grid.size();
  s.betti_mean.assign(static_cast<std::size_t>(c.d + 1), std::vector<double>(g, 0.0));
  s.F_mean.assign(g, 0.0);
  if (!trials.empty()) {
    const double m = static_cast<double>(trials.size());
    for (const TrialRecord& t : trials) {
      for (std::size_t i = 0; i < g; ++i) {
        for (int k = 0; k <= c.d; ++k) {
          s.betti_mean[static_cast<std::size_t>(k)][i] += static_cast<double>(t.betti[i][static_cast<std::size_t>(k)]);
        }
        s.F_mean[i] += static_cast<double>(t.count(c.k, s.r_grid[i]));
      }
    }
    for (auto& row : s.betti_mean) for (double& x : row) x /= m;
    for (double& x : s.F_mean) x /= m;
  }
  return s;
}

namespace {

ExperimentResult run_impl(const ExperimentConfig& c, bool serial) {
  c.validate();
  ExperimentResult res;
  res.config = c;
  const TrialSpec spec = make_trial_spec(c);
  const int T = c.trials;
  res.trials.resize(static_cast<std::size_t>(T));
  std::vector<std::vector<Rejection>> rej(static_cast<std::size_t>(T));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(T));
  auto one = [&](int i) {
    try {
      res.trials[static_cast<std::size_t>(i)] =
          run_trial(spec, c.seed, static_cast<std::uint64_t>(i), &rej[static_cast<std::size_t>(i)]);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  if (serial) {
    for (int i = 0; i < T; ++i) one(i);
  } else {
    const int w = c.workers > 0 ? c.workers : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(w)
    for (int i = 0; i < T; ++i) one(i);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& r : rej) res.rejections.insert(res.rejections.end(), r.begin(), r.end());
  const double attempts = static_cast<double>(T + static_cast<int>(res.rejections.size()));
  if (!res.rejections.empty() && static_cast<double>(res.rejections.size()) / attempts >= 1e-3) {
    std::ostringstream msg;
    msg << res.rejections.size() << " rejected clouds in " << attempts << " attempts";
    for (std::size_t i = 0; i < std::min<std::size_t>(res.rejections.size(), 10); ++i) {
      const Rejection& r = res.rejections[i];
      msg << "\n  trial " << r.trial << " attempt " << r.attempt << " seed " << r.seed << ": " << r.reason;
    }
    throw Error(ErrorKind::degenerate_configuration, msg.str());
  }
  const std::vector<DkEstimate> dk = dk_table(c.d, c.dk_samples, c.seed, serial ? 1 : c.workers);
  res.stats = aggregate(c, res.trials, res.rejections, dk);
  return res;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& c) { return run_impl(c, false); }
ExperimentResult run_experiment_serial(const ExperimentConfig& c) { return run_impl(c, true); }

RunVerdict evaluate_run(const ExperimentResult& r) {
  RunVerdict v;
  auto fail = [&](std::string m) {
    v.pass = false;
    v.failures.push_back(std::move(m));
  };
  if (r.stats.invariant_violations > 0) {
    fail(std::to_string(r.stats.invariant_violations) + " invariant violations");
  }
  for (const LambdaStats& s : r.stats.per_lambda) {
    const double tol = 3.0 * s.F.se;
    if (std::abs(s.F.mean - s.exact_mean) > tol && s.F.count > 1) {
      std::ostringstream m;
      m << "lambda " << s.lambda << ": mean F " << s.F.mean << " vs exact " << s.exact_mean << " (3 SE = " << tol << ")";
      fail(m.str());
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// reports

namespace {

json to_json(const SampleSummary& s) { return {{"count", s.count}, {"mean", s.mean}, {"var", s.var}, {"se", s.se}}; }

SampleSummary summary_from(const json& j) {
  return {j.at("count").get<std::int64_t>(), j.at("mean").get<double>(), j.at("var").get<double>(),
          j.at("se").get<double>()};
}

}  // namespace

json to_json(const AggregateStats& s) {
  json j;
  j["trials"] = s.trials;
  j["covered"] = s.covered;
  j["rejected"] = s.rejected;
  j["invariant_violations"] = s.invariant_violations;
  j["Dk"] = s.Dk;
  j["Dk_se"] = s.Dk_se;
  json pl = json::array();
  for (const LambdaStats& l : s.per_lambda) {
    pl.push_back({{"lambda", l.lambda},
                  {"r", l.r},
                  {"r_h", l.r_h},
                  {"F", to_json(l.F)},
                  {"F_pos", to_json(l.F_pos)},
                  {"F_neg", to_json(l.F_neg)},
                  {"F_of", to_json(l.F_of)},
                  {"exact_mean", l.exact_mean},
                  {"mu", l.mu},
                  {"tv", l.fit.tv},
                  {"mean_ratio", l.fit.mean_ratio},
                  {"var_ratio", l.fit.var_ratio},
                  {"pmf", l.fit.pmf},
                  {"covered", l.covered},
                  {"p_H", l.p_H},
                  {"p_H_limit", l.p_H_limit},
                  {"pairing_fraction", l.pairing_fraction},
                  {"pos_eq_neg_freq", l.pos_eq_neg_freq}});
  }
  j["per_lambda"] = pl;
  const HittingFit& h = s.hitting;
  j["hitting"] = {{"k", h.k},           {"law", h.law}, {"samples", h.samples},
                  {"mean", h.mean},     {"se", h.se},   {"target_mean", h.target_mean},
                  {"ks", h.ks},         {"iso_equal_freq", h.iso_equal_freq}};
  const ProcessFit& p = s.process;
  j["process"] = {{"k", p.k},       {"t0", p.t0},       {"edges", p.edges},         {"mean", p.mean},
                  {"se", p.se},     {"expected", p.expected}, {"var_ratio", p.var_ratio}, {"corr", p.corr},
                  {"max_abs_corr", p.max_abs_corr}};
  j["r_grid"] = s.r_grid;
  j["betti_mean"] = s.betti_mean;
  j["F_mean"] = s.F_mean;
  return j;
}

AggregateStats aggregate_from_json(const json& j) {
  AggregateStats s;
  try {
    s.trials = j.at("trials").get<std::int64_t>();
    s.covered = j.at("covered").get<std::int64_t>();
    s.rejected = j.at("rejected").get<std::int64_t>();
    s.invariant_violations = j.at("invariant_violations").get<std::int64_t>();
    s.Dk = j.at("Dk").get<std::vector<double>>();
    s.Dk_se = j.at("Dk_se").get<std::vector<double>>();
    for (const json& x : j.at("per_lambda")) {
      LambdaStats l;
      l.lambda = x.at("lambda").get<double>();
      l.r = x.at("r").get<double>();
      l.r_h = x.at("r_h").get<double>();
      l.F = summary_from(x.at("F"));
      l.F_pos = summary_from(x.at("F_pos"));
      l.F_neg = summary_from(x.at("F_neg"));
      l.F_of = summary_from(x.at("F_of"));
      l.exact_mean = x.at("exact_mean").get<double>();
      l.mu = x.at("mu").get<double>();
      l.fit.tv = x.at("tv").get<double>();
      l.fit.mean_ratio = x.at("mean_ratio").get<double>();
      l.fit.var_ratio = x.at("var_ratio").get<double>();
      l.fit.pmf = x.at("pmf").get<std::vector<double>>();
      l.covered = x.at("covered").get<std::int64_t>();
      l.p_H = x.at("p_H").get<double>();
      l.p_H_limit = x.at("p_H_limit").get<double>();
      l.pairing_fraction = x.at("pairing_fraction").get<double>();
      l.pos_eq_neg_freq = x.at("pos_eq_neg_freq").get<double>();
      s.per_lambda.push_back(std::move(l));
    }
    const json& h = j.at("hitting");
    s.hitting.k = h.at("k").get<int>();
    s.hitting.law = h.at("law").get<std::string>();
    s.hitting.samples = h.at("samples").get<std::int64_t>();
    s.hitting.mean = h.at("mean").get<double>();
    s.hitting.se = h.at("se").get<double>();
    s.hitting.target_mean = h.at("target_mean").get<double>();
    s.hitting.ks = h.at("ks").get<double>();
    s.hitting.iso_equal_freq = h.at("iso_equal_freq").get<double>();
    const json& p = j.at("process");
    s.process.k = p.at("k").get<int>();
    s.process.t0 = p.at("t0").get<double>();
    s.process.edges = p.at("edges").get<std::vector<double>>();
    s.process.mean = p.at("mean").get<std::vector<double>>();
    s.process.se = p.at("se").get<std::vector<double>>();
    s.process.expected = p.at("expected").get<std::vector<double>>();
    s.process.var_ratio = p.at("var_ratio").get<std::vector<double>>();
    s.process.corr = p.at("corr").get<std::vector<std::vector<double>>>();
    s.process.max_abs_corr = p.at("max_abs_corr").get<double>();
    s.r_grid = j.at("r_grid").get<std::vector<double>>();
    s.betti_mean = j.at("betti_mean").get<std::vector<std::vector<double>>>();
    s.F_mean = j.at("F_mean").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("malformed report: ") + e.what());
  }
  return s;
}

json report_json(const ExperimentResult& r) {
  json j;
  j["schema"] = 1;
  j["software_version"] = kSoftwareVersion;
  j["master_seed"] = r.config.seed;
  j["config"] = to_json(r.config);
  j["stats"] = to_json(r.stats);
  json rej = json::array();
  for (const Rejection& x : r.rejections) {
    rej.push_back({{"trial", x.trial}, {"attempt", x.attempt}, {"seed", x.seed}, {"reason", x.reason}});
  }
  j["rejections"] = rej;
  const RunVerdict v = evaluate_run(r);
  j["pass"] = v.pass;
  j["failures"] = v.failures;
  return j;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::io_failure, "cannot write " + p.string());
  out.precision(17);
  return out;
}

void two_column(const std::filesystem::path& p, const char* xs, const char* ys, std::vector<std::pair<double, double>> rows) {
  std::sort(rows.begin(), rows.end());
  std::ofstream out = open_out(p);
  out << xs << ',' << ys << '\n';
  for (const auto& [x, y] : rows) out << x << ',' << nan_safe(y) << '\n';
}

void require_dir(const std::string& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(ErrorKind::io_failure, "output directory missing: " + dir);
}

}  // namespace

void write_curves(const AggregateStats& s, const std::string& dir, int k) {
  require_dir(dir);
  const std::filesystem::path base(dir);
  for (std::size_t deg = 0; deg < s.betti_mean.size(); ++deg) {
    std::vector<std::pair<double, double>> rows;
    for (std::size_t i = 0; i < s.r_grid.size(); ++i) rows.emplace_back(s.r_grid[i], s.betti_mean[deg][i]);
    two_column(base / ("betti_" + std::to_string(deg) + ".csv"), "r", ("beta_" + std::to_string(deg)).c_str(), rows);
  }
  std::vector<std::pair<double, double>> f, emp, th;
  for (std::size_t i = 0; i < s.r_grid.size(); ++i) f.emplace_back(s.r_grid[i], s.F_mean[i]);
  for (const LambdaStats& l : s.per_lambda) {
    emp.emplace_back(l.lambda, l.p_H);
    th.emplace_back(l.lambda, l.p_H_limit);
  }
  two_column(base / ("F_" + std::to_string(k) + "_vs_r.csv"), "r", "mean_F", f);
  two_column(base / "p_H_empirical.csv", "lambda", "p_H", emp);
  two_column(base / "p_H_limit.csv", "lambda", "p_H", th);
}

void emit_report(const ExperimentResult& r, const std::string& dir) {
  require_dir(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream out = open_out(base / "report.json");
    out << report_json(r).dump(2) << '\n';
    if (!out) throw Error(ErrorKind::io_failure, "write failed: " + (base / "report.json").string());
  }
  {
    const ExperimentConfig& c = r.config;
    std::ofstream out = open_out(base / "trials.csv");
    out << "trial,seed,attempts,points,covered,coverage";
    for (int k = 0; k <= c.d; ++k) out << ",T" << k;
    for (int k = 0; k <= c.d; ++k) out << ",T_iso" << k;
    for (const LambdaStats& l : r.stats.per_lambda) out << ",F(" << l.lambda << "),F_pos(" << l.lambda << "),F_neg(" << l.lambda << ')';
    out << ",violations\n";
    for (const TrialRecord& t : r.trials) {
      out << t.index << ',' << t.seed << ',' << t.attempts << ',' << t.points << ',' << (t.covered ? 1 : 0) << ','
          << t.coverage;
      for (int k = 0; k <= c.d; ++k) out << ',' << (t.covered ? t.T[static_cast<std::size_t>(k)] : 0.0);
      for (int k = 0; k <= c.d; ++k) out << ',' << (t.covered ? t.T_iso[static_cast<std::size_t>(k)] : 0.0);
      for (const LambdaStats& l : r.stats.per_lambda) {
        out << ',' << t.count(c.k, l.r) << ',' << t.count_pos(c.k, l.r) << ',' << t.count_neg(c.k, l.r);
      }
      out << ',' << t.invariants.violations << '\n';
    }
  }
  write_curves(r.stats, dir, r.config.k);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_failure, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io_failure, path + ": " + e.what());
  }
}

}  // namespace tml
