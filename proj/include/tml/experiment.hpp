#pragma once

// Reproducible Monte Carlo experiments over independent Poisson clouds.

#include "tml/common.hpp"
#include "tml/limit_theory.hpp"
#include "tml/morse_engine.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tml {

inline constexpr const char* kSoftwareVersion = "0.3.0";

enum class ComplexKind { delaunay_cech, cech };

struct ExperimentConfig {
  int d = 2;
  int k = 1;
  double n = 2.0e4;
  std::vector<double> lambdas{0.0};
  /// Explicit radius; overrides lambdas for the counting statistics.
  std::optional<double> r;
  int trials = 100;
  std::uint64_t seed = 1;
  int r_grid = 200;
  double r_max = kDefaultRmax;
  std::string out;
  /// 0 selects the OpenMP default.
  int workers = 0;
  ComplexKind complex = ComplexKind::delaunay_cech;
  std::uint64_t dk_samples = 1000000;
  /// Interval partition of [0, process_t0] for the counting process.
  double process_t0 = 2.0;
  int process_intervals = 4;

  /// Throws config on invalid values and radius_exceeds_rmax when a radius
  /// leaves [0, r_max].
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::json to_json(const ExperimentConfig& c);

struct Rejection {
  std::uint64_t trial = 0;
  int attempt = 0;
  std::uint64_t seed = 0;
  std::string reason;
};

struct InvariantReport {
  std::int64_t violations = 0;
  double max_equidistance = 0.0;
  std::int64_t euler = 0;
  std::vector<std::string> messages;
};

/// Everything kept from a trial. Critical radii are only stored above
/// r_floor; below it no statistic reads them.
struct TrialRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  int attempts = 0;
  std::uint64_t points = 0;
  bool covered = false;
  double r_floor = 0.0;
  /// [dim] ascending radii of positive / negative critical faces.
  std::vector<std::vector<double>> pos, neg;
  /// Aligned with neg: the nearest facet is a positive critical face.
  std::vector<std::vector<char>> neg_paired;
  double coverage = 0.0;
  std::vector<double> T, T_iso;
  std::vector<std::int64_t> never_joined;
  /// [grid index][degree]
  std::vector<std::vector<std::int64_t>> betti;
  InvariantReport invariants;

  std::int64_t count(int dim, double r) const;
  std::int64_t count_pos(int dim, double r) const;
  std::int64_t count_neg(int dim, double r) const;
  PairingFraction pairing(int k, double r) const;
};

struct TrialSpec {
  int d = 2;
  double n = 0.0;
  double r_max = kDefaultRmax;
  ComplexKind complex = ComplexKind::delaunay_cech;
  double r_floor = 0.0;
  std::vector<double> r_grid;
};

TrialSpec make_trial_spec(const ExperimentConfig& c);

/// One trial, resampling degenerate clouds with the next attempt seed.
TrialRecord run_trial(const TrialSpec& spec, std::uint64_t master_seed, std::uint64_t index,
                      std::vector<Rejection>* rejections = nullptr);
/// The filtration a trial uses; falls back to the full Cech complex when the
/// Delaunay cells of a sparse cloud are too large.
Filtration build_trial_filtration(const TrialSpec& spec, const TorusPointCloud& cloud);
/// Runs the trial pipeline on a given cloud.
TrialRecord analyze_cloud(const TrialSpec& spec, const TorusPointCloud& cloud);

struct SampleSummary {
  std::int64_t count = 0;
  double mean = 0.0;
  double var = 0.0;
  double se = 0.0;
};

SampleSummary summarize(std::span<const double> xs);

struct PoissonFit {
  double tv = 0.0;
  double mean_ratio = 0.0;
  double var_ratio = 0.0;
  std::vector<double> pmf;
};

/// TV distance of the empirical law to Poisson(mu), plus mean and variance ratios.
PoissonFit poisson_fit(std::span<const double> samples, double mu);

struct ProcessFit {
  int k = 0;
  double t0 = 0.0;
  std::vector<double> edges;
  std::vector<double> mean, se, expected, var_ratio;
  std::vector<std::vector<double>> corr;
  double max_abs_corr = 0.0;
};

/// Counts of critical k-faces with Delta_{k,n}(rho) in each interval of the
/// partition of [0, t0], across trials.
ProcessFit process_fit(std::span<const TrialRecord> trials, int k, double n, int d, double Dk, double t0,
                       int intervals);

struct HittingFit {
  int k = 0;
  std::string law;
  std::int64_t samples = 0;
  double mean = 0.0;
  double se = 0.0;
  double target_mean = 0.0;
  double ks = 0.0;
  double iso_equal_freq = 0.0;
};

/// T' = exp(-n omega_d T^d + log n + (j-1) log log n), with j = d for
/// k = d-1 and j = k otherwise, against Exponential(D_k) or Gamma(2, D_d).
HittingFit hitting_time_fit(std::span<const TrialRecord> trials, double n, int d, int k, double D);

struct LambdaStats {
  double lambda = 0.0;
  double r = 0.0;
  double r_h = 0.0;
  SampleSummary F, F_pos, F_neg, F_of;
  double exact_mean = 0.0;
  double mu = 0.0;
  PoissonFit fit;
  std::int64_t covered = 0;
  double p_H = 0.0;
  double p_H_limit = 0.0;
  double pairing_fraction = 0.0;
  double pos_eq_neg_freq = 0.0;
};

LambdaStats lambda_stats(std::span<const TrialRecord> trials, const ExperimentConfig& c, double lambda,
                         std::span<const double> Dk);

struct AggregateStats {
  std::int64_t trials = 0;
  std::int64_t covered = 0;
  std::int64_t rejected = 0;
  std::int64_t invariant_violations = 0;
  /// D_1..D_d (index 0 unused).
  std::vector<double> Dk, Dk_se;
  std::vector<LambdaStats> per_lambda;
  HittingFit hitting;
  ProcessFit process;
  std::vector<double> r_grid;
  std::vector<std::vector<double>> betti_mean;  // [degree][grid]
  std::vector<double> F_mean;                   // F_{k,r} on the grid
};

nlohmann::json to_json(const AggregateStats& s);
AggregateStats aggregate_from_json(const nlohmann::json& j);

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialRecord> trials;
  std::vector<Rejection> rejections;
  AggregateStats stats;
};

/// D_1..D_d for the given dimension, deterministic in the seed.
std::vector<DkEstimate> dk_table(int d, std::uint64_t samples, std::uint64_t seed, int workers = 0);

AggregateStats aggregate(const ExperimentConfig& c, std::span<const TrialRecord> trials,
                         std::span<const Rejection> rejections, std::span<const DkEstimate> dk);

/// Trials in parallel under a static schedule; identical output for any worker count.
ExperimentResult run_experiment(const ExperimentConfig& c);
/// Same experiment on one thread.
ExperimentResult run_experiment_serial(const ExperimentConfig& c);

/// Statistical acceptance of a run: invariants and the exact-mean check.
struct RunVerdict {
  bool pass = true;
  std::vector<std::string> failures;
};
RunVerdict evaluate_run(const ExperimentResult& r);

nlohmann::json report_json(const ExperimentResult& r);
/// report.json, trials.csv and the curve CSVs under `dir`. Throws
/// io_failure naming the path when the directory is missing.
void emit_report(const ExperimentResult& r, const std::string& dir);
void write_curves(const AggregateStats& s, const std::string& dir, int k);
nlohmann::json read_json(const std::string& path);

/// Two-sided binomial confidence interval (Clopper-Pearson).
std::pair<double, double> binomial_interval(std::int64_t successes, std::int64_t trials, double level);

}  // namespace tml
