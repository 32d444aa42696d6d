// Command line front end: run, estimate-dk, verify-bp, report.

#include "tml/experiment.hpp"
#include "tml/limit_theory.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using json = nlohmann::json;

constexpr int kPass = 0;
constexpr int kError = 1;
constexpr int kStatFail = 2;

struct Flags {
  std::string config;
  std::optional<int> d, k, trials, workers, r_grid, dump_trial;
  std::optional<double> n, r, r_max;
  std::vector<double> lambdas;
  std::optional<std::uint64_t> seed, samples;
  std::string out, complex, in;
  double R = 0.1;
  double t0 = 0.5;
};

void common_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config file; flags override its values");
  app->add_option("--d", f.d, "ambient dimension");
  app->add_option("--k", f.k, "face dimension / homology degree");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--workers", f.workers, "OpenMP threads (TML_WORKERS if absent)");
  app->add_option("--out", f.out, "output directory or file");
}

int env_workers() {
  const char* w = std::getenv("TML_WORKERS");
  if (!w || !*w) return -1;
  try {
    return std::stoi(w);
  } catch (const std::exception&) {
    throw tml::Error(tml::ErrorKind::config, std::string("TML_WORKERS is not an integer: ") + w);
  }
}

tml::ExperimentConfig merged_config(const Flags& f) {
  tml::ExperimentConfig c;
  if (!f.config.empty()) c = tml::config_from_json(tml::read_json(f.config), c);
  if (const int w = env_workers(); w >= 0) c.workers = w;
  if (f.d) c.d = *f.d;
  if (f.k) c.k = *f.k;
  if (f.n) c.n = *f.n;
  if (!f.lambdas.empty()) c.lambdas = f.lambdas;
  if (f.r) c.r = *f.r;
  if (f.trials) c.trials = *f.trials;
  if (f.seed) c.seed = *f.seed;
  if (f.workers) c.workers = *f.workers;
  if (f.r_grid) c.r_grid = *f.r_grid;
  if (f.r_max) c.r_max = *f.r_max;
  if (f.samples) c.dk_samples = *f.samples;
  if (!f.complex.empty()) c.complex = tml::config_from_json(json{{"complex", f.complex}}).complex;
  if (!f.out.empty()) c.out = f.out;
  return c;
}

void print_json(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream o(out);
  if (!o) throw tml::Error(tml::ErrorKind::io_failure, "cannot write " + out);
  o << j.dump(2) << '\n';
}

void dump_trial(const tml::ExperimentResult& r, int index, const std::string& dir) {
  if (index < 0 || index >= static_cast<int>(r.trials.size())) {
    throw tml::Error(tml::ErrorKind::config, "--dump-trial out of range");
  }
  const tml::ExperimentConfig& c = r.config;
  const tml::TrialSpec spec = tml::make_trial_spec(c);
  const tml::TorusPointCloud cloud = tml::sample(c.n, c.d, r.trials[static_cast<std::size_t>(index)].seed, c.r_max);
  const tml::Filtration f = tml::build_trial_filtration(spec, cloud);
  std::vector<tml::CriticalFace> cr = tml::detect_critical_faces(f, cloud);
  const tml::Persistence p = tml::reduce_persistence(f);
  tml::assign_signs(cr, p);
  const std::filesystem::path base = std::filesystem::path(dir) / ("trial_" + std::to_string(index));
  std::filesystem::create_directories(base);
  tml::write_points_csv(cloud, (base / "points.csv").string());
  tml::write_filtration_csv(f, (base / "filtration.csv").string());
  auto open = [](const std::filesystem::path& p) {
    std::ofstream o(p);
    if (!o) throw tml::Error(tml::ErrorKind::io_failure, "cannot write " + p.string());
    return o;
  };
  std::ofstream cf = open(base / "critical_faces.csv");
  tml::write_critical_faces_csv(cr, c.d, cf);
  std::ofstream pf = open(base / "persistence.csv");
  tml::write_persistence_csv(f, p, pf);
}

void print_summary(const tml::AggregateStats& s, int k, std::ostream& os) {
  os << "trials " << s.trials << "  covered " << s.covered << "  rejected " << s.rejected << "  invariant violations "
     << s.invariant_violations << '\n';
  for (const tml::LambdaStats& l : s.per_lambda) {
    os << "lambda " << l.lambda << "  r " << l.r << "  F_" << k << " mean " << l.F.mean << " +- " << l.F.se
       << " (exact " << l.exact_mean << ")  var/mean " << (l.F.mean > 0 ? l.F.var / l.F.mean : 0.0) << "  TV "
       << l.fit.tv << "  P(H) " << l.p_H << " (limit " << l.p_H_limit << ")\n";
  }
  os << "T'_" << s.hitting.k << " mean " << s.hitting.mean << " +- " << s.hitting.se << " (target "
     << s.hitting.target_mean << ", " << s.hitting.law << ")  KS " << s.hitting.ks << "  P(T = T_iso) "
     << s.hitting.iso_equal_freq << '\n';
}

int cmd_run(const Flags& f) {
  tml::ExperimentConfig c = merged_config(f);
  if (std::error_code ec; !c.out.empty() && !std::filesystem::is_directory(c.out, ec)) {
    throw tml::Error(tml::ErrorKind::io_failure, "output directory missing: " + c.out);
  }
  const tml::ExperimentResult r = tml::run_experiment(c);
  if (!c.out.empty()) {
    tml::emit_report(r, c.out);
    if (f.dump_trial) dump_trial(r, *f.dump_trial, c.out);
    print_summary(r.stats, c.k, std::cout);
  } else {
    std::cout << tml::report_json(r).dump(2) << '\n';
  }
  const tml::RunVerdict v = tml::evaluate_run(r);
  for (const std::string& m : v.failures) std::cerr << "FAIL " << m << '\n';
  return v.pass ? kPass : kStatFail;
}

int cmd_estimate(const Flags& f) {
  const tml::ExperimentConfig c = merged_config(f);
  const tml::DkEstimate e = tml::estimate_Dk(c.d, c.k, f.samples.value_or(1000000), c.seed, c.workers);
  print_json({{"d", e.d}, {"k", e.k}, {"samples", e.samples}, {"mean", e.mean}, {"std_error", e.std_error},
              {"seed", e.seed}},
             c.out);
  return kPass;
}

int cmd_verify(const Flags& f) {
  const tml::ExperimentConfig c = merged_config(f);
  const std::uint64_t samples = f.samples.value_or(1000000);
  auto entry = [](const tml::BpCheck& b) {
    return json{{"lhs", b.lhs}, {"lhs_se", b.lhs_se}, {"rhs", b.rhs}, {"rhs_se", b.rhs_se}, {"rel_error", b.rel_error}};
  };
  json j{{"d", c.d}, {"k", c.k}, {"samples", samples}, {"seed", c.seed}, {"R", f.R}, {"t0", f.t0}};
  const tml::BpCheck torus = tml::verify_bp_torus(c.d, c.k, f.R, samples, tml::derive_seed(c.seed, 1),
                                                  tml::BpTestFunction::indicator, c.workers);
  j["torus"] = entry(torus);
  bool pass = torus.rel_error <= 0.02;
  if (c.k >= 2) {
    const tml::BpCheck sphere = tml::verify_bp_sphere(c.k, samples, tml::derive_seed(c.seed, 2), f.t0,
                                                      tml::BpTestFunction::indicator, c.workers);
    j["sphere"] = entry(sphere);
    pass = pass && sphere.rel_error <= 0.02;
  }
  j["pass"] = pass;
  print_json(j, c.out);
  return pass ? kPass : kStatFail;
}

int cmd_report(const Flags& f) {
  if (f.in.empty()) throw tml::Error(tml::ErrorKind::config, "report needs --in <report.json>");
  const json j = tml::read_json(f.in);
  if (!j.contains("schema") || j["schema"] != 1) throw tml::Error(tml::ErrorKind::config, f.in + ": unsupported schema");
  const tml::AggregateStats s = tml::aggregate_from_json(j.at("stats"));
  const int k = j.at("config").at("k").get<int>();
  if (!f.out.empty()) tml::write_curves(s, f.out, k);
  print_summary(s, k, std::cout);
  for (const auto& m : j.value("failures", json::array())) std::cerr << "FAIL " << m.get<std::string>() << '\n';
  return j.value("pass", false) ? kPass : kStatFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo experiments on random Cech complexes of the flat torus"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* run = app.add_subcommand("run", "run an experiment and write its report");
  common_flags(run, f);
  run->add_option("--n", f.n, "Poisson intensity");
  run->add_option("--lambda", f.lambdas, "lambda values (repeatable)");
  run->add_option("--r", f.r, "explicit radius instead of lambda");
  run->add_option("--trials", f.trials, "number of trials");
  run->add_option("--r-grid", f.r_grid, "points on the curve grid");
  run->add_option("--r-max", f.r_max, "filtration cap");
  run->add_option("--complex", f.complex, "delaunay-cech or cech");
  run->add_option("--dk-samples", f.samples, "Monte Carlo samples per D_k");
  run->add_option("--dump-trial", f.dump_trial, "write points, filtration, critical faces and persistence of a trial");

  CLI::App* est = app.add_subcommand("estimate-dk", "Monte Carlo estimate of D_k");
  common_flags(est, f);
  est->add_option("--samples", f.samples, "sample count");

  CLI::App* bp = app.add_subcommand("verify-bp", "Blaschke-Petkantschin self-tests");
  common_flags(bp, f);
  bp->add_option("--samples", f.samples, "sample count");
  bp->add_option("--R", f.R, "radius cutoff of the torus test function");
  bp->add_option("--t0", f.t0, "threshold of the sphere test function");

  CLI::App* rep = app.add_subcommand("report", "re-read a report and regenerate its curves");
  rep->add_option("--in", f.in, "report.json")->required();
  rep->add_option("--out", f.out, "directory for the curve CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kError;
  }
  try {
    if (*run) return cmd_run(f);
    if (*est) return cmd_estimate(f);
    if (*bp) return cmd_verify(f);
    return cmd_report(f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
}
